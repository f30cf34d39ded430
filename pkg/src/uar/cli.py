"""Command-line operator surface: train, forge, bench, decide, serve.

Exit codes (stable, machine-checkable):
    0  success
    1  unexpected internal failure
    2  missing or unreadable file
    3  malformed data, payload, or schema
    4  degenerate, unbalanced, or insufficient data
    5  external client (LLM/retriever/judge) failure
    6  bad configuration or flags

Every failure prints one JSON line to stderr: {"code": ..., "message": ...}.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from uar import errors
from uar.bench import emit_report, eval_ar_bench
from uar.classifier import TrainConfig, save_file, train
from uar.config import load_service_config
from uar.features import CRITERION_SCENARIOS, read_dataset, scenario_from_json
from uar.forge import (
    BenchPools,
    build_ar_bench,
    forge_intent_aware,
    forge_knowledge_aware,
    forge_self_aware,
    forge_time_aware,
    label_self_knowledge,
    read_intents,
    read_qa_items,
    write_forged,
)
from uar.gate import GateBundle, TreePolicy, policy_from_string
from uar.rag import HttpGenerator

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_IO = 2
EXIT_FORMAT = 3
EXIT_DATA = 4
EXIT_CLIENT = 5
EXIT_CONFIG = 6

_EXIT_CODES = [
    (errors.IoFailure, EXIT_IO),
    (errors.ConfigError, EXIT_CONFIG),
    (
        (
            errors.MalformedHeader,
            errors.MalformedRecord,
            errors.CorruptPayload,
            errors.SchemaVersionUnsupported,
            errors.DimensionMismatch,
            errors.NonFiniteValue,
            errors.DuplicateId,
        ),
        EXIT_FORMAT,
    ),
    (
        (
            errors.TooFewRecords,
            errors.DegenerateLabels,
            errors.UnlabeledRecord,
            errors.EmptyPool,
            errors.PoolTooSmall,
            errors.EmptyIntentList,
            errors.OverlapWithTraining,
            errors.UnbalancedSubtask,
            errors.MissingVerdictInputs,
            errors.EmptyTrace,
        ),
        EXIT_DATA,
    ),
    (
        (errors.ClientFailure, errors.RetrieverFailure, errors.GeneratorFailure, errors.MarkerNotFound),
        EXIT_CLIENT,
    ),
]


def _exit_code_for(error: errors.UarError) -> int:
    for types, code in _EXIT_CODES:
        if isinstance(error, types):
            return code
    return EXIT_UNEXPECTED


def _fail(error: errors.UarError) -> int:
    print(json.dumps({"code": error.code, "message": error.message}), file=sys.stderr)
    return _exit_code_for(error)


# ---------------------------------------------------------------------------
# subcommand handlers
# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    train_ds = read_dataset(args.train)
    valid_ds = read_dataset(args.valid)
    cfg = TrainConfig(
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        epochs=args.epochs,
        seed=args.seed,
        optimizer=args.optimizer,
    )
    scenario = scenario_from_json(args.scenario) if args.scenario else None
    clf = train(train_ds, valid_ds, cfg, scenario=scenario)
    meta = clf.training_meta
    for i, (acc, loss) in enumerate(
        zip(meta["epoch_validation_accuracy"], meta["epoch_train_loss"]), start=1
    ):
        print(f"epoch {i}/{cfg.epochs} train_loss {loss:.6f} validation_accuracy {acc:.4f}")
    print(f"best_epoch {meta['best_epoch']} validation_accuracy {meta['validation_accuracy']:.4f}")
    save_file(clf, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def _write_split(train_examples, valid_examples, args) -> int:
    write_forged(train_examples, args.out_train)
    write_forged(valid_examples, args.out_valid)
    print(f"wrote {len(train_examples)} train -> {args.out_train}")
    print(f"wrote {len(valid_examples)} valid -> {args.out_valid}")
    return EXIT_OK


def cmd_forge_self_label(args) -> int:
    items = read_qa_items(args.items)
    llm = HttpGenerator(endpoint=args.generator_url, model_tag=args.model_tag)
    result = label_self_knowledge(
        items, llm, k=args.k, seed=args.seed, temperature=args.temperature, parallelism=args.parallelism
    )
    doc = {
        "model_tag": result.model_tag,
        "k": result.k,
        "seed": result.seed,
        "labels": result.labels,
        "failures": result.failures,
    }
    Path(args.out).write_text(json.dumps(doc, ensure_ascii=False, sort_keys=True, indent=2) + "\n")
    print(f"labeled {len(result.labels)} items ({len(result.failures)} failures) -> {args.out}")
    return EXIT_OK


def cmd_forge_self_aware(args) -> int:
    items = read_qa_items(args.items)
    if not Path(args.labels).exists():
        raise errors.IoFailure(f"no such file: {args.labels}")
    doc = json.loads(Path(args.labels).read_text(encoding="utf-8"))
    labels = doc.get("labels", {})
    known = [it for it in items if labels.get(it.id) == "known"]
    unknown = [it for it in items if labels.get(it.id) == "unknown"]
    skipped = len(items) - len(known) - len(unknown)
    train_ex, valid_ex = forge_self_aware(
        known, unknown, seed=args.seed, model_tag=doc.get("model_tag", "")
    )
    print(f"known {len(known)} unknown {len(unknown)} skipped {skipped}")
    return _write_split(train_ex, valid_ex, args)


def cmd_forge_time_aware(args) -> int:
    ts = read_qa_items(args.time_sensitive)
    static = read_qa_items(args.static)
    return _write_split(*forge_time_aware(ts, static, seed=args.seed), args)


def cmd_forge_knowledge_aware(args) -> int:
    non_ki = read_qa_items(args.non_ki)
    ki = read_qa_items(args.ki)
    split = forge_knowledge_aware(non_ki, ki, valid_counts=(args.valid_non_ki, args.valid_ki), seed=args.seed)
    return _write_split(*split, args)


def cmd_forge_intent_aware(args) -> int:
    inputs = read_qa_items(args.inputs)
    intents = read_intents(args.intents)
    train_ex, valid_ex, test_ex = forge_intent_aware(inputs, intents, seed=args.seed)
    _write_split(train_ex, valid_ex, args)
    write_forged(test_ex, args.out_test)
    print(f"wrote {len(test_ex)} test -> {args.out_test}")
    return EXIT_OK


def cmd_forge_ar_bench(args) -> int:
    pools = BenchPools(
        known=read_qa_items(args.known),
        unknown=read_qa_items(args.unknown),
        time_sensitive=read_qa_items(args.time_sensitive),
        non_ki=read_qa_items(args.non_ki),
        intents=read_intents(args.intents),
    )
    exclude: frozenset[str] = frozenset()
    if args.exclude_ids:
        path = Path(args.exclude_ids)
        if not path.exists():
            raise errors.IoFailure(f"no such file: {path}")
        exclude = frozenset(line.strip() for line in path.read_text().splitlines() if line.strip())
    suite = build_ar_bench(
        pools, args.count, seed=args.seed, exclude_ids=exclude, model_tag=args.model_tag
    )
    suite.save_dir(args.out)
    print(f"wrote suite ({args.count} per subtask) -> {args.out}")
    return EXIT_OK


def _load_suite_features(directory: str) -> dict:
    directory = Path(directory)
    if not directory.is_dir():
        raise errors.IoFailure(f"no such directory: {directory}")
    suite = {}
    for scenario in CRITERION_SCENARIOS:
        matches = sorted(directory.glob(f"{scenario.value}.*"))
        if not matches:
            raise errors.IoFailure(f"no {scenario.value}.* feature file in {directory}")
        suite[scenario] = read_dataset(matches[0])
    return suite


def cmd_bench(args) -> int:
    suite = _load_suite_features(args.features_dir)
    bundle = GateBundle.load_dir(args.bundle)
    policy = policy_from_string(args.policy, bundle=bundle)
    report = eval_ar_bench(policy, suite, model_tag=args.model_tag, on_unbalanced=args.on_unbalanced)
    emit_report(report, args.out, format=args.format)
    print(f"overall {report.overall:.4f} -> {args.out}")
    return EXIT_OK


def cmd_decide(args) -> int:
    bundle = GateBundle.load_dir(args.bundle)
    dataset = read_dataset(args.features)
    if args.order or args.eager:
        if args.policy != "uar_tree":
            raise errors.ConfigError("--order and --eager apply only to the uar_tree policy")
        order = None
        if args.order:
            order = tuple(scenario_from_json(name.strip()) for name in args.order.split(","))
        policy = TreePolicy(bundle, order=order, eager=args.eager)
    else:
        policy = policy_from_string(args.policy, bundle=bundle)
    matrix = dataset.matrix()
    out = sys.stdout
    for i in range(matrix.shape[0]):
        decision = policy.decide(vector=matrix[i])
        out.write(decision.to_json() + "\n")
    return EXIT_OK


def cmd_serve(args) -> int:
    from uar.service import serve

    cli_values = {
        "host": args.host,
        "port": args.port,
        "bundle_dir": args.bundle,
        "policy": args.policy,
        "extractor_url": args.extractor_url,
        "max_body_bytes": args.max_body_bytes,
        "log_level": args.log_level,
        "model_tag": args.model_tag,
    }
    config = load_service_config(cli=cli_values, config_file=args.config)
    serve(config)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uar", description="Retrieval-timing gate toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one binary head on labeled feature files")
    p.add_argument("--train", required=True, help="training FeatureDataset (.jsonl or binary)")
    p.add_argument("--valid", required=True, help="validation FeatureDataset")
    p.add_argument("--out", required=True, help="output classifier JSON path")
    p.add_argument("--scenario", default=None, choices=["intent", "knowledge", "time", "self"])
    p.add_argument("--learning-rate", type=float, default=5e-5)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--optimizer", default="adam", choices=["adam", "sgd"])
    p.set_defaults(handler=cmd_train)

    forge = sub.add_parser("forge", help="build criterion training sets and evaluation suites")
    forge_sub = forge.add_subparsers(dest="forge_command", required=True)

    p = forge_sub.add_parser("self-label", help="sample an LLM to label questions known/unknown")
    p.add_argument("--items", required=True)
    p.add_argument("--generator-url", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model-tag", default="")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--parallelism", type=int, default=1)
    p.set_defaults(handler=cmd_forge_self_label)

    p = forge_sub.add_parser("self-aware", help="forge the self-knowledge criterion set")
    p.add_argument("--items", required=True)
    p.add_argument("--labels", required=True, help="output of forge self-label")
    p.add_argument("--out-train", required=True)
    p.add_argument("--out-valid", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=cmd_forge_self_aware)

    p = forge_sub.add_parser("time-aware", help="forge the time-sensitivity criterion set")
    p.add_argument("--time-sensitive", required=True)
    p.add_argument("--static", required=True)
    p.add_argument("--out-train", required=True)
    p.add_argument("--out-valid", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=cmd_forge_time_aware)

    p = forge_sub.add_parser("knowledge-aware", help="forge the knowledge-intensity criterion set")
    p.add_argument("--non-ki", required=True)
    p.add_argument("--ki", required=True)
    p.add_argument("--valid-non-ki", type=int, required=True)
    p.add_argument("--valid-ki", type=int, required=True)
    p.add_argument("--out-train", required=True)
    p.add_argument("--out-valid", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=cmd_forge_knowledge_aware)

    p = forge_sub.add_parser("intent-aware", help="forge the explicit-intent criterion set")
    p.add_argument("--inputs", required=True)
    p.add_argument("--intents", required=True)
    p.add_argument("--out-train", required=True)
    p.add_argument("--out-valid", required=True)
    p.add_argument("--out-test", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=cmd_forge_intent_aware)

    p = forge_sub.add_parser("ar-bench", help="assemble the four balanced evaluation subtasks")
    p.add_argument("--known", required=True)
    p.add_argument("--unknown", required=True)
    p.add_argument("--time-sensitive", required=True)
    p.add_argument("--non-ki", required=True)
    p.add_argument("--intents", required=True)
    p.add_argument("--count", type=int, required=True, help="examples per subtask (multiple of 4)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model-tag", default="")
    p.add_argument("--exclude-ids", default=None, help="file of training ids, one per line")
    p.set_defaults(handler=cmd_forge_ar_bench)

    p = sub.add_parser("bench", help="score a policy on a directory of labeled feature files")
    p.add_argument("--features-dir", required=True, help="directory with intent/knowledge/time/self files")
    p.add_argument("--bundle", required=True, help="classifier bundle directory")
    p.add_argument("--policy", default="uar_tree")
    p.add_argument("--out", required=True)
    p.add_argument("--format", default="json", choices=["json", "markdown"])
    p.add_argument("--model-tag", default="")
    p.add_argument("--on-unbalanced", default="fail", choices=["fail", "warn"])
    p.set_defaults(handler=cmd_bench)

    p = sub.add_parser("decide", help="stream decision JSON lines for a feature file")
    p.add_argument("--bundle", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--policy", default="uar_tree")
    p.add_argument("--eager", action="store_true", help="evaluate all four heads for diagnostics")
    p.add_argument("--order", default=None, help="comma-separated criterion order override")
    p.set_defaults(handler=cmd_decide)

    p = sub.add_parser("serve", help="run the HTTP decision service")
    p.add_argument("--bundle", default=None)
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--policy", default=None)
    p.add_argument("--extractor-url", default=None)
    p.add_argument("--max-body-bytes", type=int, default=None)
    p.add_argument("--log-level", default=None, choices=["debug", "info", "warning", "error"])
    p.add_argument("--model-tag", default=None)
    p.add_argument("--config", default=None, help="JSON config file")
    p.set_defaults(handler=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except errors.UarError as exc:
        return _fail(exc)
    except BrokenPipeError:
        return EXIT_OK
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports, not raises
        print(json.dumps({"code": "unexpected", "message": str(exc)}), file=sys.stderr)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
