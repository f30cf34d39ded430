"""Scores gating policies on balanced criterion feature sets and scores
downstream QA exchange logs; renders both as canonical JSON or Markdown.

Conventions baked in here:
  - retrieve is the positive class for confusion counts
  - subtask accuracy is (tp+tn)/n and the overall line is the unweighted
    mean across the four subtasks (dataset accuracies likewise downstream)
  - balanced single-label sets make accuracy and micro-averaged F1 the same
    number; micro_f1 is implemented independently so tests can check that
  - report JSON is canonical: sorted keys, full-precision floats, trailing
    newline; Markdown rounds to 2 decimals and parenthesizes retrieval rates
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from uar.errors import (
    ConfigError,
    IoFailure,
    MalformedRecord,
    MarkerNotFound,
    MissingVerdictInputs,
    UnbalancedSubtask,
)
from uar.features import CRITERION_SCENARIOS, FeatureDataset, Label, Scenario
from uar.gate import GateBundle, GatePolicy, SinglePolicy, TreePolicy
from uar.rag import (
    RagExchange,
    extract_final_answer,
    lexical_match,
    normalize_answer_text,
)

REPORT_VERSION = 1

SCORING_LEXICAL = "lexical"
SCORING_EXTRACT_THEN_EXACT = "extract_then_exact"
SCORING_JUDGE = "judge"
SCORING_RULES = (SCORING_LEXICAL, SCORING_EXTRACT_THEN_EXACT, SCORING_JUDGE)


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def accuracy_score(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise ConfigError("labels and predictions must be 1-d arrays of equal length")
    if y_true.size == 0:
        raise ConfigError("cannot score an empty dataset")
    return float(np.mean(y_true == y_pred))


def micro_f1(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """Micro-averaged F1 over both classes, from summed per-class counts."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape or y_true.ndim != 1 or y_true.size == 0:
        raise ConfigError("labels and predictions must be nonempty 1-d arrays of equal length")
    tp = fp = fn = 0
    for cls in (0, 1):
        tp += int(np.sum((y_pred == cls) & (y_true == cls)))
        fp += int(np.sum((y_pred == cls) & (y_true != cls)))
        fn += int(np.sum((y_pred != cls) & (y_true == cls)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def confusion_counts(y_true: np.ndarray, y_pred: np.ndarray) -> dict[str, int]:
    """Counts with retrieve (class 1) as the positive class."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    return {
        "tp": int(np.sum((y_pred == 1) & (y_true == 1))),
        "fp": int(np.sum((y_pred == 1) & (y_true == 0))),
        "tn": int(np.sum((y_pred == 0) & (y_true == 0))),
        "fn": int(np.sum((y_pred == 0) & (y_true == 1))),
    }


# ---------------------------------------------------------------------------
# report types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BenchReport:
    per_subtask: dict
    overall: float
    policy: str
    model_tag: str

    def to_json_dict(self) -> dict:
        return {
            "report_version": REPORT_VERSION,
            "per_subtask": self.per_subtask,
            "overall": self.overall,
            "policy": self.policy,
            "model_tag": self.model_tag,
        }


@dataclass(frozen=True)
class DownstreamReport:
    per_dataset: dict
    overall: float

    def to_json_dict(self) -> dict:
        return {
            "report_version": REPORT_VERSION,
            "per_dataset": self.per_dataset,
            "overall": self.overall,
        }


def report_from_subtask_results(per_subtask: dict, policy: str = "", model_tag: str = "") -> BenchReport:
    """Assemble a report from already-computed per-subtask entries; the
    overall line is always the unweighted mean of the subtask accuracies."""
    if not per_subtask:
        raise ConfigError("a report needs at least one subtask entry")
    overall = float(np.mean([entry["accuracy"] for entry in per_subtask.values()]))
    return BenchReport(per_subtask=dict(per_subtask), overall=overall, policy=policy, model_tag=model_tag)


# ---------------------------------------------------------------------------
# criterion-set evaluation
# ---------------------------------------------------------------------------

def _check_balance(name: str, y: np.ndarray, on_unbalanced: str) -> None:
    pos = int(np.sum(y == 1))
    neg = int(y.size - pos)
    if pos != neg:
        message = f"subtask {name!r} is unbalanced: {pos} retrieve vs {neg} no-retrieve"
        if on_unbalanced == "warn":
            warnings.warn(message, stacklevel=3)
        else:
            raise UnbalancedSubtask(message)


def _subtask_entry(policy: GatePolicy, dataset: FeatureDataset, name: str, on_unbalanced: str) -> dict:
    y_true = dataset.labels_array()
    _check_balance(name, y_true, on_unbalanced)
    x = dataset.matrix()
    y_pred = np.array(
        [1 if policy.decide(vector=x[i]).final is Label.RETRIEVE else 0 for i in range(x.shape[0])],
        dtype=np.int64,
    )
    return {
        "accuracy": accuracy_score(y_true, y_pred),
        "confusion": confusion_counts(y_true, y_pred),
    }


def eval_ar_bench(
    policy: GatePolicy,
    suite_features: dict[Scenario, FeatureDataset],
    model_tag: str = "",
    on_unbalanced: str = "fail",
) -> BenchReport:
    """Run one policy over every subtask's labeled vectors."""
    if on_unbalanced not in ("fail", "warn"):
        raise ConfigError(f"on_unbalanced must be 'fail' or 'warn', got {on_unbalanced!r}")
    if not suite_features:
        raise ConfigError("suite_features is empty")
    per_subtask = {}
    for scenario in sorted(suite_features, key=lambda s: s.value):
        per_subtask[scenario.value] = _subtask_entry(
            policy, suite_features[scenario], scenario.value, on_unbalanced
        )
    return report_from_subtask_results(per_subtask, policy=policy.name, model_tag=model_tag)


def eval_single_vs_tree(
    bundle: GateBundle,
    suite_features: dict[Scenario, FeatureDataset],
    on_unbalanced: str = "fail",
) -> dict:
    """Side-by-side accuracy of each standalone head vs the composed cascade,
    each scored on its own subtask."""
    tree = TreePolicy(bundle)
    table = {}
    for scenario in sorted(suite_features, key=lambda s: s.value):
        dataset = suite_features[scenario]
        single = SinglePolicy(bundle.classifiers()[scenario])
        table[scenario.value] = {
            "single_accuracy": _subtask_entry(single, dataset, scenario.value, on_unbalanced)["accuracy"],
            "tree_accuracy": _subtask_entry(tree, dataset, scenario.value, on_unbalanced)["accuracy"],
        }
    return table


# ---------------------------------------------------------------------------
# downstream scoring
# ---------------------------------------------------------------------------

def _exchange_correct(exchange: RagExchange, scoring: str) -> bool:
    if scoring == SCORING_LEXICAL:
        return lexical_match(exchange.generation, exchange.gold_answers)
    if scoring == SCORING_EXTRACT_THEN_EXACT:
        try:
            prediction = extract_final_answer(exchange.generation, mode="after_marker")
        except MarkerNotFound:
            return False
        normalized = normalize_answer_text(prediction)
        return any(normalized == normalize_answer_text(gold) for gold in exchange.gold_answers)
    if scoring == SCORING_JUDGE:
        return exchange.verdict.get("verdict") == "Yes"
    raise ConfigError(f"unknown scoring rule {scoring!r}; expected one of {SCORING_RULES}")


def score_downstream(exchanges: list[RagExchange], scoring: str = SCORING_LEXICAL) -> DownstreamReport:
    """Score a finished exchange log; one report entry per dataset name.

    Judge scoring reads verdicts already attached to the exchanges and
    refuses to run when any are missing.
    """
    if scoring not in SCORING_RULES:
        raise ConfigError(f"unknown scoring rule {scoring!r}; expected one of {SCORING_RULES}")
    if not exchanges:
        raise ConfigError("cannot score an empty exchange list")
    if scoring == SCORING_JUDGE:
        missing = sorted(e.id for e in exchanges if not e.verdict or "verdict" not in e.verdict)
        if missing:
            raise MissingVerdictInputs(
                f"judge scoring needs a verdict on every exchange; missing for {missing}"
            )
    by_dataset: dict[str, list[RagExchange]] = {}
    for exchange in exchanges:
        by_dataset.setdefault(exchange.dataset, []).append(exchange)
    per_dataset = {}
    for name in sorted(by_dataset):
        group = sorted(by_dataset[name], key=lambda e: e.id)
        correct = sum(1 for e in group if _exchange_correct(e, scoring))
        retrieved = sum(1 for e in group if e.decision.final is Label.RETRIEVE)
        per_dataset[name] = {
            "accuracy": correct / len(group),
            "retrieval_rate": retrieved / len(group),
            "n": len(group),
        }
    overall = float(np.mean([entry["accuracy"] for entry in per_dataset.values()]))
    return DownstreamReport(per_dataset=per_dataset, overall=overall)


# ---------------------------------------------------------------------------
# rendering and I/O
# ---------------------------------------------------------------------------

def render_json(report: BenchReport | DownstreamReport) -> str:
    return json.dumps(report.to_json_dict(), ensure_ascii=False, sort_keys=True) + "\n"


def _pct(value: float) -> str:
    return f"{value * 100.0:.2f}"


def render_markdown(report: BenchReport | DownstreamReport) -> str:
    if isinstance(report, BenchReport):
        names = list(report.per_subtask)
        ordered = [s.value for s in CRITERION_SCENARIOS if s.value in report.per_subtask]
        ordered += [n for n in names if n not in ordered]
        header = "| Policy | " + " | ".join(ordered) + " | Overall |"
        rule = "|" + " --- |" * (len(ordered) + 2)
        cells = [_pct(report.per_subtask[name]["accuracy"]) for name in ordered]
        row = f"| {report.policy} | " + " | ".join(cells) + f" | {_pct(report.overall)} |"
        lines = [header, rule, row]
        if report.model_tag:
            lines.append("")
            lines.append(f"Model: {report.model_tag}")
        return "\n".join(lines) + "\n"
    header = "| Dataset | Accuracy (Retrieval %) | n |"
    rule = "| --- | --- | --- |"
    rows = []
    for name, entry in report.per_dataset.items():
        cell = f"{_pct(entry['accuracy'])} ({entry['retrieval_rate'] * 100.0:.1f}%)"
        rows.append(f"| {name} | {cell} | {entry['n']} |")
    lines = [header, rule] + rows + ["", f"Overall: {_pct(report.overall)}"]
    return "\n".join(lines) + "\n"


def emit_report(report: BenchReport | DownstreamReport, path: str | Path, format: str = "json") -> None:
    if format == "json":
        text = render_json(report)
    elif format == "markdown":
        text = render_markdown(report)
    else:
        raise ConfigError(f"unknown report format {format!r}; expected 'json' or 'markdown'")
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write report to {path}: {exc}") from None


def read_report(path: str | Path) -> BenchReport | DownstreamReport:
    path = Path(path)
    if not path.exists():
        raise IoFailure(f"no such file: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedRecord(f"{path}: not valid report JSON ({exc})") from None
    return report_from_json_dict(doc)


def report_from_json_dict(doc: dict) -> BenchReport | DownstreamReport:
    if not isinstance(doc, dict) or doc.get("report_version") != REPORT_VERSION:
        raise MalformedRecord(f"unsupported or missing report_version in {list(doc) if isinstance(doc, dict) else doc!r}")
    if "per_subtask" in doc:
        return BenchReport(
            per_subtask=doc["per_subtask"],
            overall=doc["overall"],
            policy=doc["policy"],
            model_tag=doc["model_tag"],
        )
    if "per_dataset" in doc:
        return DownstreamReport(per_dataset=doc["per_dataset"], overall=doc["overall"])
    raise MalformedRecord("report JSON has neither per_subtask nor per_dataset")
