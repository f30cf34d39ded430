"""Command line for the extractor.

Exit codes: 0 success, 1 unexpected error, 2 missing or unreadable file,
3 malformed or unusable data (bad records, empty tokenization, non-finite
activations), 6 configuration or model-load problems. Failures print one
JSON line {"code", "message"} to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys

from uar_extractor.config import ExtractionConfig
from uar_extractor.errors import (
    ConfigError,
    ExtractorError,
    IoFailure,
    MalformedRecord,
    ModelLoadFailure,
    NonFiniteActivation,
    TokenizationFailure,
)
from uar_extractor.extract import extract_file

_EXIT_CODES = [
    (IoFailure, 2),
    ((MalformedRecord, TokenizationFailure, NonFiniteActivation), 3),
    ((ConfigError, ModelLoadFailure), 6),
]


def _fail(exc: ExtractorError) -> int:
    print(json.dumps({"code": exc.code, "message": exc.message}), file=sys.stderr)
    for types, code in _EXIT_CODES:
        if isinstance(exc, types):
            return code
    return 1


def _config_from_args(args: argparse.Namespace, output_format: str = "jsonl") -> ExtractionConfig:
    return ExtractionConfig(
        model=args.model,
        layer=args.layer,
        batch_size=args.batch_size,
        device=args.device,
        chat_template=args.chat_template,
        output_format=output_format,
        model_tag=args.model_tag,
    )


def cmd_run(args: argparse.Namespace) -> int:
    summary = extract_file(args.items, _config_from_args(args, args.format), args.out)
    print(f"extracted {summary['count']} records at dim {summary['dim']} -> {summary['out']}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:  # pragma: no cover - blocks on uvicorn
    from uar_extractor.service import serve

    serve(_config_from_args(args), host=args.host, port=args.port, log_level=args.log_level)
    return 0


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", required=True, help="model path or identifier")
    p.add_argument("--layer", type=int, default=-1, help="-1 for post-final-norm, else state index")
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--device", default="cpu")
    p.add_argument("--chat-template", action="store_true", help="wrap text in the model's chat template")
    p.add_argument("--model-tag", default="", help="tag recorded in outputs; defaults to the model name")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uar-extract", description="hidden-state extraction")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="extract a JSONL file of text records to a feature file")
    p.add_argument("--items", required=True, help="forged-example or QA-item JSONL")
    p.add_argument("--out", required=True, help="output feature file")
    p.add_argument("--format", default="jsonl", choices=["jsonl", "binary"])
    _add_model_flags(p)
    p.set_defaults(handler=cmd_run)

    p = sub.add_parser("serve", help="host POST /v1/extract and GET /v1/health")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8090)
    p.add_argument("--log-level", default="info", choices=["debug", "info", "warning", "error"])
    _add_model_flags(p)
    p.set_defaults(handler=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ExtractorError as exc:
        return _fail(exc)
    except BrokenPipeError:
        return 0
    except Exception as exc:  # pragma: no cover - last resort
        print(json.dumps({"code": "unexpected", "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
