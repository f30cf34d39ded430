"""Text records in, feature files out.

The input side reads two JSONL shapes interchangeably: forged training
examples (``{"id", "text", "scenario", "label", ...}``) and bare QA items
(``{"id", "question", ...}``), which arrive untagged and unlabeled.

The output side writes the gate engine's two feature formats byte-exactly,
from this package's own serializers, so the files are the only contract
between the two components.

JSONL: a ``{"dim", "provenance"}`` header line, then one
``{"id", "scenario", "label", "text", "vector"}`` object per record, compact
separators, trailing newline. Binary: magic ``UARF``, little-endian u32
version=1, u32 dim, u64 count, then per record a u32 id length, the UTF-8 id,
one scenario byte (0=intent, 1=knowledge, 2=time, 3=self, 255=untagged), one
label byte (0=no_retrieve, 1=retrieve, 255=unlabeled), and dim 32-bit LE
floats. Binary has no slot for text or provenance.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from uar_extractor.errors import IoFailure, MalformedRecord

SCENARIOS = ("intent", "knowledge", "time", "self")
LABELS = ("no_retrieve", "retrieve")

_SCENARIO_CODE = {"intent": 0, "knowledge": 1, "time": 2, "self": 3, None: 255}
_LABEL_CODE = {"no_retrieve": 0, "retrieve": 1, None: 255}

_MAGIC = b"UARF"
_BINARY_VERSION = 1
_HEADER = struct.Struct("<4sIIQ")
_ID_LEN = struct.Struct("<I")


@dataclass(frozen=True)
class TextRecord:
    """One input to extract: identity, the text itself, optional tags."""

    id: str
    text: str
    scenario: str | None = None
    label: str | None = None


def read_text_records(path: str | Path) -> list[TextRecord]:
    """Parse a forged-example or QA-item JSONL file into text records."""
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise IoFailure(f"cannot read {path}: no such file") from None
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from None

    records: list[TextRecord] = []
    seen: set[str] = set()
    for lineno, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
        if not isinstance(obj, dict):
            raise MalformedRecord(f"{path}:{lineno}: expected a JSON object")

        rid = obj.get("id")
        if not isinstance(rid, str) or not rid:
            raise MalformedRecord(f"{path}:{lineno}: id must be a non-empty string")
        if rid in seen:
            raise MalformedRecord(f"{path}:{lineno}: duplicate id {rid!r}")
        seen.add(rid)

        if "text" in obj:
            text = obj["text"]
            scenario = obj.get("scenario")
            label = obj.get("label")
        elif "question" in obj:
            text = obj["question"]
            scenario = None
            label = None
        else:
            raise MalformedRecord(f"{path}:{lineno}: record {rid!r} has neither 'text' nor 'question'")

        if not isinstance(text, str):
            raise MalformedRecord(f"{path}:{lineno}: record {rid!r} text must be a string")
        if scenario is not None and scenario not in SCENARIOS:
            raise MalformedRecord(f"{path}:{lineno}: record {rid!r} has unknown scenario {scenario!r}")
        if label is not None and label not in LABELS:
            raise MalformedRecord(f"{path}:{lineno}: record {rid!r} has unknown label {label!r}")
        records.append(TextRecord(id=rid, text=text, scenario=scenario, label=label))
    return records


@dataclass(frozen=True)
class FeatureRow:
    """One extracted record, ready for either output format."""

    id: str
    scenario: str | None
    label: str | None
    text: str
    vector: np.ndarray


def _jsonl_record_line(row: FeatureRow) -> str:
    obj = {
        "id": row.id,
        "scenario": row.scenario,
        "label": row.label,
        "text": row.text,
        "vector": [float(v) for v in row.vector],
    }
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def write_features_jsonl(path: str | Path, dim: int, provenance: str, rows: Sequence[FeatureRow]) -> None:
    lines = [json.dumps({"dim": dim, "provenance": provenance}, ensure_ascii=False, separators=(",", ":"))]
    lines.extend(_jsonl_record_line(row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_features_binary(path: str | Path, dim: int, rows: Sequence[FeatureRow]) -> None:
    parts = [_HEADER.pack(_MAGIC, _BINARY_VERSION, dim, len(rows))]
    for row in rows:
        id_bytes = row.id.encode("utf-8")
        parts.append(_ID_LEN.pack(len(id_bytes)))
        parts.append(id_bytes)
        parts.append(bytes([_SCENARIO_CODE[row.scenario], _LABEL_CODE[row.label]]))
        parts.append(row.vector.astype("<f4", copy=False).tobytes())
    Path(path).write_bytes(b"".join(parts))


def write_features(path: str | Path, dim: int, provenance: str, rows: Sequence[FeatureRow], format: str) -> None:
    if format == "jsonl":
        write_features_jsonl(path, dim, provenance, rows)
    else:
        write_features_binary(path, dim, rows)
