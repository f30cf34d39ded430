"""Labeled hidden-state vectors and the two on-disk formats that carry them.

A feature record is one instruction's identity plus the activation vector a
frozen language model produced for it (last layer, last input token by
convention of the extractor that wrote the file). Two interchange formats:

JSONL (human-inspectable)
    One JSON object per line. The first line may be a header object
    ``{"dim": int, "provenance": str}`` (recognized by the absence of an
    ``"id"`` key); files written by this module always include it. Every
    other line is a record::

        {"id": str, "scenario": str|null, "label": "retrieve"|"no_retrieve"|null,
         "text": str|null, "vector": [float, ...]}

Binary (bulk vectors, fixed layout)
    Magic bytes ``UARF``, then little-endian ``u32 version=1``, ``u32 dim``,
    ``u64 count``; per record: ``u32`` id byte length + UTF-8 id, ``u8``
    scenario (0=intent, 1=knowledge, 2=time, 3=self, 255=unspecified), ``u8``
    label (0=no_retrieve, 1=retrieve, 255=unlabeled), then ``dim`` IEEE-754
    32-bit LE floats. The binary layout has no slot for record text or the
    dataset provenance string: both are JSONL-only and are dropped when
    converting to binary.

Vectors are stored and compared at 32-bit precision end to end. Writes are
byte-deterministic for identical inputs.
"""

from __future__ import annotations

import enum
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from uar.errors import (
    DegenerateLabels,
    DimensionMismatch,
    DuplicateId,
    IoFailure,
    MalformedHeader,
    MalformedRecord,
    NonFiniteValue,
    TooFewRecords,
)

MAGIC = b"UARF"
BINARY_VERSION = 1


class Scenario(enum.Enum):
    """Which retrieval-timing criterion a record belongs to."""

    INTENT = "intent"
    KNOWLEDGE = "knowledge"
    TIME = "time"
    SELF = "self"
    UNSPECIFIED = "unspecified"

    @property
    def json_name(self) -> str | None:
        return None if self is Scenario.UNSPECIFIED else self.value


_SCENARIO_CODE = {
    Scenario.INTENT: 0,
    Scenario.KNOWLEDGE: 1,
    Scenario.TIME: 2,
    Scenario.SELF: 3,
    Scenario.UNSPECIFIED: 255,
}
_CODE_SCENARIO = {v: k for k, v in _SCENARIO_CODE.items()}


class Label(enum.Enum):
    NO_RETRIEVE = "no_retrieve"
    RETRIEVE = "retrieve"
    UNLABELED = "unlabeled"

    @property
    def json_name(self) -> str | None:
        return None if self is Label.UNLABELED else self.value


_LABEL_CODE = {Label.NO_RETRIEVE: 0, Label.RETRIEVE: 1, Label.UNLABELED: 255}
_CODE_LABEL = {v: k for k, v in _LABEL_CODE.items()}

# The four trainable criteria, in gate priority order.
CRITERION_SCENARIOS = (Scenario.INTENT, Scenario.KNOWLEDGE, Scenario.TIME, Scenario.SELF)


def scenario_from_json(name: str | None) -> Scenario:
    if name is None:
        return Scenario.UNSPECIFIED
    try:
        return Scenario(name)
    except ValueError:
        raise MalformedRecord(f"unknown scenario {name!r}") from None


def label_from_json(name: str | None) -> Label:
    if name is None:
        return Label.UNLABELED
    try:
        return Label(name)
    except ValueError:
        raise MalformedRecord(f"unknown label {name!r}") from None


@dataclass
class FeatureRecord:
    """One instruction: identity, optional source text, tag, label, vector."""

    id: str
    vector: np.ndarray
    scenario: Scenario = Scenario.UNSPECIFIED
    label: Label = Label.UNLABELED
    text: str | None = None

    def __post_init__(self) -> None:
        self.vector = np.asarray(self.vector, dtype=np.float32)
        if self.vector.ndim != 1:
            raise MalformedRecord(f"record {self.id!r}: vector must be one-dimensional")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FeatureRecord):
            return NotImplemented
        return (
            self.id == other.id
            and self.scenario is other.scenario
            and self.label is other.label
            and self.text == other.text
            and self.vector.shape == other.vector.shape
            # bit-pattern comparison: NaN-safe and rounding-proof
            and bool(np.array_equal(self.vector.view(np.uint32), other.vector.view(np.uint32)))
        )


@dataclass
class FeatureDataset:
    """An ordered, immutable-after-load collection of records sharing one dim."""

    dim: int
    records: list[FeatureRecord] = field(default_factory=list)
    provenance: str = ""

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.dim <= 0:
            raise MalformedHeader(f"dim must be positive, got {self.dim}")
        seen: set[str] = set()
        for rec in self.records:
            if not rec.id:
                raise MalformedRecord("record with empty id")
            if rec.id in seen:
                raise DuplicateId(f"duplicate record id {rec.id!r}")
            seen.add(rec.id)
            if rec.vector.shape[0] != self.dim:
                raise DimensionMismatch(
                    f"record {rec.id!r}: vector length {rec.vector.shape[0]} != dim {self.dim}"
                )
            if not np.all(np.isfinite(rec.vector)):
                raise NonFiniteValue(f"record {rec.id!r}: vector contains NaN or Inf")

    def __len__(self) -> int:
        return len(self.records)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FeatureDataset):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.provenance == other.provenance
            and self.records == other.records
        )

    def label_counts(self) -> dict[Label, int]:
        counts = {label: 0 for label in Label}
        for rec in self.records:
            counts[rec.label] += 1
        return counts

    def matrix(self) -> np.ndarray:
        """Record vectors stacked into an (n, dim) float32 array."""
        if not self.records:
            return np.zeros((0, self.dim), dtype=np.float32)
        return np.stack([rec.vector for rec in self.records])

    def labels_array(self) -> np.ndarray:
        """Integer labels (0=no_retrieve, 1=retrieve); unlabeled records raise."""
        from uar.errors import UnlabeledRecord

        out = np.empty(len(self.records), dtype=np.int64)
        for i, rec in enumerate(self.records):
            if rec.label is Label.UNLABELED:
                raise UnlabeledRecord(f"record {rec.id!r} is unlabeled")
            out[i] = _LABEL_CODE[rec.label]
        return out


# ---------------------------------------------------------------------------
# JSONL encoding
# ---------------------------------------------------------------------------

def _float32_to_json(value: np.float32) -> float:
    # float32 -> float64 is exact, and repr(float64) round-trips, so the
    # nearest float32 of the parsed value is bit-identical to the original.
    return float(value)


def _record_to_json_line(rec: FeatureRecord) -> str:
    obj = {
        "id": rec.id,
        "scenario": rec.scenario.json_name,
        "label": rec.label.json_name,
        "text": rec.text,
        "vector": [_float32_to_json(v) for v in rec.vector],
    }
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def _write_jsonl(ds: FeatureDataset, path: Path) -> None:
    lines = [json.dumps({"dim": ds.dim, "provenance": ds.provenance}, ensure_ascii=False, separators=(",", ":"))]
    lines.extend(_record_to_json_line(rec) for rec in ds.records)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _read_jsonl(path: Path) -> FeatureDataset:
    dim: int | None = None
    provenance = ""
    records: list[FeatureRecord] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise MalformedRecord(f"{path}:{lineno}: expected a JSON object")
            if "id" not in obj:
                if lineno == 1 and "dim" in obj:
                    dim = obj["dim"]
                    provenance = obj.get("provenance") or ""
                    if not isinstance(dim, int) or dim <= 0:
                        raise MalformedHeader(f"{path}:1: header dim must be a positive integer")
                    continue
                raise MalformedRecord(f"{path}:{lineno}: record missing 'id'")
            rec = _record_from_json(obj, path, lineno)
            if dim is None:
                dim = rec.vector.shape[0]
                if dim == 0:
                    raise MalformedRecord(f"{path}:{lineno}: empty vector")
            records.append(rec)
    if dim is None:
        raise MalformedHeader(f"{path}: empty file, dimension unknown")
    return FeatureDataset(dim=dim, records=records, provenance=provenance)


def _record_from_json(obj: dict, path: Path, lineno: int) -> FeatureRecord:
    rid = obj.get("id")
    if not isinstance(rid, str) or not rid:
        raise MalformedRecord(f"{path}:{lineno}: id must be a non-empty string")
    vector = obj.get("vector")
    if not isinstance(vector, list):
        raise MalformedRecord(f"{path}:{lineno}: record {rid!r} missing 'vector'")
    for v in vector:
        if not isinstance(v, (int, float)):
            raise MalformedRecord(f"{path}:{lineno}: record {rid!r} has a non-numeric vector entry")
        if not math.isfinite(v):
            raise NonFiniteValue(f"{path}:{lineno}: record {rid!r} has a non-finite vector entry")
    text = obj.get("text")
    if text is not None and not isinstance(text, str):
        raise MalformedRecord(f"{path}:{lineno}: record {rid!r} text must be a string or null")
    return FeatureRecord(
        id=rid,
        vector=np.asarray(vector, dtype=np.float32),
        scenario=scenario_from_json(obj.get("scenario")),
        label=label_from_json(obj.get("label")),
        text=text,
    )


# ---------------------------------------------------------------------------
# Binary encoding
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<4sIIQ")  # magic, version, dim, count
_REC_FIXED = struct.Struct("<I")   # id byte length


def _write_binary(ds: FeatureDataset, path: Path) -> None:
    parts: list[bytes] = [_HEADER.pack(MAGIC, BINARY_VERSION, ds.dim, len(ds.records))]
    for rec in ds.records:
        id_bytes = rec.id.encode("utf-8")
        parts.append(_REC_FIXED.pack(len(id_bytes)))
        parts.append(id_bytes)
        parts.append(bytes([_SCENARIO_CODE[rec.scenario], _LABEL_CODE[rec.label]]))
        parts.append(rec.vector.astype("<f4", copy=False).tobytes())
    path.write_bytes(b"".join(parts))


def _read_binary(path: Path) -> FeatureDataset:
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise MalformedHeader(f"{path}: truncated header ({len(data)} bytes)")
    magic, version, dim, count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise MalformedHeader(f"{path}: bad magic bytes {magic!r}")
    if version != BINARY_VERSION:
        raise MalformedHeader(f"{path}: unsupported binary version {version}")
    if dim <= 0:
        raise MalformedHeader(f"{path}: header dim must be positive, got {dim}")
    offset = _HEADER.size
    records: list[FeatureRecord] = []
    vec_bytes = 4 * dim
    for index in range(count):
        if offset + _REC_FIXED.size > len(data):
            raise MalformedRecord(f"{path}: truncated record {index} at byte {offset}")
        (id_len,) = _REC_FIXED.unpack_from(data, offset)
        offset += _REC_FIXED.size
        end = offset + id_len + 2 + vec_bytes
        if end > len(data):
            raise MalformedRecord(f"{path}: truncated record {index} at byte {offset}")
        try:
            rid = data[offset : offset + id_len].decode("utf-8")
        except UnicodeDecodeError:
            raise MalformedRecord(f"{path}: record {index} id is not UTF-8 (byte {offset})") from None
        offset += id_len
        scen_code, label_code = data[offset], data[offset + 1]
        offset += 2
        if scen_code not in _CODE_SCENARIO:
            raise MalformedRecord(f"{path}: record {rid!r} has unknown scenario code {scen_code}")
        if label_code not in _CODE_LABEL:
            raise MalformedRecord(f"{path}: record {rid!r} has unknown label code {label_code}")
        vector = np.frombuffer(data, dtype="<f4", count=dim, offset=offset).copy()
        offset += vec_bytes
        if not np.all(np.isfinite(vector)):
            raise NonFiniteValue(f"{path}: record {rid!r} has a non-finite vector entry")
        records.append(
            FeatureRecord(
                id=rid,
                vector=vector,
                scenario=_CODE_SCENARIO[scen_code],
                label=_CODE_LABEL[label_code],
            )
        )
    if offset != len(data):
        raise MalformedRecord(f"{path}: {len(data) - offset} trailing bytes after record {count - 1}")
    return FeatureDataset(dim=dim, records=records)


# ---------------------------------------------------------------------------
# Public I/O surface
# ---------------------------------------------------------------------------

def detect_format(path: str | Path) -> str:
    """Sniff "binary" vs "jsonl" by magic bytes."""
    with Path(path).open("rb") as fh:
        head = fh.read(4)
    return "binary" if head == MAGIC else "jsonl"


def read_dataset(path: str | Path, format: str | None = None) -> FeatureDataset:
    """Load a feature dataset, auto-detecting the format unless one is forced.

    Raises MalformedHeader / MalformedRecord / DimensionMismatch /
    NonFiniteValue / DuplicateId with the offending record id or byte offset.
    """
    path = Path(path)
    if not path.exists():
        raise IoFailure(f"no such file: {path}")
    fmt = format or detect_format(path)
    if fmt == "jsonl":
        return _read_jsonl(path)
    if fmt == "binary":
        return _read_binary(path)
    raise ValueError(f"unknown format {fmt!r} (expected 'jsonl' or 'binary')")


def write_dataset(ds: FeatureDataset, path: str | Path, format: str = "jsonl") -> None:
    """Write a dataset; byte-deterministic for identical inputs.

    The binary format drops record text and the provenance string (it has no
    slots for them); use JSONL when those must survive.
    """
    ds.validate()
    path = Path(path)
    try:
        if format == "jsonl":
            _write_jsonl(ds, path)
        elif format == "binary":
            _write_binary(ds, path)
        else:
            raise ValueError(f"unknown format {format!r} (expected 'jsonl' or 'binary')")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------

def split_dataset(
    ds: FeatureDataset,
    valid_fraction: float = 0.10,
    seed: int = 0,
    stratify: bool = True,
) -> tuple[FeatureDataset, FeatureDataset]:
    """Partition into (train, valid), deterministic for a given seed.

    With ``stratify`` (the default) records are grouped by label and each
    group is split at ``valid_fraction``, so both sides see both labels; each
    label group then needs at least 2 records. The default fraction is 0.10.
    """
    if not 0.0 < valid_fraction < 1.0:
        raise ValueError(f"valid_fraction must be in (0,1), got {valid_fraction}")
    n = len(ds.records)
    if n < 10:
        raise TooFewRecords(f"need at least 10 records to split, got {n}")

    groups: dict[Label, list[int]]
    if stratify:
        groups = {}
        for i, rec in enumerate(ds.records):
            groups.setdefault(rec.label, []).append(i)
        labeled = [lab for lab in (Label.RETRIEVE, Label.NO_RETRIEVE) if lab in groups]
        if len(labeled) < 2 and Label.UNLABELED not in groups:
            missing = {Label.RETRIEVE, Label.NO_RETRIEVE} - set(groups)
            raise DegenerateLabels(
                f"stratified split requires both labels; missing {[m.value for m in missing]}"
            )
        for lab, idxs in groups.items():
            if len(idxs) < 2:
                raise DegenerateLabels(
                    f"label {lab.value!r} has {len(idxs)} record(s); need >= 2 to stratify"
                )
    else:
        groups = {Label.UNLABELED: list(range(n))}

    rng = np.random.Generator(np.random.PCG64(seed))
    valid_idx: list[int] = []
    for lab in sorted(groups, key=lambda l: l.value):
        idxs = np.array(groups[lab])
        perm = rng.permutation(len(idxs))
        k = int(round(len(idxs) * valid_fraction))
        k = min(max(k, 1), len(idxs) - 1)
        valid_idx.extend(int(i) for i in idxs[perm[:k]])

    valid_set = set(valid_idx)
    train_recs = [ds.records[i] for i in range(n) if i not in valid_set]
    valid_recs = [ds.records[i] for i in range(n) if i in valid_set]
    return (
        FeatureDataset(dim=ds.dim, records=train_recs, provenance=ds.provenance),
        FeatureDataset(dim=ds.dim, records=valid_recs, provenance=ds.provenance),
    )
