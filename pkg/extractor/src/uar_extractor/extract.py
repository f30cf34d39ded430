"""File-mode extraction: text records in, a feature file out."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

from uar_extractor.config import ExtractionConfig
from uar_extractor.errors import MalformedRecord
from uar_extractor.records import FeatureRow, TextRecord, read_text_records, write_features
from uar_extractor.runner import HiddenStateModel


def extract_records(
    records: Sequence[TextRecord],
    model: HiddenStateModel,
) -> list[FeatureRow]:
    """One vector per record, ids/tags/labels carried through unchanged."""
    rows = []
    for record in records:
        rows.append(
            FeatureRow(
                id=record.id,
                scenario=record.scenario,
                label=record.label,
                text=record.text,
                vector=model.vector(record.text, item_id=record.id),
            )
        )
    return rows


def extract_file(
    items_path: str | Path,
    config: ExtractionConfig,
    out_path: str | Path,
    model: HiddenStateModel | None = None,
) -> dict:
    """Run extraction over a JSONL file of text records; returns a summary."""
    records = read_text_records(items_path)
    if not records:
        raise MalformedRecord(f"{items_path}: no text records to extract")
    if model is None:
        model = HiddenStateModel(config)
    rows = extract_records(records, model)
    write_features(out_path, model.hidden_size, model.provenance, rows, config.output_format)
    return {
        "count": len(rows),
        "dim": model.hidden_size,
        "model_tag": model.model_tag,
        "out": str(out_path),
    }
