"""
Feature records on disk
=======================

Build a small labeled feature dataset in memory, write it in both supported
formats, and read it back bitwise-identical.
"""

import tempfile
from pathlib import Path

import numpy as np

from uar.features import (
    FeatureDataset,
    FeatureRecord,
    Label,
    Scenario,
    read_dataset,
    write_dataset,
)

rng = np.random.Generator(np.random.PCG64(7))

records = []
for i in range(8):
    records.append(
        FeatureRecord(
            id=f"demo-{i:03d}",
            vector=rng.standard_normal(16).astype(np.float32),
            scenario=Scenario.TIME,
            label=Label.RETRIEVE if i % 2 == 0 else Label.NO_RETRIEVE,
            text=f"demo question {i}",
        )
    )
dataset = FeatureDataset(dim=16, records=records, provenance="feature_files demo")
print(f"built {len(dataset.records)} records at dim {dataset.dim}")

workdir = Path(tempfile.mkdtemp())

# JSONL keeps everything: text, provenance, exact float bits via hex round trip
jsonl_path = workdir / "demo.jsonl"
write_dataset(dataset, jsonl_path, format="jsonl")
reloaded = read_dataset(jsonl_path)
same = all(a == b for a, b in zip(dataset.records, reloaded.records))
print(f"jsonl round trip bitwise: {same}")
print(f"first line: {jsonl_path.read_text().splitlines()[1][:90]}...")

# the binary format is vectors/ids/tags only; text and provenance are dropped
binary_path = workdir / "demo.uarf"
write_dataset(dataset, binary_path, format="binary")
compact = read_dataset(binary_path)
vectors_match = all(
    a.vector.tobytes() == b.vector.tobytes()
    for a, b in zip(dataset.records, compact.records)
)
print(f"binary vectors bitwise: {vectors_match}")
print(f"binary drops text: {compact.records[0].text is None}")
print(f"sizes: jsonl {jsonl_path.stat().st_size} bytes, binary {binary_path.stat().st_size} bytes")
