"""
Text to feature files
=====================

Build a tiny seeded causal LM on the spot (no downloads), extract hidden-state
vectors for a handful of texts with the companion extractor package, and show
that the gate engine reads the result directly and that the served endpoint
returns bitwise the same vectors.
"""

import json
import tempfile
from pathlib import Path

import numpy as np
import torch
from fastapi.testclient import TestClient
from transformers import GPT2Config, GPT2LMHeadModel

from uar.features import read_dataset

from uar_extractor import ExtractionConfig, HiddenStateModel, extract_file
from uar_extractor.service import create_app

workdir = Path(tempfile.mkdtemp())

# a 2-layer byte-level model, seeded so every run of this script agrees
model_dir = workdir / "tiny_lm"
torch.manual_seed(0)
GPT2LMHeadModel(
    GPT2Config(vocab_size=257, n_positions=64, n_embd=32, n_layer=2, n_head=2,
               bos_token_id=256, eos_token_id=256)
).save_pretrained(model_dir)

keep = (list(range(ord("!"), ord("~") + 1))
        + list(range(ord("\xa1"), ord("\xac") + 1))
        + list(range(ord("\xae"), ord("\xff") + 1)))
units, shift = {}, 0
for b in range(256):
    units[b] = chr(b) if b in keep else chr(256 + shift)
    shift += b not in keep
vocab = {units[b]: b for b in range(256)}
vocab["<|endoftext|>"] = 256
(model_dir / "vocab.json").write_text(json.dumps(vocab, ensure_ascii=False), encoding="utf-8")
(model_dir / "merges.txt").write_text("#version: 0.2\n", encoding="utf-8")
(model_dir / "tokenizer_config.json").write_text(json.dumps({
    "tokenizer_class": "GPT2Tokenizer", "model_max_length": 64,
    "unk_token": "<|endoftext|>", "bos_token": "<|endoftext|>",
    "eos_token": "<|endoftext|>",
}), encoding="utf-8")
print(f"built a local model at {model_dir}")

items_path = workdir / "items.jsonl"
texts = [
    "What is the capital of France?",
    "Who won the match last night?",
    "How many legs does a spider have?",
    "What did the committee decide today?",
]
items_path.write_text(
    "\n".join(
        json.dumps({"id": f"q-{i}", "text": t, "scenario": "self",
                    "label": "no_retrieve" if i % 2 == 0 else "retrieve"})
        for i, t in enumerate(texts)
    ) + "\n",
    encoding="utf-8",
)

config = ExtractionConfig(model=str(model_dir), model_tag="tiny-lm")
model = HiddenStateModel(config)
features_path = workdir / "features.jsonl"
summary = extract_file(items_path, config, features_path, model=model)
print(f"extracted {summary['count']} records at dim {summary['dim']}")

# the gate engine's reader accepts the file as-is, tags intact
dataset = read_dataset(features_path)
print(f"gate reader: dim={dataset.dim}, provenance={dataset.provenance!r}")
for rec in dataset.records:
    print(f"  {rec.id}: scenario={rec.scenario.value}, label={rec.label.value}, "
          f"vector[:3]={np.round(rec.vector[:3].astype(float), 4).tolist()}")

# the served endpoint returns the same bytes the file holds
client = TestClient(create_app(config, model=model))
print(f"health: {client.get('/v1/health').json()}")
matches = 0
for rec in dataset.records:
    doc = client.post("/v1/extract", json={"text": rec.text}).json()
    served = np.asarray(doc["vector"], dtype=np.float32)
    matches += served.tobytes() == rec.vector.tobytes()
print(f"endpoint vectors bitwise equal to the file: {matches}/{len(dataset.records)}")
