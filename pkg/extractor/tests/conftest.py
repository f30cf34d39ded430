import json
from pathlib import Path

import pytest
import torch
from transformers import GPT2Config, GPT2LMHeadModel

from uar_extractor.config import ExtractionConfig
from uar_extractor.runner import HiddenStateModel

CHAT_TEMPLATE = "{% for m in messages %}user: {{ m['content'] }}\n{% endfor %}assistant:"


def _byte_units():
    # the standard byte-level BPE remap: printable latin stays itself, the
    # rest shifts into U+0100.. so every byte is a distinct vocab entry
    keep = (
        list(range(ord("!"), ord("~") + 1))
        + list(range(ord("\xa1"), ord("\xac") + 1))
        + list(range(ord("\xae"), ord("\xff") + 1))
    )
    units, shift = {}, 0
    for b in range(256):
        if b in keep:
            units[b] = chr(b)
        else:
            units[b] = chr(256 + shift)
            shift += 1
    return units


def build_tiny_model(target: Path, seed: int = 0, with_chat_template: bool = True) -> Path:
    """A seeded 2-layer causal LM with a byte-level tokenizer, built offline."""
    torch.manual_seed(seed)
    config = GPT2Config(
        vocab_size=257,
        n_positions=64,
        n_embd=32,
        n_layer=2,
        n_head=2,
        bos_token_id=256,
        eos_token_id=256,
    )
    GPT2LMHeadModel(config).save_pretrained(target)

    units = _byte_units()
    vocab = {units[b]: b for b in range(256)}
    vocab["<|endoftext|>"] = 256
    (target / "vocab.json").write_text(json.dumps(vocab, ensure_ascii=False), encoding="utf-8")
    (target / "merges.txt").write_text("#version: 0.2\n", encoding="utf-8")
    tokenizer_config = {
        "tokenizer_class": "GPT2Tokenizer",
        "model_max_length": 64,
        "unk_token": "<|endoftext|>",
        "bos_token": "<|endoftext|>",
        "eos_token": "<|endoftext|>",
    }
    if with_chat_template:
        tokenizer_config["chat_template"] = CHAT_TEMPLATE
    (target / "tokenizer_config.json").write_text(json.dumps(tokenizer_config), encoding="utf-8")
    return target


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory) -> Path:
    return build_tiny_model(tmp_path_factory.mktemp("tiny_lm"))


@pytest.fixture(scope="session")
def tiny_config(tiny_model_dir) -> ExtractionConfig:
    return ExtractionConfig(model=str(tiny_model_dir), model_tag="tiny-lm")


@pytest.fixture(scope="session")
def tiny_model(tiny_config) -> HiddenStateModel:
    return HiddenStateModel(tiny_config)
