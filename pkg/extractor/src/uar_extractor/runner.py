"""Frozen-model forward passes that read one activation vector per text.

Every text gets its own forward pass with batch dimension 1, so a vector
never depends on what else was in flight; file mode and the HTTP endpoint
produce bitwise-identical floats for the same text and config.
"""

from __future__ import annotations

import threading

import numpy as np
import torch

from uar_extractor.config import ExtractionConfig
from uar_extractor.errors import (
    ConfigError,
    ModelLoadFailure,
    NonFiniteActivation,
    TokenizationFailure,
)

try:  # keep stderr clean for CLI use; progress bars add nothing here
    from transformers.utils import logging as _hf_logging

    _hf_logging.disable_progress_bar()
except Exception:  # pragma: no cover
    pass


class HiddenStateModel:
    """A loaded tokenizer/model pair pinned to one extraction config."""

    def __init__(self, config: ExtractionConfig):
        from transformers import AutoModel, AutoTokenizer

        self.config = config
        try:
            self.tokenizer = AutoTokenizer.from_pretrained(config.model, truncation_side="left")
            self.model = AutoModel.from_pretrained(config.model)
            self.model.to(config.device)
            self.model.eval()
        except Exception as exc:
            raise ModelLoadFailure(f"cannot load model {config.model!r}: {exc}") from None

        layers = int(getattr(self.model.config, "num_hidden_layers", 0))
        if config.layer > layers:
            raise ConfigError(
                f"layer {config.layer} out of range: model has states 0..{layers} plus final norm (-1)"
            )
        if config.chat_template and getattr(self.tokenizer, "chat_template", None) is None:
            raise ConfigError(f"model {config.model!r} has no chat template to apply")

        self.hidden_size = int(self.model.config.hidden_size)
        context = getattr(self.model.config, "max_position_embeddings", None)
        self.context_length = int(context or self.tokenizer.model_max_length or 2048)
        self.model_tag = config.effective_model_tag
        self.provenance = config.provenance
        self._lock = threading.Lock()  # one forward at a time; torch parallelizes inside

    def _prepare(self, text: str) -> str:
        if not self.config.chat_template:
            return text
        return self.tokenizer.apply_chat_template(
            [{"role": "user", "content": text}],
            tokenize=False,
            add_generation_prompt=True,
        )

    def encode(self, text: str, item_id: str = ""):
        try:
            encoded = self.tokenizer(
                self._prepare(text),
                truncation=True,
                max_length=self.context_length,
                return_tensors="pt",
            )
        except Exception as exc:
            raise TokenizationFailure(item_id, f"record {item_id!r}: tokenization failed ({exc})") from None
        if encoded["input_ids"].shape[-1] == 0:
            raise TokenizationFailure(item_id, f"record {item_id!r}: text produced no tokens")
        return encoded

    def vector(self, text: str, item_id: str = "") -> np.ndarray:
        """The configured layer's activation at the last input token, float32."""
        encoded = self.encode(text, item_id)
        encoded = {k: v.to(self.config.device) for k, v in encoded.items()}
        with self._lock, torch.no_grad():
            out = self.model(**encoded, output_hidden_states=self.config.layer != -1)
            states = out.last_hidden_state if self.config.layer == -1 else out.hidden_states[self.config.layer]
            vec = states[0, -1, :].to(device="cpu", dtype=torch.float32).numpy().copy()
        if not np.all(np.isfinite(vec)):
            raise NonFiniteActivation(item_id, f"record {item_id!r}: model produced a non-finite activation")
        return vec
