"""Extraction settings: which model, which activation, and how to emit it."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from uar_extractor.errors import ConfigError

OUTPUT_FORMATS = ("jsonl", "binary")


@dataclass(frozen=True)
class ExtractionConfig:
    """Pins everything that affects the emitted vectors.

    ``layer`` -1 selects the hidden state after the model's final
    normalization; 0 is the embedding output and positive values index the
    per-block states. ``token`` supports only "last": the activation is read
    at the final input token, with over-length inputs truncated from the left
    so that token is genuinely the last one the user wrote.

    ``batch_size`` is an upper bound for backends that can batch without
    changing numerics. The reference torch backend always runs one item per
    forward pass so that file mode and the endpoint emit identical bytes.
    """

    model: str
    layer: int = -1
    token: str = "last"
    batch_size: int = 8
    device: str = "cpu"
    chat_template: bool = False
    output_format: str = "jsonl"
    model_tag: str = ""

    def __post_init__(self) -> None:
        if not self.model:
            raise ConfigError("model identifier must be non-empty")
        if self.layer < -1:
            raise ConfigError(f"layer must be -1 (final norm) or a state index, got {self.layer}")
        if self.token != "last":
            raise ConfigError(f"unsupported token selector {self.token!r} (only 'last')")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.device:
            raise ConfigError("device hint must be non-empty")
        if self.output_format not in OUTPUT_FORMATS:
            raise ConfigError(
                f"unknown output format {self.output_format!r} (expected one of {OUTPUT_FORMATS})"
            )

    @property
    def effective_model_tag(self) -> str:
        return self.model_tag or Path(self.model).name

    @property
    def layer_name(self) -> str:
        return "final_norm" if self.layer == -1 else f"hidden_state_{self.layer}"

    @property
    def provenance(self) -> str:
        template = "on" if self.chat_template else "off"
        return (
            f"extractor model={self.effective_model_tag} layer={self.layer_name} "
            f"token=last truncation=left chat_template={template}"
        )
