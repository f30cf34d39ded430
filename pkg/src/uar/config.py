"""Service configuration with layered precedence:

    CLI flag  >  UAR_* environment variable  >  JSON config file  >  default

Each key documents its environment variable name; the config file is a flat
JSON object using the field names below. Unknown file keys are rejected so
typos fail fast instead of silently falling back to defaults.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Mapping

from uar.errors import ConfigError, IoFailure

_LOG_LEVELS = ("debug", "info", "warning", "error")

# field name -> environment variable
ENV_VARS = {
    "host": "UAR_HOST",
    "port": "UAR_PORT",
    "bundle_dir": "UAR_BUNDLE_DIR",
    "policy": "UAR_POLICY",
    "extractor_url": "UAR_EXTRACTOR_URL",
    "retriever_url": "UAR_RETRIEVER_URL",
    "generator_url": "UAR_GENERATOR_URL",
    "max_body_bytes": "UAR_MAX_BODY_BYTES",
    "log_level": "UAR_LOG_LEVEL",
    "model_tag": "UAR_MODEL_TAG",
}

_INT_FIELDS = ("port", "max_body_bytes")


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    bundle_dir: str = ""
    policy: str = "uar_tree"
    extractor_url: str | None = None
    retriever_url: str | None = None
    generator_url: str | None = None
    max_body_bytes: int = 1_048_576
    log_level: str = "info"
    model_tag: str = ""

    def __post_init__(self) -> None:
        if not 1 <= self.port <= 65535:
            raise ConfigError(f"port must be in [1, 65535], got {self.port}")
        if self.max_body_bytes < 1:
            raise ConfigError(f"max_body_bytes must be positive, got {self.max_body_bytes}")
        if self.log_level not in _LOG_LEVELS:
            raise ConfigError(f"log_level must be one of {_LOG_LEVELS}, got {self.log_level!r}")


def _coerce(name: str, value):
    if value is None:
        return None
    if name in _INT_FIELDS:
        try:
            return int(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{name} must be an integer, got {value!r}") from None
    if not isinstance(value, str):
        raise ConfigError(f"{name} must be a string, got {value!r}")
    return value


def _from_file(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise IoFailure(f"no such config file: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: config file is not valid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config file must hold a JSON object")
    known = {f.name for f in fields(ServiceConfig)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {unknown}")
    return doc


def load_service_config(
    cli: Mapping | None = None,
    env: Mapping | None = None,
    config_file: str | Path | None = None,
) -> ServiceConfig:
    """Merge the four layers; later layers win only where they supply a value.

    ``cli`` holds only flags the user actually passed (value None = absent).
    """
    env = os.environ if env is None else env
    merged: dict = {}
    if config_file is not None:
        for name, value in _from_file(config_file).items():
            if value is not None:
                merged[name] = _coerce(name, value)
    for name, var in ENV_VARS.items():
        if var in env:
            merged[name] = _coerce(name, env[var])
    if cli:
        known = {f.name for f in fields(ServiceConfig)}
        for name, value in cli.items():
            if name not in known:
                raise ConfigError(f"unknown config key {name!r}")
            if value is not None:
                merged[name] = _coerce(name, value)
    return ServiceConfig(**merged)
