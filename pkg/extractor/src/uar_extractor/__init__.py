"""Hidden-state extraction: frozen causal LM activations as feature files."""

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
from uar_extractor.extract import extract_file, extract_records
from uar_extractor.records import FeatureRow, TextRecord, read_text_records, write_features
from uar_extractor.runner import HiddenStateModel
from uar_extractor.service import create_app, serve

__all__ = [
    "ConfigError",
    "ExtractionConfig",
    "ExtractorError",
    "FeatureRow",
    "HiddenStateModel",
    "IoFailure",
    "MalformedRecord",
    "ModelLoadFailure",
    "NonFiniteActivation",
    "TextRecord",
    "TokenizationFailure",
    "create_app",
    "extract_file",
    "extract_records",
    "read_text_records",
    "serve",
    "write_features",
]
