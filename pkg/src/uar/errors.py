"""Exception taxonomy shared by every module.

Each exception carries a stable machine-readable ``code`` (snake_case) used by
the CLI for exit-code mapping and error lines, and by the HTTP service for
error bodies. Messages name the offending record id, byte offset, or file
wherever one exists.
"""

from __future__ import annotations


class UarError(Exception):
    """Base class for all errors raised by this package."""

    code = "error"

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


# -- data / format errors -------------------------------------------------

class MalformedHeader(UarError):
    code = "malformed_header"


class MalformedRecord(UarError):
    code = "malformed_record"


class DimensionMismatch(UarError):
    code = "dimension_mismatch"


class NonFiniteValue(UarError):
    code = "non_finite_value"


class DuplicateId(UarError):
    code = "duplicate_id"


class IoFailure(UarError):
    code = "io_failure"


class SchemaVersionUnsupported(UarError):
    code = "schema_version_unsupported"


class CorruptPayload(UarError):
    code = "corrupt_payload"


# -- dataset-shape errors --------------------------------------------------

class TooFewRecords(UarError):
    code = "too_few_records"


class DegenerateLabels(UarError):
    code = "degenerate_labels"


class UnlabeledRecord(UarError):
    code = "unlabeled_record"


class EmptyPool(UarError):
    code = "empty_pool"


class PoolTooSmall(UarError):
    code = "pool_too_small"


class EmptyIntentList(UarError):
    code = "empty_intent_list"


class OverlapWithTraining(UarError):
    code = "overlap_with_training"

    def __init__(self, ids: list[str]):
        self.ids = list(ids)
        super().__init__(f"drawn items overlap the training exclusion set: {sorted(self.ids)}")


class UnbalancedSubtask(UarError):
    code = "unbalanced_subtask"


class MissingVerdictInputs(UarError):
    code = "missing_verdict_inputs"


# -- gating errors ----------------------------------------------------------

class EmptyTrace(UarError):
    code = "empty_trace"


# -- client errors ----------------------------------------------------------

class ClientFailure(UarError):
    code = "client_failure"

    def __init__(self, item_id: str, message: str):
        self.item_id = item_id
        super().__init__(f"client failure for {item_id!r}: {message}")


class RetrieverFailure(UarError):
    code = "retriever_failure"


class GeneratorFailure(UarError):
    code = "generator_failure"


class MarkerNotFound(UarError):
    code = "marker_not_found"


# -- configuration errors ----------------------------------------------------

class ConfigError(UarError):
    code = "config_error"
