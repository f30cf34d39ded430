"""Error vocabulary for the extractor; every failure carries a stable code."""


class ExtractorError(Exception):
    code = "error"

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class ModelLoadFailure(ExtractorError):
    code = "model_load_failure"


class TokenizationFailure(ExtractorError):
    """A specific input produced no usable tokens; carries the record id."""

    code = "tokenization_failure"

    def __init__(self, item_id: str, message: str):
        super().__init__(message)
        self.item_id = item_id


class NonFiniteActivation(ExtractorError):
    """The model emitted NaN or infinity for a specific record."""

    code = "non_finite_activation"

    def __init__(self, item_id: str, message: str):
        super().__init__(message)
        self.item_id = item_id


class MalformedRecord(ExtractorError):
    code = "malformed_record"


class IoFailure(ExtractorError):
    code = "io_failure"


class ConfigError(ExtractorError):
    code = "config_error"
