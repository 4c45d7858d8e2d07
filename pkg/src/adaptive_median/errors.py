"""Exception types shared across the package."""


class DomainError(ValueError):
    """An input lies outside the mathematical domain of an operation."""


class ParameterError(ValueError):
    """A privacy or accuracy parameter is out of range."""


class InsufficientDataError(ValueError):
    """Not enough samples for the requested partition or calibration."""

    def __init__(self, message, required=None):
        super().__init__(message)
        self.required = required


class OracleScaleError(ValueError):
    """An exact oracle was asked to enumerate more atoms than it allows."""


class RangeTooLargeError(ValueError):
    """A query's answer grid exceeds the session's declared maximum size."""


class ProtocolError(RuntimeError):
    """A sub-protocol observed responses its contract rules out."""


class BudgetExceeded(RuntimeError):
    """A privacy charge would push the ledger past its target."""


class UpdateBudgetExhausted(RuntimeError):
    """Private multiplicative weights ran out of update rounds."""


class SchemaError(ValueError):
    """A serialized artifact (spec, transcript) is malformed or truncated."""
