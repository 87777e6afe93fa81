"""Exception taxonomy shared by every module.

The CLI maps these onto exit codes, so new failure modes should reuse an
existing class (or subclass one) rather than raising bare ValueError.
"""


class EngineError(Exception):
    """Base class for all errors raised by this package."""


class NumericDomainError(EngineError):
    """An input contains NaN/Inf or is otherwise outside the numeric domain."""


class DegenerateInputError(EngineError):
    """Structurally valid input that the operation cannot act on
    (zero-norm vector, empty sample set, zero-variance differences)."""


class ShapeError(EngineError):
    """Array dimensions are inconsistent with the operation's contract."""


class FormatError(EngineError):
    """A manifest or array file is malformed (bad key, bad size, bad value)."""


class IntegrityError(EngineError):
    """Data parses but violates a cross-array consistency invariant."""


class ConfigError(EngineError):
    """A configuration value or run request is invalid."""


class DivergenceError(EngineError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


class UndefinedConditionalError(EngineError):
    """A conditional probability was requested for a zero-probability event."""
