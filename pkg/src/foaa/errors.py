"""Exception hierarchy shared across the package."""


class FoaaError(Exception):
    """Base class for all package errors."""


class DimensionError(FoaaError):
    """Operand shapes are incompatible for the requested operation."""


class ContractError(FoaaError):
    """A caller violated an operation's contract (bad label, non-scalar loss, ...)."""


class ConfigurationError(FoaaError):
    """A configuration object is internally inconsistent or degenerate."""


class EvaluationError(FoaaError):
    """A function under numerical inspection produced a non-finite value."""


class NumericError(FoaaError):
    """Training or evaluation hit a non-finite intermediate; names the first bad op."""


class FormatError(FoaaError):
    """A serialized artifact has an unknown magic, version, dtype, or is truncated."""
