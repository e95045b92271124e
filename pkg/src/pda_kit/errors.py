"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class NumericError(ArithmeticError):
    """A computation received or produced non-finite values."""


class ContractViolation(ValueError):
    """An operation was called outside its documented preconditions."""


class DegenerateWeightsError(ValueError):
    """The effective sample-weight mass is (numerically) zero."""


class IdxFormatError(ValueError):
    """An IDX file is malformed (bad magic number or header)."""
