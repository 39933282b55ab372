class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class DegenerateInputError(ValueError):
    """Input is valid in shape but the operation is undefined on it (zero norm, too short, ...)."""


class UsageError(ValueError):
    """Caller violated a precondition that is not about shapes."""


class NumericalError(ArithmeticError):
    """A NaN or Inf appeared where only finite values are allowed."""


class GenerationError(RuntimeError):
    """Synthetic scene placement failed."""
