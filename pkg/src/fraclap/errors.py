"""Exception hierarchy; the CLI maps these onto exit codes."""


class FraclapError(Exception):
    exit_code = 3


class ValidationError(FraclapError, ValueError):
    exit_code = 2


class MeshFormatError(ValidationError):
    """Malformed mesh file; message carries the offending line number."""


class MeshValidationError(ValidationError):
    """Mesh parsed but violates an invariant."""


class MemoryBudgetError(ValidationError):
    """Requested problem exceeds the configured size cap."""


class NumericalError(FraclapError, ArithmeticError):
    """Factorization failure, solver stagnation, inconsistent error radicand."""
