"""Exception hierarchy shared by all deimlab modules."""


class DeimlabError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(DeimlabError, ValueError):
    """Operand shapes are incompatible."""


class ParameterError(DeimlabError, ValueError):
    """A scalar parameter is out of its valid range."""


class InputError(DeimlabError, ValueError):
    """Input data violates a precondition (non-finite values, bad mean, ...)."""


class UsageError(DeimlabError, RuntimeError):
    """An API was called in a state where the call makes no sense."""


class ConfigError(DeimlabError, ValueError):
    """Experiment configuration is malformed or contains unknown keys."""


class SingularMatrixError(DeimlabError, ArithmeticError):
    """LU factorisation met a pivot below the singularity threshold."""

    def __init__(self, pivot_index: int, pivot: float, message: str | None = None):
        self.pivot_index = pivot_index
        self.pivot = pivot
        super().__init__(
            message
            or f"matrix is numerically singular at pivot {pivot_index} (|pivot|={abs(pivot):.3e})"
        )


class InstabilityError(DeimlabError, ArithmeticError):
    """A time integration produced non-finite values."""

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"non-finite state at step {step}")


class NonFiniteError(DeimlabError, ArithmeticError):
    """A tape operation produced NaN or Inf."""


class TrainingDivergedError(DeimlabError, ArithmeticError):
    """Training loss became non-finite."""

    def __init__(self, epoch: int):
        self.epoch = epoch
        super().__init__(f"training loss diverged at epoch {epoch}")
