"""Exception types shared across the package."""


class TnnEigError(Exception):
    """Base class for all package errors."""


class ConfigError(TnnEigError):
    """Invalid run configuration or config file."""


class QuadratureError(TnnEigError):
    """Quadrature rule construction failed or was given bad parameters."""


class NotPositiveDefiniteError(TnnEigError):
    """Cholesky factorization hit a non-positive pivot."""

    def __init__(self, pivot: int, message: str = ""):
        self.pivot = pivot
        super().__init__(message or f"matrix not positive definite at pivot {pivot}")


class NonFiniteError(TnnEigError):
    """A forward evaluation produced inf/nan."""


class DegenerateComponentError(TnnEigError):
    """A tensor-network component collapsed to (numerically) zero norm."""

    def __init__(self, tnn: int, dim: int, component: int):
        self.tnn = tnn
        self.dim = dim
        self.component = component
        super().__init__(
            f"degenerate component: norm below threshold for "
            f"tnn={tnn}, dim={dim}, component={component}"
        )


class TrainingStepError(TnnEigError):
    """A training step failed irrecoverably (carries diagnostics)."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)


class CheckpointError(TnnEigError):
    """Checkpoint file is malformed or incompatible."""
