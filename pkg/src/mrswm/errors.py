"""Exception types shared by the solver modules."""


class SolverError(RuntimeError):
    """A numerical run cannot continue."""


class DryStateError(SolverError):
    """Water depth fell to or below the configured floor."""


class HyperbolicityError(SolverError):
    """Eigenvalues left the real axis beyond the configured tolerance."""

    def __init__(self, message: str, ratio: float | None = None,
                 location=None):
        super().__init__(message)
        self.ratio = ratio
        self.location = location


class ConfigError(ValueError):
    """A run configuration failed validation."""
