"""Exception types shared across the package."""


class ToricFlowError(Exception):
    pass


class DomainError(ToricFlowError):
    """A point lies on or outside the polygon boundary where the log part is singular."""


class DegeneracyError(ToricFlowError):
    """Hessian lost positive definiteness."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = None if point is None else tuple(float(c) for c in point)


class FlowStallError(ToricFlowError):
    """Adaptive step size underflowed dt_min."""


class ConfigError(ToricFlowError):
    """Malformed run configuration; message carries field diagnostics."""
