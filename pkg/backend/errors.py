from typing import Any, Optional


class NeckFlowError(Exception):
    """Base class for all NeckFlow failures."""


class ConfigError(NeckFlowError, ValueError):
    """Invalid run configuration."""


class ProfileDomainError(NeckFlowError, ValueError):
    """Profile queried outside its domain or built from invalid parameters."""


class GraphConditionError(NeckFlowError, ValueError):
    """Support profile is not a graph over the rotation axis on the window."""


class AxisRegularityError(NeckFlowError, ValueError):
    """Nonzero slope supplied at the rotation axis."""


class DegenerateDomainError(NeckFlowError, ValueError):
    """Boundary height sits on a pinch point, so the disk has zero radius."""


class PreconditionError(NeckFlowError, ValueError):
    """Inputs do not satisfy an operation's preconditions."""


class NotPinchingError(NeckFlowError, ValueError):
    """Boundary radius is not decreasing over the fit window."""


class InsufficientDataError(NeckFlowError, ValueError):
    """Too few usable records for a fit."""


class StepFailure(NeckFlowError, RuntimeError):
    """Time step produced non-finite values or the boundary projection diverged."""

    def __init__(self, message: str, snapshot: Optional[Any] = None):
        super().__init__(message)
        self.snapshot = snapshot


class ComparisonFailure(NeckFlowError, RuntimeError):
    """Two initially ordered flows crossed."""

    def __init__(self, message: str, t: Optional[float] = None):
        super().__init__(message)
        self.t = t
