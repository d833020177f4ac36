"""Exception hierarchy shared by the numerical modules."""


class GaitLocusError(Exception):
    """Base class for all library errors."""


class EvaluationError(GaitLocusError):
    """A field returned a non-finite value at a probe point."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class IntegrationError(GaitLocusError):
    """The flow field became non-finite during integration."""

    def __init__(self, message, step_index=None):
        super().__init__(message)
        self.step_index = step_index


class SingularConfigurationError(GaitLocusError):
    """Force balance is ill-conditioned at a shape."""

    def __init__(self, message, shape=None, index=None):
        super().__init__(message)
        self.shape = shape
        self.index = index


class JointLimitError(GaitLocusError):
    """A shape left the admissible joint-angle box."""


class DegenerateConstraintError(GaitLocusError):
    """The constraint gradient vanishes, so the multiplier is undefined."""


class SingularNullSpaceError(GaitLocusError):
    """The Lagrangian Hessian has no null direction at tolerance."""


class StalledProjectionError(GaitLocusError):
    """The projected step vanished (only trivial null directions remain)."""


class InvalidSeedError(GaitLocusError):
    """A seed gait does not satisfy a solver precondition."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class InfeasibleConstraintError(GaitLocusError):
    """The requested displacement level cannot be reached."""


class NotStationaryError(GaitLocusError):
    """Classification was requested at a point that is not stationary."""

    def __init__(self, message, grad_L_norm=None):
        super().__init__(message)
        self.grad_L_norm = grad_L_norm


class InvalidParameterError(GaitLocusError, ValueError):
    """Parameters outside the admissible set of a model."""
