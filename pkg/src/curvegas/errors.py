"""Exception hierarchy shared by all modules."""


class CurvegasError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(CurvegasError, ValueError):
    """Invalid user configuration; the message names the offending field."""


class InvalidCurve(CurvegasError, ValueError):
    pass


class NonRegularCurve(InvalidCurve):
    pass


class SelfIntersection(InvalidCurve):
    pass


class InsufficientSmoothness(CurvegasError):
    pass


class DegenerateConfiguration(CurvegasError, ValueError):
    pass


class DomainViolation(CurvegasError, ValueError):
    pass


class StepFailure(CurvegasError, RuntimeError):
    """Raised when reject-and-halve runs out of halvings.

    Attributes
    ----------
    gap : float
        Smallest cyclic gap of the rejected proposal.
    time : float or None
        Simulation time at which the step was attempted.
    trajectory : int or None
        Ensemble index of the failing trajectory.
    """

    def __init__(self, message, gap=float("nan"), time=None, trajectory=None):
        super().__init__(message)
        self.gap = gap
        self.time = time
        self.trajectory = trajectory


class SupportViolation(CurvegasError, ValueError):
    pass


class NonConvergence(CurvegasError, RuntimeError):
    """Gradient flow hit ``max_iter``; ``result`` holds the best iterate."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class StepTooLarge(CurvegasError, RuntimeError):
    pass


class DegeneratePath(CurvegasError, ValueError):
    pass


class OffCurvePath(CurvegasError, ValueError):
    pass


class OffCurvePoint(CurvegasError, ValueError):
    pass
