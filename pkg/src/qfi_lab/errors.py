"""Exception hierarchy shared by all qfi_lab modules."""


class QfiLabError(Exception):
    """Base class for every error raised by qfi_lab."""


class SingularMetric(QfiLabError):
    """Metric determinant vanishes (within tolerance) at the evaluation point."""


class DimensionMismatch(QfiLabError):
    pass


class OutOfDomain(QfiLabError):
    pass


class UnknownFamily(QfiLabError):
    pass


class MixedMetric(QfiLabError):
    """Symmetry objects from different metric families were combined."""


class UncertifiedSymmetry(QfiLabError):
    pass


class ConditionViolated(QfiLabError):
    """A first-integral candidate fails one of its defining conditions."""

    def __init__(self, message: str, residuals: dict | None = None):
        super().__init__(message)
        self.residuals = residuals or {}


class ZeroLambda(QfiLabError):
    pass


class NonzeroPotential(QfiLabError):
    pass


class NonIntegrable(QfiLabError):
    pass


class NonConvergent(QfiLabError):
    pass


class InfeasibleParams(QfiLabError):
    """Parameters admit no real on-shell configuration (CLI exit code 3)."""


class InfeasibleEnergy(InfeasibleParams):
    pass


class NullDirectionRequired(InfeasibleParams):
    pass


class BranchInfeasible(InfeasibleParams):
    pass


class DegenerateParams(InfeasibleParams):
    pass


class StepSizeUnderflow(QfiLabError):
    """Integrator step collapsed; ``trajectory`` holds the states reached so far."""

    def __init__(self, message: str, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class ConfigError(QfiLabError):
    pass
