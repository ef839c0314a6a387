"""Exception and warning classes shared across the package."""


class HirelabelError(Exception):
    """Base class for every error raised by this package."""


class TrajectoryError(HirelabelError, ValueError):
    def __init__(self, message, index=None):
        super().__init__(message if index is None else f"record {index}: {message}")
        self.index = index


class DimMismatch(TrajectoryError):
    pass


class NonConsecutiveTime(TrajectoryError):
    pass


class NonFiniteValue(TrajectoryError):
    pass


class ZeroReference(HirelabelError, ZeroDivisionError):
    pass


class InvalidHighAction(HirelabelError, ValueError):
    pass


# control
class SingularInnerMatrix(HirelabelError, ArithmeticError):
    pass


class IndexOutOfHorizon(HirelabelError, IndexError):
    pass


class NonFiniteJacobian(HirelabelError, ArithmeticError):
    pass


# inversion
class NonFiniteLoss(HirelabelError, ArithmeticError):
    pass


class NonFiniteGradient(HirelabelError, ArithmeticError):
    pass


# lp
class NumericalBreakdown(HirelabelError, ArithmeticError):
    pass


class FlowExceedsInventory(HirelabelError, ValueError):
    pass


class InfeasibleReconstruction(HirelabelError, ValueError):
    pass


# envs
class InvalidConfig(HirelabelError, ValueError):
    pass


class ActionOutOfBounds(HirelabelError, ValueError):
    pass


class ConstraintViolation(HirelabelError, ValueError):
    pass


# relabel / learn / cli
class MissingRewardSource(HirelabelError, ValueError):
    pass


class EmptyOutput(HirelabelError, ValueError):
    pass


class EmptyDataset(HirelabelError, ValueError):
    pass


class IncompatibleModel(HirelabelError, ValueError):
    pass


class RankDeficientRegressors(UserWarning):
    """Least-squares regressors do not have full column rank."""


class RankDeficientGain(UserWarning):
    """A matrix that should be invertible was pseudo-inverted instead."""
