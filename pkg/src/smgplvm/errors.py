"""Exception hierarchy shared by every module of the package."""


class SmGplvmError(Exception):
    """Base class for all errors raised by this package."""


# linear algebra
class NotPositiveDefinite(SmGplvmError, ValueError):
    pass


class SymmetryViolation(SmGplvmError, ValueError):
    pass


class NoConvergence(SmGplvmError, RuntimeError):
    pass


class NonPositiveSigma(SmGplvmError, ValueError):
    pass


# autodiff
class ShapeMismatch(SmGplvmError, ValueError):
    pass


class UnsupportedPrimitive(SmGplvmError, TypeError):
    pass


class NonScalarOutput(SmGplvmError, ValueError):
    pass


# kernels
class DimensionMismatch(SmGplvmError, ValueError):
    pass


class OddL(SmGplvmError, ValueError):
    pass


class NonPositiveEpsilon(SmGplvmError, ValueError):
    pass


# model / dppca
class EmptyColumn(SmGplvmError, ValueError):
    pass


class InvalidQprime(SmGplvmError, ValueError):
    pass


class NegativeUnderRoot(SmGplvmError, ValueError):
    pass


class NonOrthogonalR(SmGplvmError, ValueError):
    pass


class NonFiniteObjective(SmGplvmError, FloatingPointError):
    """Raised when the ELBO turns NaN/Inf; ``last_good`` holds the last finite state."""

    def __init__(self, message, iteration=None, last_good=None):
        super().__init__(message)
        self.iteration = iteration
        self.last_good = last_good


# data
class KernelNotPD(SmGplvmError, ValueError):
    pass


class RaggedRows(SmGplvmError, ValueError):
    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class NonNumericField(SmGplvmError, ValueError):
    def __init__(self, message, row=None, col=None):
        super().__init__(message)
        self.row = row
        self.col = col


# evaluation
class TooFewPoints(SmGplvmError, ValueError):
    pass


class RankDeficientDesign(SmGplvmError, ValueError):
    pass


class NoHiddenEntries(SmGplvmError, ValueError):
    pass


class ConfigError(SmGplvmError, ValueError):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
