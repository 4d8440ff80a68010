"""Exception types raised by chaoskit."""


class ChaosError(Exception):
    """Base class for all chaoskit errors."""


class UnderflowAt(ChaosError):
    """Raised by ``sub_unit`` when the requested slot has multiplicity zero."""

    def __init__(self, slot):
        super().__init__(f"multiplicity at slot {slot} is zero")
        self.slot = slot


class SupportExceeded(ChaosError):
    pass


class IncompatibleGrids(ChaosError):
    pass


class NotFirstOrder(ChaosError):
    pass


class SingularDiagonal(ChaosError):
    pass


class HypothesesUnverifiable(ChaosError):
    pass


class GridMismatch(ChaosError):
    pass


class UnsupportedField(ChaosError):
    pass


class NumericalFailure(ChaosError):
    """Failures that the CLI maps to exit status 2."""


class NegativeVariance(NumericalFailure):
    """The heat-kernel variance became negative: the equation is not parabolic."""

    def __init__(self, t, r):
        super().__init__(f"r(t) = {r:.6g} < 0 at t = {t:.6g}")
        self.t = t
        self.r = r


class UnstableStep(NumericalFailure):
    pass
