"""Exception hierarchy shared by all modules."""


class GWError(Exception):
    """Base class for every error raised by gwtail."""


class ZeroOffspringMass(GWError, ValueError):
    pass


class NotNormalized(GWError, ValueError):
    pass


class Subcritical(GWError, ValueError):
    pass


class DomainError(GWError, ValueError):
    """Argument outside the region where the iteration is trusted."""


class DepthExceeded(GWError):
    pass


class ConstantUndefined(GWError):
    pass


class BracketFailure(GWError):
    pass


class Mu1NotSupported(GWError, ValueError):
    pass


class NotMu1(GWError, ValueError):
    pass


class DegenerateLaw(GWError, ValueError):
    pass


class EpsilonTooLarge(GWError, ValueError):
    pass


class QuadratureDiverged(GWError):
    pass


class NonIntegralCopies(GWError, ValueError):
    pass


class CancellationLoss(GWError):
    pass


class DepthOverflow(GWError, OverflowError):
    pass


class BudgetExhausted(GWError):
    pass


class ConfigError(GWError, ValueError):
    pass
