"""Exception hierarchy shared by all modules."""


class AHMError(Exception):
    """Base class for every error raised by this package."""


class NoRoot(AHMError):
    pass


class SingularAtHorizon(AHMError):
    pass


class BelowFloor(AHMError):
    """Sampled function underflows; the decay order is reported as >= cutoff."""


class DegenerateGamma(AHMError):
    pass


class StencilOutOfDomain(AHMError):
    pass


class QuadratureFail(AHMError):
    pass


class FitUnstable(AHMError):
    pass


class RegularityFail(AHMError):
    pass


class Divergent(AHMError):
    """Flux sequence grows with radius (the L1 condition is violated)."""
