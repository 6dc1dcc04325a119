"""Exception hierarchy shared by all modules."""


class SymperturbError(Exception):
    """Base class for every error raised by the package."""


class StencilOutsideDomain(SymperturbError):
    pass


class SingularJacobian(SymperturbError):
    pass


class NoFeasiblePlateau(SymperturbError):
    pass


class NewtonDivergence(SymperturbError):
    pass


class NondegeneracyViolation(SymperturbError):
    pass


class ClosednessViolation(SymperturbError):
    pass


class QuadratureInconsistency(SymperturbError):
    pass


class InvalidDiskDiffeo(SymperturbError):
    pass


class DeltaTooLarge(SymperturbError):
    """The perturbation is outside the certified perturbative regime.

    ``largest_certified`` holds the largest amplitude factor (relative to the
    requested perturbation) for which every certificate passed, or 0.0.
    """

    def __init__(self, message, largest_certified=0.0):
        super().__init__(message)
        self.largest_certified = largest_certified


class NotHyperbolic(SymperturbError):
    pass


class NotSymplectic(SymperturbError):
    pass


class DimensionViolation(SymperturbError):
    pass


class NotAContraction(SymperturbError):
    pass


class GraphNotInvariant(NotAContraction):
    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


class ChartInversionFailure(SymperturbError):
    pass


class OrbitsNotSeparated(SymperturbError):
    pass


class GapInfeasible(SymperturbError):
    pass


class AmbiguousMatch(SymperturbError):
    pass


class ConfigInvalid(SymperturbError):
    def __init__(self, message, field=None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field
