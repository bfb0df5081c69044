"""Exception types raised across the package."""


class CEDensityError(Exception):
    """Base class for all package errors."""


class ParameterOutOfDomain(CEDensityError, ValueError):
    pass


class EvaluationEscaped(CEDensityError, ArithmeticError):
    pass


class DegenerateCritical(CEDensityError, ValueError):
    pass


class NotIntervalMap(CEDensityError, ValueError):
    pass


class ZeroDerivativeOnOrbit(CEDensityError, ArithmeticError):
    pass


class TailNotContracting(CEDensityError, ArithmeticError):
    pass


class OrbitTooShort(CEDensityError):
    pass


class InfiniteDistortion(CEDensityError, ArithmeticError):
    pass


class NotInBoundaryClass(CEDensityError):
    pass


class NoSegmentsFound(CEDensityError):
    pass


class DuplicateCenters(CEDensityError, ValueError):
    pass


class NotSpecial(CEDensityError, ValueError):
    pass


class GenerationFailed(CEDensityError):
    pass


class InvalidTheta(CEDensityError, ValueError):
    pass


class DepthInfiniteWarning(UserWarning):
    """A depth breakpoint of one ball coincides with the center of another."""
