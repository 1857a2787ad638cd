"""Exception hierarchy shared by all rovo modules."""


class RovoError(Exception):
    """Base class for every error raised by this package."""


class DegenerateInputError(RovoError, ValueError):
    """Input is geometrically degenerate (zero vector, collinear points, ...)."""


class OutOfFovError(RovoError, ValueError):
    """A point or pixel lies outside the lens field of view."""


class DegenerateRigError(DegenerateInputError):
    """Camera centers do not span a plane."""


class SpecError(RovoError, ValueError):
    """Invalid scene or command specification."""


class LowParallaxError(RovoError, ValueError):
    """Triangulation rays are (nearly) parallel."""


class InsufficientDataError(RovoError, ValueError):
    """Not enough correspondences to run an estimator."""


class RansacFailure(RovoError, RuntimeError):
    """RANSAC produced no valid hypothesis."""


class UnderdeterminedError(InsufficientDataError):
    """Too few constraints for the requested optimization."""


class NumericalError(RovoError, ArithmeticError):
    """Non-finite values appeared during optimization."""


class DimensionError(RovoError, ValueError):
    """Array shapes or image resolutions do not match."""


class ParseError(RovoError, ValueError):
    """A file could not be parsed."""
