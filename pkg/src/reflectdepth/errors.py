"""Exception types raised across the package."""


class ReflectDepthError(Exception):
    """Base class for all package errors."""


class NumericalError(ReflectDepthError):
    """A computation hit a degenerate or divergent state."""


class PointBehindCamera(NumericalError):
    pass


class InvalidDepth(NumericalError):
    pass


class DegeneratePosePair(NumericalError):
    pass


class NoIntersection(NumericalError):
    pass


class NoOverlap(NumericalError):
    """The warp leaves no valid pixel to compare."""


class Divergence(NumericalError):
    pass


class EmptyMask(ReflectDepthError):
    pass


class EmptyRegion(ReflectDepthError):
    pass


class ImageFormatError(ReflectDepthError):
    pass
