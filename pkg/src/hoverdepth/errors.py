"""Exception hierarchy."""


class HoverDepthError(Exception):
    """Base class for all errors raised by this package."""


class GeometryError(HoverDepthError):
    pass


class NonPositiveDepth(GeometryError):
    pass


class DegeneratePlane(GeometryError):
    pass


class DegenerateConfiguration(GeometryError):
    pass


class RayParallelToPlane(GeometryError):
    pass


class NegativeIntersection(GeometryError):
    pass


class InsufficientSeeds(HoverDepthError):
    pass


class NoInitializedNeighbor(HoverDepthError):
    pass


class EmptyCloud(HoverDepthError):
    pass


class AmbiguousSweep(HoverDepthError):
    """Plane sweep could not single out a depth (textureless patch)."""

    def __init__(self, message, errors=None):
        super().__init__(message)
        self.errors = errors


class UninitializableSegment(HoverDepthError):
    pass


class PatchOutOfBounds(HoverDepthError):
    pass


class NonDecreasingGuard(HoverDepthError):
    pass


class ManifestError(HoverDepthError):
    pass


class NoOverlap(HoverDepthError):
    pass
