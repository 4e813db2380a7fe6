"""Exception types shared across the package."""


class AneuSegError(Exception):
    """Base class for all package errors."""


class OutOfBounds(AneuSegError):
    """A sample point lies outside the sampleable region of a volume."""


class InvalidParam(AneuSegError):
    """A parameter record violates one of its invariants."""


class RvolError(AneuSegError):
    """Malformed RVOL file."""


class SpecInvalid(AneuSegError):
    """A phantom specification violates its invariants."""


class SeedBelowThreshold(AneuSegError):
    """A path seed voxel is darker than the lumen floor."""


class NoPath(AneuSegError):
    """The end voxel is unreachable through voxels with finite cost."""


class TooShort(AneuSegError):
    """Polyline too short to resample at the requested spacing."""


class DegeneratePath(AneuSegError):
    """Consecutive path points coincide; tangents are undefined."""


class CenterBelowThreshold(AneuSegError):
    """Contour center sample is below the lumen threshold."""


class GeometryMismatch(AneuSegError):
    """Two contour stacks disagree in ray count or slice count."""


class DegenerateStack(AneuSegError):
    """Contour stack has too few contours or rays to triangulate."""


class NonWatertight(AneuSegError):
    """Mesh is not a closed 2-manifold."""


class GridMismatch(AneuSegError):
    """Two grids differ in dims, spacing or origin."""


class EmptyMask(AneuSegError):
    """Operation requires a non-empty mask."""


class LengthMismatch(AneuSegError):
    """Contour stack and centerline lengths disagree."""


class SliceOutOfRange(AneuSegError):
    """Requested slice index is outside the volume."""


class BothEmpty(AneuSegError):
    """Dice is undefined for two empty masks."""


class EmptyReference(AneuSegError):
    """Surface statistics require a non-empty reference."""


class ConfigError(AneuSegError):
    """Pipeline configuration failed validation."""


class PipelineStageError(AneuSegError):
    """Wraps an error raised inside a named pipeline stage."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}': {cause}")
        self.stage = stage
        self.cause = cause
