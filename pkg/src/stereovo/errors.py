"""Exception types shared across the package."""


class StereoVOError(Exception):
    """Base class for every error this package raises on purpose."""


class DimensionMismatch(StereoVOError, ValueError):
    """Array shapes disagree with what the operation requires."""


class NonPositiveDepth(StereoVOError, ValueError):
    """Depth must be strictly positive."""


class NonPositiveDisparity(StereoVOError, ValueError):
    """Disparity must be strictly positive to convert to depth."""


class EmptyMask(StereoVOError, ValueError):
    """A mean was requested over zero valid pixels."""


class DegenerateGeometry(StereoVOError, ValueError):
    """Ray parallel to the scene surface, or surface behind the camera."""


class DegenerateConfiguration(StereoVOError, ValueError):
    """Alignment needs at least three non-collinear positions."""


class Divergence(StereoVOError, RuntimeError):
    """Optimization produced a non-finite loss or gradient."""


class LengthMismatch(StereoVOError, ValueError):
    """Two sequences that must run in lockstep have different lengths."""


class TooShort(StereoVOError, ValueError):
    """Reference path is shorter than the smallest evaluation segment."""


class ParseError(StereoVOError, ValueError):
    """A file could not be parsed. Carries the offending line when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = "line %d: %s" % (line, message)
        super().__init__(message)
        self.line = line


class UnsupportedFormat(StereoVOError, ValueError):
    """File magic does not match any supported format."""


class MalformedRotation(StereoVOError, ValueError):
    """A 3x3 block is too far from orthonormal to be a rotation."""
