"""Exception types shared across the package."""


class FsflowError(Exception):
    """Base class for all errors raised by this package."""


class HorizonError(FsflowError):
    """Pixel lies at or above the horizon; its ray never meets the road plane."""


class BehindCameraError(FsflowError):
    """3D point has non-positive camera-frame depth and cannot be projected."""


class PointBehindCameraError(BehindCameraError):
    """Ground point ends up at non-positive depth after the vehicle motion."""


class DimensionMismatch(FsflowError):
    """Array or map dimensions disagree."""


class UnitsMismatch(FsflowError):
    """Flow maps carry different units (px vs px/s) and cannot be combined."""


class EmptyInput(FsflowError):
    """Operation received a map with no valid pixels."""


class EmptyOverlap(FsflowError):
    """Mask and validity regions have no pixel in common."""


class InsufficientRows(FsflowError):
    """Too few populated rows to determine the curve parameters."""


class DegenerateFit(FsflowError):
    """Normal equations are singular or the fitted curve is invalid."""


class NonFinite(FsflowError):
    """No candidate produced a finite cost; inputs are inconsistent."""


class OutOfBounds(FsflowError):
    """Rectangle or index falls outside the image."""


class ConfigError(FsflowError):
    """Configuration file is missing required fields or holds bad values."""


class CodecError(FsflowError):
    """Base class for file-format errors."""


class BadMagic(CodecError):
    """File does not start with the expected magic bytes."""


class TruncatedFile(CodecError):
    """File ends before the declared payload is complete."""


class WrongBitDepth(CodecError):
    """Image sample depth does not match the format contract."""


class WrongChannelCount(CodecError):
    """Image channel count does not match the format contract."""
