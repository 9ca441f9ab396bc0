"""Exception hierarchy shared by the quantizer, codec, pipeline and harness."""


class TahqError(Exception):
    """Base class for every error raised by tahquant."""


class InvalidInputError(TahqError, ValueError):
    """Input tensor is malformed (wrong rank, non-finite values, ...)."""


class InvalidTileError(InvalidInputError):
    """A tile is too small for outlier detection."""


class ConfigError(TahqError, ValueError):
    """Hyperparameters violate their admissible ranges."""


class UnsupportedTileSizeError(ConfigError):
    """Tile size is not a power of two."""


class CodeRangeError(TahqError, ValueError):
    """A code does not fit in the requested bit width."""


class DecodeError(TahqError, ValueError):
    """A compressed structure or blob cannot be decoded."""


class CorruptPayloadError(DecodeError):
    pass


class FormatError(DecodeError):
    """Bad magic or malformed field."""


class VersionError(DecodeError):
    pass


class TruncationError(DecodeError):
    """Input ended before the declared content."""


class TrainingDivergenceError(TahqError, ArithmeticError):
    """A gradient or loss became non-finite."""


class UndefinedRatioError(TahqError, ZeroDivisionError):
    """Relative error requested against a zero reference."""
