"""Exception hierarchy shared by all irsense modules."""


class IRSenseError(Exception):
    """Base class for every error raised by this package."""


class GeometryError(IRSenseError, ValueError):
    """Patch dimensions or plane separation are not usable."""


class DomainError(IRSenseError, ValueError):
    """A physical quantity is outside its meaningful range (e.g. T <= 0 K)."""


class NetworkError(IRSenseError):
    """The thermal network cannot be constructed as requested."""


class NumericalError(IRSenseError):
    """A linear system could not be formed or solved."""


class SolverError(IRSenseError):
    """An iterative solver failed to converge."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class FrameError(IRSenseError):
    """Base class for readout protocol decode failures."""


class FramingError(FrameError):
    """Wrong sync byte or wrong frame length."""


class IntegrityError(FrameError):
    """Checksum or CRC mismatch."""


class OutOfRangeError(IRSenseError, ValueError):
    """An argument lies outside the interval an operation supports."""


class ChipRangeError(OutOfRangeError):
    """The chip model produced a non-positive or unencodable frequency."""


class FitError(IRSenseError):
    """A calibration fit is degenerate or under-determined."""


class PreconditionError(IRSenseError, ValueError):
    """Inputs violate an operation's stated preconditions."""


class CalibrationLookupError(IRSenseError, KeyError):
    """No calibration entry exists for the requested pixel."""


class NoDetectionError(IRSenseError):
    """Every usable pixel is below the detection noise floor."""


class ConfigError(IRSenseError):
    """A configuration or data file is malformed."""

    def __init__(self, message, path=None, line=None):
        location = ""
        if path is not None:
            location = str(path)
            if line is not None:
                location += f":{line}"
            location += ": "
        super().__init__(location + message)
        self.path = path
        self.line = line
