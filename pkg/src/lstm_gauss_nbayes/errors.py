"""Exception hierarchy shared by every stage of the detector."""


class DetectorError(Exception):
    """Base class for all errors raised by this package."""


class InvalidFactor(DetectorError, ValueError):
    pass


class DegenerateRange(DetectorError, ValueError):
    pass


class InvalidLag(DetectorError, ValueError):
    pass


class InvalidWindow(DetectorError, ValueError):
    pass


class EmptyDataset(DetectorError, ValueError):
    pass


class ShapeError(DetectorError, ValueError):
    pass


class InvalidRate(DetectorError, ValueError):
    pass


class CacheMismatch(DetectorError, ValueError):
    pass


class DivergedTraining(DetectorError, ArithmeticError):
    def __init__(self, epoch, message="non-finite loss"):
        super().__init__(f"{message} at epoch {epoch}")
        self.epoch = epoch


class MissingClass(DetectorError, ValueError):
    pass


class EmptyFeatures(DetectorError, ValueError):
    pass


class InvalidBeta(DetectorError, ValueError):
    pass


class InvalidFolds(DetectorError, ValueError):
    pass


class FormatError(DetectorError, ValueError):
    """Malformed input file; ``location`` names the row/line/key at fault."""

    def __init__(self, message, location=None):
        text = message if location is None else f"{location}: {message}"
        super().__init__(text)
        self.location = location


class VersionError(DetectorError, ValueError):
    pass


class ConfigError(DetectorError, ValueError):
    pass


class IoError(DetectorError, OSError):
    pass


class StageError(DetectorError):
    """Wraps a failure with the pipeline stage it happened in."""

    def __init__(self, stage, cause):
        super().__init__(f"stage={stage}: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
