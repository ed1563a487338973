"""Exception hierarchy.

Every error raised for bad data or parameters derives from ``EGMError``; the
CLI maps these to exit code 2.
"""


class EGMError(Exception):
    """Base class for all data and parameter errors."""


class InvalidParameterError(EGMError, ValueError):
    pass


class EmptyGraphError(EGMError, ValueError):
    pass


class InvalidLengthError(EGMError, ValueError):
    pass


class InvalidConfigError(EGMError, ValueError):
    pass


class DimensionMismatchError(EGMError, ValueError):
    pass


class UndefinedReferenceError(EGMError, ValueError):
    """A normalization reference (maximum, energy) is zero."""


class InsufficientDataError(EGMError, ValueError):
    pass


class InsufficientBeatsError(InsufficientDataError):
    pass


class SimulationBlowUpError(EGMError, RuntimeError):
    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"simulation diverged at step {step}")


class InvalidGeometryError(EGMError, ValueError):
    pass


class CorruptFileError(EGMError, ValueError):
    pass


class UnsupportedVersionError(EGMError, ValueError):
    pass
