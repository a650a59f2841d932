"""Exception types shared across the package."""


class EcgTriageError(Exception):
    """Base class for all package errors."""


class CohortParseError(EcgTriageError):
    """A cohort input file could not be parsed.

    Carries the offending path and 1-based line number when known.
    """

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        loc = ""
        if path is not None:
            loc = f" [{path}" + (f":{line}" if line is not None else "") + "]"
        super().__init__(message + loc)


class CohortIntegrityError(EcgTriageError):
    """Cross-file referential integrity violated (e.g. orphan annotation)."""


class TooShortRecordError(EcgTriageError):
    """Record shorter than the minimum the operation can work on."""


class ProfileParameterError(EcgTriageError):
    """Synthetic cohort profile asks for something unphysiological."""


class InsufficientDataError(EcgTriageError):
    """Not enough samples/intervals to compute the requested quantity."""


class NotFittedError(EcgTriageError):
    """Transform or predict called on an unfitted estimator."""


class SingleClassError(EcgTriageError):
    """A score or fit needs both classes but got only one."""


class StratificationError(EcgTriageError):
    """Stratified splitting impossible with the requested sizes."""


class ConfigError(EcgTriageError):
    """Run configuration invalid or contains unknown keys."""
