"""Exception types raised across the package."""


class PairrankError(Exception):
    """Base class for all package errors."""


class ParseError(PairrankError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(PairrankError, ValueError):
    pass


class DuplicateIdError(ValidationError):
    pass


class UnknownIdError(ValidationError):
    pass


class RangeError(ValidationError):
    pass


class SelfPairError(ValidationError):
    pass


class DegenerateScaleError(PairrankError, ValueError):
    """Scores have zero spread, so a scale-normalised quantity is undefined."""


class DegenerateFitError(PairrankError, ValueError):
    """Least-squares fit requested on constant predictions."""


class UndefinedCorrelationError(PairrankError, ValueError):
    pass


class MethodMismatchError(PairrankError, ValueError):
    """Scoring method cannot consume the given comparisons (e.g. soft p for hard BT)."""


class CapacityError(PairrankError, ValueError):
    """More pairs requested than the selection strategy can provide."""


class ConfigurationError(PairrankError, ValueError):
    pass


class MissingLabelError(PairrankError):
    """Neither label token could be found in the judge's response."""


class JudgeTransportError(PairrankError):
    """HTTP failure that persisted after all retries."""
