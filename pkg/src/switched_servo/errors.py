"""Exception types shared across the package."""


class FrameMismatchError(ValueError):
    """Raised when poses or twists are combined across incompatible frames."""


class DegenerateFeatureError(RuntimeError):
    """Raised when the interaction matrix loses column rank and the
    pseudo-inverse is no longer trustworthy."""


class IllPosedLearningError(RuntimeError):
    """Raised when a weight regression problem is rank deficient."""


class SimulationDiverged(RuntimeError):
    """Raised when the closed-loop state stops being finite.

    Carries the records accumulated up to the failing tick so callers can
    still write a partial log.
    """

    def __init__(self, message, records=None):
        super().__init__(message)
        self.records = records if records is not None else []


class ConfigError(ValueError):
    """Raised for malformed or out-of-range configuration input."""
