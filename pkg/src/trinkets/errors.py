"""Exception types shared across the package."""


class TrinketsError(Exception):
    """Base class for all package errors."""


class DomainError(TrinketsError):
    """An argument is outside its documented domain."""


class SingularityError(TrinketsError):
    """Field requested on or too close to a winding filament."""


class NotParametricError(TrinketsError):
    """Parametric operation on a tag with alpha = 0."""


class AbsentSignalError(TrinketsError):
    """Estimation requested on a signal below the presence threshold."""


class ConvergenceError(TrinketsError):
    """Iterative solver failed to reach the rejection threshold.

    Carries the best candidate found so far in ``best``.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class SceneValidationError(TrinketsError):
    """A scene file violates a declared invariant."""


class WireIntegrityError(TrinketsError):
    """A wire frame failed its CRC or layout check."""


class CalibrationFaultError(TrinketsError):
    """Oscillator calibration measured an impossible value."""


class StageError(TrinketsError):
    """A pipeline stage failed; carries stage name and frame index."""

    def __init__(self, stage, frame_index, cause):
        super().__init__(f"stage '{stage}' failed at frame {frame_index}: {cause}")
        self.stage = stage
        self.frame_index = frame_index
        self.cause = cause
