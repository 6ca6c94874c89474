"""Exception types shared across the package."""


class DegenerateGraphError(ValueError):
    """Pixel graph has an isolated vertex or no edges at all."""


class NumericalError(RuntimeError):
    """A solver produced non-finite values."""


class TrainingError(RuntimeError):
    """Training finished below the required test accuracy."""


class EmptyReportError(ValueError):
    """No correctly classified image was available for evaluation."""
