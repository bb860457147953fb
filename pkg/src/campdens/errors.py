"""Exception hierarchy shared by all pipeline stages."""


class CampdensError(Exception):
    """Base class for every error raised by this package."""


class GeometryError(CampdensError, ValueError):
    """Invalid polygon, rectangle or coordinate."""


class IngestError(CampdensError):
    """Malformed or inconsistent input file."""


class LabelingError(CampdensError):
    """Chip labels cannot be computed from the given blocks."""


class FitError(CampdensError):
    """Baseline regression could not be fitted."""

    def __init__(self, message, objective=None):
        super().__init__(message)
        self.objective = objective


class EvaluationError(CampdensError):
    """Predictions and labels do not line up, or metrics are undefined."""


class ConfigError(CampdensError):
    """Invalid run configuration or generator parameters."""
