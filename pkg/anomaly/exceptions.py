class MovadError(Exception):
    """Base class for every error raised by the anomaly application"""


class ConfigurationError(MovadError):
    def __init__(self, message, errors=None):
        super().__init__(message)
        self.errors = errors or {}


class DimensionMismatchError(MovadError, ValueError):
    pass


class NonFinitePixelsError(MovadError, ValueError):
    pass


class StateMismatchError(MovadError, ValueError):
    pass


class AnnotationError(MovadError):
    pass


class DecodeError(MovadError):
    def __init__(self, message, frame_index=None):
        super().__init__(message if frame_index is None else f"{message} (frame {frame_index})")
        self.frame_index = frame_index


class InfeasibleSpecError(MovadError, ValueError):
    pass


class EmptyDatasetError(MovadError):
    pass


class SingleClassError(MovadError, ValueError):
    """AUC is undefined when only one class is present"""


class NonFiniteLossError(MovadError, FloatingPointError):
    pass


class CheckpointError(MovadError):
    pass
