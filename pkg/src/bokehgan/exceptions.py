class ConfigError(ValueError):
    """Raised when a configuration object violates its invariants."""


class ShapeError(ValueError):
    """Raised when a tensor or image has an unusable shape."""


class CheckpointError(Exception):
    """Raised when a checkpoint file cannot be read.

    ``section`` names the part of the file that failed (header, manifest or
    an array name).
    """

    def __init__(self, message, section=None):
        super().__init__(message if section is None else f"[{section}] {message}")
        self.section = section


class TrainingDiverged(RuntimeError):
    """Raised when a loss becomes NaN or infinite during training.

    The partial state at the point of failure is attached as ``checkpoint``.
    """

    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint
