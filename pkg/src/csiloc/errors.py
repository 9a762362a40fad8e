"""Exception types shared across the package."""


class CsilocError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(CsilocError):
    """Array shapes do not satisfy an operation's contract."""


class DataFormatError(CsilocError):
    """On-disk data (canonical container or NPY file) is malformed."""


class CheckpointError(CsilocError):
    """Model checkpoint file is malformed or inconsistent."""


class DegenerateGeometryError(CsilocError):
    """Position cloud has no extent along the axis a geometric split needs."""


class TrainingDivergedError(CsilocError):
    """Loss or gradients became non-finite; carries the history recorded so far."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history
