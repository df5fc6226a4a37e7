"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Array dimensions do not match what an operation expects."""


class ModeError(ValueError):
    """Discrete/continuous sensitive-attribute mode mismatch."""


class SchemaError(ValueError):
    """Dataset file or schema is malformed."""


class FormatError(ValueError):
    """Checkpoint file is corrupt or has an unsupported layout."""


class NumericalAbort(FloatingPointError):
    """A loss or gradient became non-finite during training."""

    def __init__(self, message, epoch=None, batch=None, record=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
        self.record = record or {}
