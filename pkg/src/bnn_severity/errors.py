"""Exception types raised across the package."""


class BnnError(Exception):
    """Base class; ``category`` is a short machine-readable tag used by the CLI."""

    category = "error"


class DimensionError(BnnError, ValueError):
    category = "dimension"

    def __init__(self, message, expected=None, actual=None, row=None):
        super().__init__(message)
        self.expected = expected
        self.actual = actual
        self.row = row


class ConfigError(BnnError, ValueError):
    category = "config"


class DivergenceError(BnnError, FloatingPointError):
    """Non-finite energy or gradient during Hamiltonian integration."""

    category = "divergence"

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class TrainingError(BnnError, FloatingPointError):
    category = "training"

    def __init__(self, message, epoch=None, batch=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch


class DataError(BnnError, ValueError):
    """Malformed input file. ``kind`` distinguishes the failure."""

    category = "data"

    def __init__(self, message, kind, row=None, column=None):
        super().__init__(message)
        self.kind = kind
        self.row = row
        self.column = column


class GridSearchError(BnnError, RuntimeError):
    category = "grid"

    def __init__(self, message, failures=()):
        super().__init__(message)
        self.failures = list(failures)
