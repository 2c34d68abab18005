"""Exception hierarchy shared across the package."""


class MriNetError(Exception):
    """Base class for all package errors."""


class DimensionError(MriNetError, ValueError):
    """A tensor shape does not satisfy a kernel's contract."""

    def __init__(self, message, axis=None):
        super().__init__(message)
        self.axis = axis


class ConfigError(MriNetError, ValueError):
    pass


class BlockConstructionError(MriNetError, ValueError):
    pass


class GradientLookupError(MriNetError, KeyError):
    pass


class TaxonomyError(MriNetError):
    pass


class SplitError(MriNetError, ValueError):
    pass


class DecodeError(MriNetError):
    pass


class IterationError(MriNetError):
    pass


class LabelError(MriNetError, ValueError):
    pass


class EvaluationError(MriNetError):
    pass


class CheckpointError(MriNetError):
    pass


class WeightImportError(MriNetError):
    pass


class TrainingHalted(MriNetError):
    """Raised when a non-finite loss or gradient stops training."""

    def __init__(self, message, last_good_checkpoint=None):
        super().__init__(message)
        self.last_good_checkpoint = last_good_checkpoint
