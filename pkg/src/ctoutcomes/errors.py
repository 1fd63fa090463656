"""Exception types shared across the package."""


class VolumeFormatError(ValueError):
    """Sidecar or raw file cannot be parsed."""


class IntegrityError(ValueError):
    """Data is well-formed but internally inconsistent."""


class ValidationError(ValueError):
    """A value falls outside its declared domain."""


class EmptyInputError(ValueError):
    """An operation needs at least one foreground voxel (or row)."""


class UndefinedMetricError(ArithmeticError):
    """A metric has no defined value for the given input (e.g. 0/0)."""


class SegmentationFailedError(RuntimeError):
    """The baseline segmenter found no candidate region."""


class DegenerateLabelsError(ValueError):
    """Training labels contain a single class."""


class NotFittedError(RuntimeError):
    """A model was used before being fitted."""
