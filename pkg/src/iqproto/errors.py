"""Exception taxonomy shared across the toolkit.

Every operation raises one of these at its boundary instead of letting a
bare numpy/ValueError escape, so callers can branch on failure class.
"""


class IqProtoError(Exception):
    """Base class for all toolkit errors."""


class InvalidSpec(IqProtoError):
    """A burst/overlap/split/config descriptor is out of range or inconsistent."""


class DegenerateSignal(IqProtoError):
    """Signal is empty, all-zero where power is required, or non-finite."""


class InsufficientSamples(IqProtoError):
    """Operation needs more samples than the signal provides."""


class ShapeError(IqProtoError):
    """Array shape does not match the declared layout."""


class FormatError(IqProtoError):
    """On-disk blob, sidecar, or checkpoint violates its format contract."""


class InvalidLabel(IqProtoError):
    """Unknown protocol/class label."""


class ConfigError(IqProtoError):
    """Model or pipeline configuration is internally inconsistent."""


class TrainingDiverged(IqProtoError):
    """Loss became non-finite during optimization."""


class InsufficientData(IqProtoError):
    """Not enough records to compute the requested statistic."""


class IoError(IqProtoError):
    """Report or artifact write failed at the OS level."""
