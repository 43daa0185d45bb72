"""Exception taxonomy.

Every error raised by the library derives from ``TinyEatsError`` and carries the
process exit code the CLI reports for it:

- 1: usage errors (bad flags or arguments)
- 2: data errors (malformed or unsuitable inputs)
- 3: internal invariant violations
"""


class TinyEatsError(Exception):
    """Base class for all tinyeats errors."""

    exit_code = 3


class UsageError(TinyEatsError):
    exit_code = 1


class DataError(TinyEatsError):
    exit_code = 2


class InvariantError(TinyEatsError):
    exit_code = 3


# Signals and features

class SignalError(DataError):
    """Audio signal has the wrong rate, length, or non-finite samples."""


class FeatureShapeError(DataError):
    """A feature window does not have the 15x65 shape or leaves [-1, 1]."""


class FeatureFileError(DataError):
    """A TEFW feature file could not be parsed."""


class DimensionError(DataError):
    """Array dimensions disagree with the network architecture."""


# WAV ingestion

class WavFormatError(DataError):
    pass


class NonPcmError(WavFormatError):
    pass


class StereoError(WavFormatError):
    pass


class UnsupportedDepthError(WavFormatError):
    pass


class WrongRateError(WavFormatError):
    pass


# Corpus and splits

class ManifestError(DataError):
    pass


class SplitError(DataError):
    pass


class EmptySplitError(DataError):
    pass


class ClassAbsentError(DataError):
    pass


# Model containers

class ModelFormatError(DataError):
    pass


class BadMagicError(ModelFormatError):
    pass


class UnsupportedVersionError(ModelFormatError):
    pass


class DimensionMismatchError(ModelFormatError):
    pass


class CrcMismatchError(ModelFormatError):
    pass


class TruncatedFileError(ModelFormatError):
    pass


class ModelUnavailableError(DataError):
    """No quantized model is configured, or the configured one cannot be loaded."""


# Internal invariants

class NonFiniteLossError(InvariantError):
    pass


class FixedPointRangeError(InvariantError):
    pass


class AccumulatorOverflowError(InvariantError):
    pass


class BudgetExceededError(InvariantError):
    pass


class QuantizationError(InvariantError):
    pass
