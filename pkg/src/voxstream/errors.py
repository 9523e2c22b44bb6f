"""Exception hierarchy for the voxstream runtime."""


class VoxstreamError(Exception):
    """Base class for all runtime errors raised by this package."""


class ShapeError(VoxstreamError):
    """A tensor argument has an incompatible shape; the message names the offending dimension."""


class GraphConfigError(VoxstreamError):
    """A graph plan is structurally invalid (channel chain, stride divisibility, ...)."""


class StreamStateError(VoxstreamError):
    """A streaming state was used after termination or out of protocol order."""


class WeightFormatError(VoxstreamError):
    """A weight file is malformed."""


class WeightVersionError(WeightFormatError):
    """The weight file carries an unknown magic/version string."""


class WeightChecksumError(WeightFormatError):
    """The weight file payload does not match its stored checksum."""


class MissingLayerError(WeightFormatError):
    """A required layer is absent (or has the wrong shape); the message names the layer."""


class AudioFormatError(VoxstreamError):
    """An audio file or buffer violates the 16 kHz mono PCM16 contract."""


class MetricError(VoxstreamError):
    """A metric is undefined for the given inputs (length mismatch, no jointly voiced frames, ...)."""
