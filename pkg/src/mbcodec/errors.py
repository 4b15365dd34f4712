"""Exception types raised across the toolkit.

Every error derives from :class:`CodecError`, itself a ``ValueError``, so
callers that only care about "bad input" can catch one type.
"""


class CodecError(ValueError):
    """Base class for all toolkit errors."""


class InvalidBandCount(CodecError):
    pass


class InsufficientTaps(CodecError):
    pass


class EmptyInput(CodecError):
    pass


class BandMismatch(CodecError):
    pass


class TooShort(CodecError):
    pass


class UndefinedReference(CodecError):
    pass


class DimMismatch(CodecError):
    pass


class BadDepth(CodecError):
    pass


class BadCode(CodecError):
    pass


class EmptyCorpus(CodecError):
    pass


class BadDistribution(CodecError):
    pass


class DegenerateVector(CodecError):
    pass


class CodeOutOfRange(CodecError):
    pass


class DepthMismatch(CodecError):
    pass


class NotAStream(CodecError):
    pass


class CorruptStream(CodecError):
    pass


class RateMismatch(CodecError):
    pass


class ModelNotReady(CodecError):
    pass


class ConfigMismatch(CodecError):
    pass


class InsufficientData(CodecError):
    pass
