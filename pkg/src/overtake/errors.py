"""Exception hierarchy.

Every error raised by the package derives from :class:`OvertakeError`, so
callers (and the CLI) can catch data problems in one place.
"""


class OvertakeError(ValueError):
    """Base class for all package errors."""


class DataError(OvertakeError):
    """Input data cannot be used as given."""


class MalformedRow(DataError):
    pass


class NonUniformRate(DataError):
    pass


class UnknownLabel(DataError):
    pass


class MissingTrigger(DataError):
    pass


class InsufficientContext(DataError):
    pass


class NoTriggerFound(DataError):
    pass


class AlreadyAnnotated(DataError):
    pass


class TooShort(DataError):
    pass


class UnknownMoment(OvertakeError):
    pass


class EmptyClass(DataError):
    pass


class MissingFileWindows(DataError):
    pass


class SingleClass(DataError):
    pass


class EmptyData(DataError):
    pass


class NonFinite(OvertakeError):
    pass


class LengthMismatch(OvertakeError):
    pass


class UndefinedMetric(OvertakeError):
    """A ratio metric whose denominator is zero."""


class EmptyMoment(DataError):
    pass


class InvalidConfig(OvertakeError):
    pass


class ModelFormatError(DataError):
    pass
