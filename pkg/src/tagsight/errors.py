"""Exception hierarchy shared by every subsystem."""


class TagsightError(Exception):
    """Base class for all package errors."""


# geometry
class NonPositiveDepth(TagsightError, ValueError):
    pass


class BehindCamera(TagsightError, ValueError):
    pass


class EmptyCloud(TagsightError, ValueError):
    pass


class InvalidTransform(TagsightError, ValueError):
    pass


# features
class ImageTooSmall(TagsightError, ValueError):
    pass


class EmptyDatabase(TagsightError, ValueError):
    pass


class DescriptorFileError(TagsightError, ValueError):
    pass


# registration
class DegenerateConfiguration(TagsightError, ValueError):
    pass


class AllCorrespondencesRejected(TagsightError, RuntimeError):
    pass


class NoValidDepth(TagsightError, ValueError):
    pass


class InsufficientNeighbors(TagsightError, ValueError):
    pass


# rfid
class NonPositiveDistance(TagsightError, ValueError):
    pass


class TagNotFound(TagsightError, LookupError):
    pass


class NotATemperatureTag(TagsightError, ValueError):
    pass


class ProtocolTimeout(TagsightError, TimeoutError):
    pass


class ProtocolError(TagsightError, ValueError):
    """Malformed frame on the reader wire protocol."""


class BadMagic(ProtocolError):
    pass


class UnsupportedVersion(ProtocolError):
    pass


class Truncated(ProtocolError):
    pass


class UnknownMessageType(ProtocolError):
    pass


class MalformedPayload(ProtocolError):
    """Payload length or field values inconsistent with the message type."""


# fusion / harness
class UnknownObject(TagsightError, KeyError):
    pass


class ObjectBehindCamera(TagsightError, ValueError):
    pass
