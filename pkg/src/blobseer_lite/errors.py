"""Exception hierarchy shared by every actor.

Errors raised inside a server actor travel back to the caller as a wire
error response carrying a numeric code and a text detail; ``error_code``
and ``error_from_code`` map between the two forms.
"""


class BlobError(Exception):
    """Base class for all errors raised by this package."""


# geometry / model
class OutOfRange(BlobError):
    pass


class ZeroSize(BlobError):
    pass


class NotPowerOfTwo(BlobError):
    pass


class PageLargerThanBlob(BlobError):
    pass


class TreeTooDeep(BlobError):
    pass


# segment tree
class LeafHasNoChildren(BlobError):
    pass


class SegmentOutOfTree(BlobError):
    pass


class LinkMismatch(BlobError):
    pass


class ArityMismatch(BlobError):
    pass


class NodeMissing(BlobError):
    """A metadata node referenced by a published tree is absent."""


class PageMissing(BlobError):
    """A page referenced by a metadata leaf is absent from its provider."""


# stores
class ImmutabilityViolation(BlobError):
    """A write-once key was re-put with different content."""


class ShardUnavailable(BlobError):
    pass


class CapacityExceeded(BlobError):
    pass


class InvalidPageSize(BlobError):
    pass


# provider manager
class DuplicateAddress(BlobError):
    pass


class NoProviders(BlobError):
    pass


class UnknownProvider(BlobError):
    pass


# version manager
class UnknownBlob(BlobError):
    pass


class SegmentOutOfRange(BlobError):
    pass


class UnknownVersion(BlobError):
    pass


class AlreadyCompleted(BlobError):
    pass


# client
class VersionNotPublished(BlobError):
    def __init__(self, latest, requested=None):
        self.latest = latest
        self.requested = requested
        super().__init__(f"version not published (latest={latest})")


class UnalignedWrite(BlobError):
    pass


class ProviderUnavailable(BlobError):
    pass


class MetadataStoreUnavailable(BlobError):
    pass


# transport
class TransportError(BlobError):
    pass


class DestinationUnreachable(TransportError):
    pass


class RpcTimeout(TransportError, TimeoutError):
    pass


class DecodeError(TransportError):
    pass


class BadMagic(DecodeError):
    pass


class UnsupportedProtocolVersion(DecodeError):
    pass


class TruncatedFrame(DecodeError):
    pass


class TrailingData(DecodeError):
    pass


class UnknownMessageType(DecodeError):
    pass


class BatchTooLarge(TransportError):
    pass


class RemoteError(BlobError):
    """Server-side failure with no registered local exception class."""


# harness
class InvalidConfig(BlobError):
    pass


class PortInUse(BlobError):
    pass


class MismatchFound(BlobError):
    def __init__(self, version, offset, size, first_diff):
        self.version = version
        self.offset = offset
        self.size = size
        self.first_diff = first_diff
        super().__init__(
            f"mismatch at version {version}, range ({offset}, {size}), "
            f"first differing byte {first_diff}"
        )


# Codes are part of the wire contract: append only.
_WIRE_ERRORS = [
    RemoteError,
    OutOfRange,
    ZeroSize,
    NotPowerOfTwo,
    PageLargerThanBlob,
    TreeTooDeep,
    LeafHasNoChildren,
    SegmentOutOfTree,
    LinkMismatch,
    ArityMismatch,
    NodeMissing,
    PageMissing,
    ImmutabilityViolation,
    ShardUnavailable,
    CapacityExceeded,
    InvalidPageSize,
    DuplicateAddress,
    NoProviders,
    UnknownProvider,
    UnknownBlob,
    SegmentOutOfRange,
    UnknownVersion,
    AlreadyCompleted,
    DecodeError,
    BadMagic,
    UnsupportedProtocolVersion,
    TruncatedFrame,
    TrailingData,
    UnknownMessageType,
]
_CODE_OF = {cls: i for i, cls in enumerate(_WIRE_ERRORS)}


def error_code(exc):
    for cls in type(exc).__mro__:
        if cls in _CODE_OF:
            return _CODE_OF[cls]
    return 0


def error_from_code(code, detail):
    if 0 <= code < len(_WIRE_ERRORS):
        return _WIRE_ERRORS[code](detail)
    return RemoteError(f"code {code}: {detail}")
