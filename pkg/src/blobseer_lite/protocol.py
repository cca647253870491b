"""Message type codes and small body-packing helpers shared by all actors.

Codes: 0x1x metadata, 0x2x pages, 0x3x provider manager, 0x4x version
manager. A response uses ``request | 0x80``; a failure uses ``ERROR``.
"""

import enum
import struct

from .blob_model import BlobId

_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")


class MsgType(enum.IntEnum):
    META_PUT = 0x10
    META_GET = 0x11
    PAGE_PUT = 0x20
    PAGE_GET = 0x21
    PM_REGISTER = 0x30
    PM_ALLOCATE = 0x31
    PM_REPORT = 0x32
    VM_ALLOC = 0x40
    VM_ASSIGN = 0x41
    VM_COMPLETE = 0x42
    VM_LATEST = 0x43

    META_PUT_RESP = 0x90
    META_GET_RESP = 0x91
    PAGE_PUT_RESP = 0xA0
    PAGE_GET_RESP = 0xA1
    PM_REGISTER_RESP = 0xB0
    PM_ALLOCATE_RESP = 0xB1
    PM_REPORT_RESP = 0xB2
    VM_ALLOC_RESP = 0xC0
    VM_ASSIGN_RESP = 0xC1
    VM_COMPLETE_RESP = 0xC2
    VM_LATEST_RESP = 0xC3

    ERROR = 0xFF


REQUEST_TYPES = frozenset(t for t in MsgType if t < 0x80)
VALID_TYPES = frozenset(int(t) for t in MsgType)


def response_type(request: int) -> int:
    return request | 0x80


def pack_u16(value: int) -> bytes:
    return _U16.pack(value)


def pack_u32(value: int) -> bytes:
    return _U32.pack(value)


def unpack_u16(data, offset: int = 0) -> int:
    return _U16.unpack_from(data, offset)[0]


def unpack_u32(data, offset: int = 0) -> int:
    return _U32.unpack_from(data, offset)[0]


def pack_str(text: str) -> bytes:
    raw = text.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ValueError("string too long for a u16 length prefix")
    return _U16.pack(len(raw)) + raw


def unpack_str(data, offset: int = 0) -> tuple[str, int]:
    """Return the decoded string and the offset just past it."""
    n = _U16.unpack_from(data, offset)[0]
    start = offset + 2
    if start + n > len(data):
        raise ValueError("truncated string")
    return bytes(data[start:start + n]).decode("utf-8"), start + n


def unpack_blob(data, offset: int = 0) -> BlobId:
    return BlobId(bytes(data[offset:offset + 16]))
