"""Data provider: an in-memory, write-once page store.

Pages are keyed by ``(blob, write_uuid, page_index)`` rather than by version
because a writer stores its pages before it has been assigned a version.
"""

import hashlib
import threading
from dataclasses import dataclass

from .blob_model import BlobId, pack_u64, unpack_u64
from .errors import CapacityExceeded, ImmutabilityViolation, InvalidPageSize, UnknownMessageType
from .protocol import MsgType, pack_str, unpack_blob, unpack_str

DEFAULT_CAPACITY = 256 * 1024 * 1024
PAGE_KEY_SIZE = 40


@dataclass(frozen=True, slots=True)
class PageKey:
    blob: BlobId
    write_uuid: bytes
    page_index: int

    def encode(self) -> bytes:
        return self.blob.raw + self.write_uuid + pack_u64(self.page_index)

    @classmethod
    def decode(cls, data, offset: int = 0) -> "PageKey":
        return cls(
            unpack_blob(data, offset),
            bytes(data[offset + 16:offset + 32]),
            unpack_u64(data, offset + 32),
        )


@dataclass(frozen=True, slots=True)
class PageRef:
    provider: str
    key: PageKey

    def encode(self) -> bytes:
        return pack_str(self.provider) + self.key.encode()

    @classmethod
    def decode(cls, data, offset: int = 0) -> tuple["PageRef", int]:
        provider, pos = unpack_str(data, offset)
        if pos + PAGE_KEY_SIZE > len(data):
            raise ValueError("truncated page key")
        return cls(provider, PageKey.decode(data, pos)), pos + PAGE_KEY_SIZE


class DataProvider:
    """Stores immutable pages in memory up to a byte capacity."""

    def __init__(self, address: str, capacity: int = DEFAULT_CAPACITY, track_puts: bool = False):
        self.address = address
        self.capacity = capacity
        self._pages: dict[PageKey, bytes] = {}
        self._bytes = 0
        self._lock = threading.Lock()
        self.violations = 0
        # key -> set of content digests ever offered; populated when tracking
        self.put_log: dict[PageKey, set] | None = {} if track_puts else None

    def put_page(self, key: PageKey, content: bytes, page_size: int) -> None:
        if len(content) != page_size:
            raise InvalidPageSize(f"page content is {len(content)} bytes, expected {page_size}")
        if not (isinstance(content, memoryview) and content.readonly and isinstance(content.obj, bytes)):
            content = bytes(content)  # a view of immutable bytes (a received frame) is kept as is
        with self._lock:
            if self.put_log is not None:
                self.put_log.setdefault(key, set()).add(hashlib.blake2b(content, digest_size=16).digest())
            existing = self._pages.get(key)
            if existing is not None:
                if existing != content:
                    self.violations += 1
                    raise ImmutabilityViolation(f"page {key} already stored with different content")
                return
            if self._bytes + len(content) > self.capacity:
                raise CapacityExceeded(
                    f"provider {self.address} holds {self._bytes} of {self.capacity} bytes"
                )
            self._pages[key] = content
            self._bytes += len(content)

    def get_page(self, key: PageKey) -> bytes | None:
        return self._pages.get(key)

    def stats(self) -> tuple[int, int]:
        with self._lock:
            return len(self._pages), self._bytes

    def keys(self):
        with self._lock:
            return list(self._pages)

    def corrupt(self, key: PageKey, index: int = 0) -> None:
        """Flip one byte of a stored page. Fault injection for checker self-tests."""
        with self._lock:
            page = bytearray(self._pages[key])
            page[index] ^= 0xFF
            self._pages[key] = bytes(page)

    def handle(self, msg_type: int, body: bytes) -> bytes:
        if msg_type == MsgType.PAGE_PUT:
            key = PageKey.decode(body)
            page_size = unpack_u64(body, PAGE_KEY_SIZE)
            self.put_page(key, body[PAGE_KEY_SIZE + 8:], page_size)
            return b""
        if msg_type == MsgType.PAGE_GET:
            content = self.get_page(PageKey.decode(body))
            return b"\x00" if content is None else b"\x01" + content
        raise UnknownMessageType(f"data provider cannot handle 0x{msg_type:02x}")


def encode_page_put(key: PageKey, content: bytes, page_size: int) -> bytes:
    return key.encode() + pack_u64(page_size) + content
