"""Identifiers, blob geometry and page-interval arithmetic.

All integers on the wire are unsigned 64-bit little-endian; blob ids are
16 raw bytes.
"""

import secrets
import struct
from dataclasses import dataclass

from .errors import NotPowerOfTwo, OutOfRange, PageLargerThanBlob, TreeTooDeep, ZeroSize

MAX_TREE_DEPTH = 40

_U64 = struct.Struct("<Q")


def pack_u64(value: int) -> bytes:
    return _U64.pack(value)


def unpack_u64(data, offset: int = 0) -> int:
    return _U64.unpack_from(data, offset)[0]


def is_power_of_two(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


@dataclass(frozen=True, slots=True)
class BlobId:
    raw: bytes

    def __post_init__(self):
        if len(self.raw) != 16:
            raise ValueError("blob id must be 16 bytes")

    @classmethod
    def new(cls) -> "BlobId":
        return cls(secrets.token_bytes(16))

    @classmethod
    def from_hex(cls, text: str) -> "BlobId":
        return cls(bytes.fromhex(text))

    def hex(self) -> str:
        return self.raw.hex()

    def __str__(self):
        return self.raw.hex()


@dataclass(frozen=True, slots=True)
class BlobLayout:
    total_size: int
    page_size: int

    def __post_init__(self):
        if not is_power_of_two(self.total_size) or not is_power_of_two(self.page_size):
            raise NotPowerOfTwo(
                f"total_size={self.total_size} and page_size={self.page_size} must be powers of 2"
            )
        if self.page_size > self.total_size:
            raise PageLargerThanBlob(f"page_size {self.page_size} > total_size {self.total_size}")
        if self.page_count.bit_length() - 1 > MAX_TREE_DEPTH:
            raise TreeTooDeep(f"{self.page_count} pages exceeds 2^{MAX_TREE_DEPTH}")

    @property
    def page_count(self) -> int:
        return self.total_size // self.page_size

    @property
    def depth(self) -> int:
        """Number of edges from the root to a leaf."""
        return self.page_count.bit_length() - 1


@dataclass(frozen=True, slots=True)
class ByteRange:
    offset: int
    size: int

    @property
    def end(self) -> int:
        return self.offset + self.size


@dataclass(frozen=True, slots=True)
class PageInterval:
    """Half-open run of pages ``[first_page, first_page + page_len)``."""

    first_page: int
    page_len: int

    @property
    def end(self) -> int:
        return self.first_page + self.page_len

    def pages(self) -> range:
        return range(self.first_page, self.end)

    def intersects(self, other: "PageInterval") -> bool:
        return intervals_intersect(self, other)

    def contains(self, other: "PageInterval") -> bool:
        return self.first_page <= other.first_page and other.end <= self.end


def validate_range(layout: BlobLayout, rng: ByteRange) -> None:
    if rng.size <= 0:
        raise ZeroSize("access size must be positive")
    if rng.offset < 0 or rng.end > layout.total_size:
        raise OutOfRange(
            f"range ({rng.offset}, {rng.size}) exceeds blob size {layout.total_size}"
        )


def byte_range_to_page_interval(layout: BlobLayout, rng: ByteRange) -> PageInterval:
    """Smallest page interval whose pages cover every byte of ``rng``."""
    validate_range(layout, rng)
    first = rng.offset // layout.page_size
    last = (rng.end - 1) // layout.page_size
    return PageInterval(first, last - first + 1)


def is_page_aligned(layout: BlobLayout, rng: ByteRange) -> bool:
    return rng.size > 0 and rng.offset % layout.page_size == 0 and rng.size % layout.page_size == 0


def intervals_intersect(a: PageInterval, b: PageInterval) -> bool:
    return a.first_page < b.end and b.first_page < a.end
