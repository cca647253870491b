"""Ground truth for snapshot contents: replay patches in version order.

``OracleState`` keeps a sparse page map and advances one version at a time.
``DenseOracle`` replays the same log into a flat zero-initialized numpy array;
it exists only to cross-check the sparse oracle.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Patch:
    version: int
    offset: int
    data: bytes


class OracleState:
    """Sparse byte string advanced by page-aligned patches."""

    def __init__(self, total_size: int, page_size: int):
        self.total_size = total_size
        self.page_size = page_size
        self.version = 0
        self._pages: dict[int, bytes] = {}

    def apply(self, patch: Patch) -> None:
        if patch.version != self.version + 1:
            raise ValueError(f"patch {patch.version} applied on top of version {self.version}")
        ps = self.page_size
        if patch.offset % ps or len(patch.data) % ps:
            raise ValueError("oracle patches must be page aligned")
        first = patch.offset // ps
        for i in range(len(patch.data) // ps):
            self._pages[first + i] = patch.data[i * ps:(i + 1) * ps]
        self.version = patch.version

    def read(self, offset: int, size: int) -> bytes:
        ps = self.page_size
        first, last = offset // ps, (offset + size - 1) // ps
        zero = bytes(ps)
        buf = b"".join(self._pages.get(p, zero) for p in range(first, last + 1))
        skip = offset - first * ps
        return buf[skip:skip + size]

    def written_pages(self) -> list[int]:
        return sorted(self._pages)


def state_at(patches, version: int, total_size: int, page_size: int) -> OracleState:
    """Oracle after patches ``1..version`` of a complete, ordered patch log."""
    state = OracleState(total_size, page_size)
    for patch in sorted(patches, key=lambda p: p.version):
        if patch.version > version:
            break
        state.apply(patch)
    return state


class DenseOracle:
    def __init__(self, total_size: int):
        # np.zeros maps fresh zero pages lazily, so a 1 GiB array costs only what is touched
        self.buf = np.zeros(total_size, dtype=np.uint8)

    def replay(self, patches) -> "DenseOracle":
        for patch in sorted(patches, key=lambda p: p.version):
            self.buf[patch.offset:patch.offset + len(patch.data)] = np.frombuffer(patch.data, dtype=np.uint8)
        return self

    def read(self, offset: int, size: int) -> bytes:
        return self.buf[offset:offset + size].tobytes()


def first_difference(a: bytes, b: bytes) -> int:
    """Index of the first differing byte, or -1 when equal."""
    if a == b:
        return -1
    n = min(len(a), len(b))
    x = np.frombuffer(a, dtype=np.uint8, count=n)
    y = np.frombuffer(b, dtype=np.uint8, count=n)
    diff = np.flatnonzero(x != y)
    return int(diff[0]) if diff.size else n
