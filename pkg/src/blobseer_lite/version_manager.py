"""Version manager: the single serialization point for writes.

It hands out consecutive version numbers, precomputes the border links a
writer needs to weave its tree into the (possibly still unfinished) tree of
the previous version, and publishes versions strictly in assignment order.
"""

import enum
import random
import threading
from dataclasses import dataclass, field

from .blob_model import BlobId, BlobLayout, PageInterval, pack_u64, unpack_u64
from .errors import AlreadyCompleted, SegmentOutOfRange, UnknownBlob, UnknownMessageType, UnknownVersion
from .protocol import MsgType, pack_u32, unpack_blob, unpack_u32
from .segment_tree import BorderLink, root_descriptor, write_tree_shape


class Status(enum.Enum):
    ASSIGNED = "assigned"
    COMPLETED = "completed"
    PUBLISHED = "published"


@dataclass
class HistoryEntry:
    segment: PageInterval
    status: Status = Status.ASSIGNED


@dataclass
class BlobEntry:
    blob: BlobId
    layout: BlobLayout
    next_version: int = 1
    latest_published: int = 0
    # history[v - 1] describes version v
    history: list[HistoryEntry] = field(default_factory=list)
    # descriptor -> newest version whose write tree contains that node
    last_writer: dict = field(default_factory=dict, repr=False)
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)


class VersionManager:
    def __init__(self, seed: int | None = None):
        """``seed`` makes blob ids reproducible; by default they are random."""
        self._blobs: dict[BlobId, BlobEntry] = {}
        self._lock = threading.Lock()
        self._ids = None if seed is None else random.Random(seed)

    def _new_id(self) -> BlobId:
        return BlobId.new() if self._ids is None else BlobId(self._ids.randbytes(16))

    def _entry(self, blob: BlobId) -> BlobEntry:
        entry = self._blobs.get(blob)
        if entry is None:
            raise UnknownBlob(f"unknown blob {blob}")
        return entry

    def alloc_blob(self, total_size: int, page_size: int) -> BlobId:
        layout = BlobLayout(total_size, page_size)
        with self._lock:
            blob = self._new_id()
            while blob in self._blobs:
                blob = self._new_id()
            self._blobs[blob] = BlobEntry(blob, layout)
        return blob

    def layout(self, blob: BlobId) -> BlobLayout:
        return self._entry(blob).layout

    def assign_version(self, blob: BlobId, segment: PageInterval) -> tuple[int, list[BorderLink]]:
        entry = self._entry(blob)
        if segment.page_len < 1 or segment.first_page < 0 or segment.end > entry.layout.page_count:
            raise SegmentOutOfRange(
                f"segment ({segment.first_page}, {segment.page_len}) outside "
                f"{entry.layout.page_count} pages"
            )
        root = root_descriptor(entry.layout)
        touched, children = write_tree_shape(root, segment)
        with entry.lock:
            v = entry.next_version
            # A version's segment intersects a node's interval exactly when the
            # node is in that version's write tree, so the index yields the
            # newest earlier version touching each border child.
            last = entry.last_writer
            links = [BorderLink(c, last.get(c, 0)) for c in children]
            for d in touched:
                last[d] = v
            entry.history.append(HistoryEntry(segment))
            entry.next_version = v + 1
        return v, links

    def complete_version(self, blob: BlobId, v: int) -> int:
        entry = self._entry(blob)
        with entry.lock:
            if not 1 <= v < entry.next_version:
                raise UnknownVersion(f"version {v} was never assigned for blob {blob}")
            item = entry.history[v - 1]
            if item.status is not Status.ASSIGNED:
                raise AlreadyCompleted(f"version {v} already completed")
            item.status = Status.COMPLETED
            latest = entry.latest_published
            while latest < len(entry.history) and entry.history[latest].status is Status.COMPLETED:
                entry.history[latest].status = Status.PUBLISHED
                latest += 1
            entry.latest_published = latest
            return latest

    def get_latest_published(self, blob: BlobId) -> int:
        return self._entry(blob).latest_published

    def history(self, blob: BlobId) -> list[tuple[int, PageInterval, Status]]:
        entry = self._entry(blob)
        with entry.lock:
            return [(i + 1, h.segment, h.status) for i, h in enumerate(entry.history)]

    def handle(self, msg_type: int, body: bytes) -> bytes:
        if msg_type == MsgType.VM_ALLOC:
            return self.alloc_blob(unpack_u64(body), unpack_u64(body, 8)).raw
        if msg_type == MsgType.VM_ASSIGN:
            segment = PageInterval(unpack_u64(body, 16), unpack_u64(body, 24))
            v, links = self.assign_version(unpack_blob(body), segment)
            return pack_u64(v) + pack_u32(len(links)) + b"".join(link.encode() for link in links)
        if msg_type == MsgType.VM_COMPLETE:
            return pack_u64(self.complete_version(unpack_blob(body), unpack_u64(body, 16)))
        if msg_type == MsgType.VM_LATEST:
            blob = unpack_blob(body)
            layout = self.layout(blob)
            return (
                pack_u64(self.get_latest_published(blob))
                + pack_u64(layout.total_size)
                + pack_u64(layout.page_size)
            )
        raise UnknownMessageType(f"version manager cannot handle 0x{msg_type:02x}")


def decode_assignment(body: bytes) -> tuple[int, list[BorderLink]]:
    v = unpack_u64(body)
    count = unpack_u32(body, 8)
    return v, [BorderLink.decode(body, 12 + 24 * i) for i in range(count)]
