"""Client library: ALLOC, READ and WRITE over the four server roles.

A write stores its pages first, then asks the version manager for a version
number and border links, then publishes its metadata nodes and reports
completion. The version manager is the only point where concurrent clients
synchronize; page and metadata traffic is fully parallel.
"""

import secrets
import time
from dataclasses import dataclass, field

from .blob_model import (
    BlobId,
    BlobLayout,
    ByteRange,
    byte_range_to_page_interval,
    is_page_aligned,
    pack_u64,
    unpack_u64,
    validate_range,
)
from .cache import DEFAULT_CAPACITY, NodeCache
from .errors import (
    MetadataStoreUnavailable,
    PageMissing,
    ProviderUnavailable,
    TransportError,
    UnalignedWrite,
    VersionNotPublished,
    ZeroSize,
)
from .metadata_store import shards_of
from .page_store import PageKey, PageRef, encode_page_put
from .protocol import MsgType, pack_u32
from .provider_manager import decode_allocation
from .segment_tree import (
    MetadataNode,
    MetadataNodeKey,
    build_write_tree,
    plan_lookup,
    root_descriptor,
)
from .transport import Transport
from .version_manager import decode_assignment


@dataclass
class ClientConfig:
    version_manager: str
    provider_manager: str
    metadata_shards: list[str]
    metadata_cache_capacity: int = DEFAULT_CAPACITY
    max_in_flight_requests: int = 1024
    retries: int = 3
    retry_backoff: float = 0.1
    publish_poll_interval: float = 0.01


@dataclass
class ReadResult:
    vr: int
    data: bytes


@dataclass
class OpTrace:
    """Per-operation instrumentation filled in by ``read``/``write``."""

    version: int = 0
    metadata_nodes: int = 0
    metadata_requests: int = 0
    page_requests: int = 0
    metadata_seconds: float = 0.0
    data_seconds: float = 0.0
    total_seconds: float = 0.0
    page_versions: list = field(default_factory=list)


class BlobClient:
    def __init__(self, config: ClientConfig, transport: Transport):
        if not config.metadata_shards:
            raise ValueError("at least one metadata shard is required")
        self.config = config
        self.transport = transport
        self.cache = NodeCache(config.metadata_cache_capacity)
        self._layouts: dict[BlobId, BlobLayout] = {}

    def close(self):
        self.transport.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- version manager ---------------------------------------------------

    def alloc(self, total_size: int, page_size: int) -> BlobId:
        # validate locally first so bad geometry never reaches the server
        layout = BlobLayout(total_size, page_size)
        body = self.transport.call(
            self.config.version_manager, MsgType.VM_ALLOC, pack_u64(total_size) + pack_u64(page_size)
        )
        blob = BlobId(bytes(body))
        self._layouts[blob] = layout
        return blob

    def _latest_and_layout(self, blob: BlobId) -> tuple[int, BlobLayout]:
        body = self.transport.call(self.config.version_manager, MsgType.VM_LATEST, blob.raw)
        layout = self._layouts.get(blob)
        if layout is None:
            layout = self._layouts[blob] = BlobLayout(unpack_u64(body, 8), unpack_u64(body, 16))
        return unpack_u64(body), layout

    def latest(self, blob: BlobId) -> int:
        return self._latest_and_layout(blob)[0]

    def layout(self, blob: BlobId) -> BlobLayout:
        layout = self._layouts.get(blob)
        if layout is None:
            layout = self._latest_and_layout(blob)[1]
        return layout

    def await_published(self, blob: BlobId, version: int, timeout: float | None = 30.0) -> int:
        """Poll until ``version`` is published; return the latest published version."""
        deadline = None if timeout is None else time.monotonic() + timeout
        while True:
            latest = self.latest(blob)
            if latest >= version:
                return latest
            if deadline is not None and time.monotonic() > deadline:
                raise TimeoutError(f"version {version} not published after {timeout} s (latest={latest})")
            time.sleep(self.config.publish_poll_interval)

    # -- fan-out helper ----------------------------------------------------

    def _gather(self, requests, unavailable) -> list:
        """Send ``(dest, type, body)`` requests concurrently; retry transport failures."""
        results = [None] * len(requests)
        todo = list(range(len(requests)))
        window = max(1, self.config.max_in_flight_requests)
        last_error = None
        for attempt in range(max(1, self.config.retries)):
            failed = []
            for start in range(0, len(todo), window):
                chunk = todo[start:start + window]
                futures = self.transport.submit_many([requests[i] for i in chunk])
                for i, fut in zip(chunk, futures):
                    try:
                        results[i] = self.transport.wait(fut)
                    except TransportError as exc:
                        failed.append(i)
                        last_error = exc
            if not failed:
                return results
            todo = failed
            if attempt + 1 < self.config.retries:
                time.sleep(self.config.retry_backoff)
        raise unavailable(f"{len(todo)} requests failed after {self.config.retries} attempts: {last_error}")

    def _shards(self, keys: list[MetadataNodeKey]) -> list[str]:
        shards = self.config.metadata_shards
        return [shards[i] for i in shards_of(keys, len(shards))]

    # -- WRITE -------------------------------------------------------------

    def write(self, blob: BlobId, buffer, offset: int, trace: OpTrace | None = None) -> int:
        """Patch ``blob`` with ``buffer`` at ``offset``; return the new version.

        The version may not be published yet when this returns if an earlier
        writer is still in flight; see ``await_published``.
        """
        started = time.perf_counter()
        layout = self.layout(blob)
        buffer = memoryview(buffer).cast("B")
        if len(buffer) == 0:
            raise ZeroSize("write buffer is empty")
        rng = ByteRange(offset, len(buffer))
        if not is_page_aligned(layout, rng):
            raise UnalignedWrite(
                f"write ({offset}, {len(buffer)}) is not aligned to {layout.page_size}-byte pages"
            )
        validate_range(layout, rng)
        segment = byte_range_to_page_interval(layout, rng)
        ps = layout.page_size

        addresses = decode_allocation(
            self.transport.call(
                self.config.provider_manager, MsgType.PM_ALLOCATE, pack_u32(segment.page_len) + pack_u64(ps)
            )
        )
        write_uuid = secrets.token_bytes(16)
        keys = [PageKey(blob, write_uuid, i) for i in range(segment.page_len)]
        puts = [
            (addresses[i], MsgType.PAGE_PUT, encode_page_put(keys[i], buffer[i * ps:(i + 1) * ps], ps))
            for i in range(segment.page_len)
        ]
        self._gather(puts, ProviderUnavailable)
        data_done = time.perf_counter()

        v, links = decode_assignment(
            self.transport.call(
                self.config.version_manager,
                MsgType.VM_ASSIGN,
                blob.raw + pack_u64(segment.first_page) + pack_u64(segment.page_len),
            )
        )
        refs = [PageRef(addresses[i], keys[i]) for i in range(segment.page_len)]
        nodes = build_write_tree(blob, v, segment, refs, links, root_descriptor(layout))
        dests = self._shards([n.key for n in nodes])
        self._gather(
            [(dest, MsgType.META_PUT, n.encode()) for dest, n in zip(dests, nodes)], MetadataStoreUnavailable
        )
        meta_done = time.perf_counter()

        self.transport.call(self.config.version_manager, MsgType.VM_COMPLETE, blob.raw + pack_u64(v))
        if trace is not None:
            trace.version = v
            trace.metadata_nodes = len(nodes)
            trace.metadata_requests = len(nodes)
            trace.page_requests = len(puts)
            trace.data_seconds = data_done - started
            trace.metadata_seconds = meta_done - data_done
            trace.total_seconds = time.perf_counter() - started
        return v

    # -- READ --------------------------------------------------------------

    def read(self, blob: BlobId, version: int, offset: int, size: int, trace: OpTrace | None = None) -> ReadResult:
        """Read ``size`` bytes at ``offset`` of snapshot ``version``.

        Raises VersionNotPublished when ``version`` is newer than the latest
        published version, which is sampled before any data is fetched.
        """
        started = time.perf_counter()
        vr, layout = self._latest_and_layout(blob)
        rng = ByteRange(offset, size)
        validate_range(layout, rng)
        if version > vr or version < 0:
            raise VersionNotPublished(vr, version)
        segment = byte_range_to_page_interval(layout, rng)
        ps = layout.page_size

        counts = {"nodes": 0, "remote": 0}
        leaf_versions = {}

        def fetch_level(keys):
            counts["nodes"] += len(keys)
            found = [self.cache.get(k) for k in keys]
            missing = [i for i, node in enumerate(found) if node is None]
            if missing:
                counts["remote"] += len(missing)
                dests = self._shards([keys[i] for i in missing])
                bodies = self._gather(
                    [(dest, MsgType.META_GET, keys[i].encode()) for dest, i in zip(dests, missing)],
                    MetadataStoreUnavailable,
                )
                for i, body in zip(missing, bodies):
                    if body[0] == 1:
                        node = MetadataNode(keys[i], MetadataNode.decode_body(body, 1))
                        self.cache.put(keys[i], node)
                        found[i] = node
            for key in keys:
                if key.descriptor.size == 1:
                    leaf_versions[key.descriptor.offset] = key.version
            return found

        entries = plan_lookup(fetch_level, blob, version, segment, root_descriptor(layout))
        meta_done = time.perf_counter()

        zero = memoryview(bytes(ps))
        pieces = [zero] * segment.page_len
        wanted = [(page, ref) for page, ref in entries if isinstance(ref, PageRef)]
        if wanted:
            bodies = self._gather(
                [(ref.provider, MsgType.PAGE_GET, ref.key.encode()) for _, ref in wanted], ProviderUnavailable
            )
            for (page, ref), body in zip(wanted, bodies):
                if body[0] != 1:
                    raise PageMissing(f"page {page} missing on provider {ref.provider}")
                pieces[page - segment.first_page] = body[1:]
        # trim to the requested bytes, then copy everything once
        skip = offset - segment.first_page * ps
        tail = segment.end * ps - (offset + size)
        pieces[-1] = pieces[-1][:ps - tail]
        pieces[0] = pieces[0][skip:]
        data = b"".join(pieces)

        if trace is not None:
            trace.version = version
            trace.metadata_nodes = counts["nodes"]
            trace.metadata_requests = counts["remote"]
            trace.page_requests = len(wanted)
            trace.page_versions = [leaf_versions.get(p, 0) for p in segment.pages()]
            trace.metadata_seconds = meta_done - started
            trace.data_seconds = time.perf_counter() - meta_done
            trace.total_seconds = time.perf_counter() - started
        return ReadResult(vr, data)

    ALLOC = alloc
    READ = read
    WRITE = write
