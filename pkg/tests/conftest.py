"""Shared fixtures and brute-force oracles.

The oracles here deliberately avoid the code under test: they enumerate every
node of a tree, scan write histories backwards, or replay patches into a
flat array.
"""

import numpy as np
import pytest

from blobseer_lite import ClusterConfig, spawn_cluster
from blobseer_lite.blob_model import PageInterval
from blobseer_lite.segment_tree import NodeDescriptor

# No injected delays, no heartbeat thread: functional tests only.
FAST = dict(latency_us=0, bandwidth_MBps=0, heartbeat_s=0)


def all_descriptors(page_count: int) -> list[NodeDescriptor]:
    """Every node of a complete tree over ``page_count`` pages, level by level."""
    out = []
    size = page_count
    while size >= 1:
        out.extend(NodeDescriptor(off, size) for off in range(0, page_count, size))
        size //= 2
    return out


def brute_write_nodes(page_count: int, segment: PageInterval) -> set[tuple[int, int]]:
    return {
        (d.offset, d.size)
        for d in all_descriptors(page_count)
        if d.offset < segment.end and segment.first_page < d.offset + d.size
    }


def brute_write_node_count(page_count: int, first: int, length: int) -> int:
    """Count of intersecting nodes with numpy, one vectorized pass per level."""
    total = 0
    size = page_count
    while size >= 1:
        offsets = np.arange(0, page_count, size, dtype=np.int64)
        total += int(np.count_nonzero((offsets < first + length) & (first < offsets + size)))
        size //= 2
    return total


def scan_border_links(history: list[PageInterval], segment: PageInterval, page_count: int):
    """Border links for a new write of ``segment`` after ``history`` (v1..vn).

    Definition-level oracle: for each child missing from the new write tree,
    scan earlier writes newest first and take the first whose segment
    intersects the child's interval; 0 when none does.
    """
    nodes = brute_write_nodes(page_count, segment)
    missing = []
    for off, size in nodes:
        if size > 1:
            half = size // 2
            for c in ((off, half), (off + half, half)):
                if c not in nodes:
                    missing.append(c)
    links = []
    for off, size in sorted(missing):
        v = 0
        for i in range(len(history), 0, -1):
            s = history[i - 1]
            if s.first_page < off + size and off < s.end:
                v = i
                break
        links.append(((off, size), v))
    return links


def page_versions_oracle(history: list[PageInterval], version: int, page_count: int) -> list[int]:
    """Version that last wrote each page, as of ``version`` (0 = never written)."""
    owner = np.zeros(page_count, dtype=np.int64)
    for v, seg in enumerate(history[:version], start=1):
        owner[seg.first_page:seg.end] = v
    return owner.tolist()


@pytest.fixture
def cluster():
    with spawn_cluster(ClusterConfig(data_provider_count=4, metadata_shard_count=4, **FAST)) as c:
        yield c


@pytest.fixture
def client(cluster):
    return cluster.client()


# -- wire corpus -------------------------------------------------------------

def _frame(body_messages, magic=b"BLOB", proto=1, count=None):
    out = bytearray(magic + bytes([proto]) + (len(body_messages) if count is None else count).to_bytes(2, "little"))
    for mtype, payload in body_messages:
        out += bytes([mtype]) + len(payload).to_bytes(4, "little") + payload
    return bytes(out)


def malformed_corpus():
    """(name, frame, expected error class name) for every rejection rule."""
    ok = _frame([(0x43, b"\x00" * 24)])
    return [
        ("bad magic", b"BLOX" + ok[4:], "BadMagic"),
        ("empty frame", b"", "BadMagic"),
        ("header cut short", ok[:6], "TruncatedFrame"),
        ("message header cut short", ok[:10], "TruncatedFrame"),
        ("payload cut short", ok[:-1], "TruncatedFrame"),
        ("count larger than content", _frame([(0x43, b"x")], count=2), "TruncatedFrame"),
        ("unknown message type", _frame([(0x99, b"x")]), "UnknownMessageType"),
        ("unknown type after a valid one", _frame([(0x43, b"x"), (0x00, b"")]), "UnknownMessageType"),
        ("future protocol version", _frame([(0x43, b"x")], proto=2), "UnsupportedProtocolVersion"),
        ("zero messages", _frame([]), "BatchTooLarge"),
        ("trailing bytes", ok + b"\x00", "TrailingData"),
    ]


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    # expose each phase's report to fixtures (the acceptance reporter reads rep_call)
    outcome = yield
    rep = outcome.get_result()
    setattr(item, f"rep_{rep.when}", rep)
