import random

import pytest

from blobseer_lite.client import OpTrace
from blobseer_lite.errors import (
    NotPowerOfTwo,
    OutOfRange,
    ProviderUnavailable,
    UnalignedWrite,
    VersionNotPublished,
    ZeroSize,
)
from blobseer_lite.protocol import MsgType

PAGE = 1 << 16


def page(fill):
    return bytes([fill]) * PAGE


def test_alloc(client):
    blob = client.alloc(1 << 40, PAGE)
    assert client.latest(blob) == 0
    assert client.read(blob, 0, (1 << 40) - 100, 100).data == bytes(100)
    single = client.alloc(PAGE, PAGE)
    assert client.layout(single).page_count == 1
    with pytest.raises(NotPowerOfTwo):
        client.alloc(1000, 64)


def test_sequential_whole_blob_writes(client):
    blob = client.alloc(4 * PAGE, PAGE)
    a, b = random.Random(1).randbytes(4 * PAGE), random.Random(2).randbytes(4 * PAGE)
    assert client.write(blob, a, 0) == 1
    assert client.write(blob, b, 0) == 2
    assert client.read(blob, 1, 0, 4 * PAGE).data == a
    assert client.read(blob, 2, 0, 4 * PAGE).data == b


def test_three_overlapping_writes(client):
    blob = client.alloc(4 * PAGE, PAGE)
    client.write(blob, page(1) * 4, 0)
    assert client.write(blob, page(2), PAGE) == 2
    trace = OpTrace()
    client.read(blob, 2, 0, 4 * PAGE, trace=trace)
    assert trace.page_versions == [1, 2, 1, 1]
    assert client.write(blob, page(3), 2 * PAGE) == 3
    trace = OpTrace()
    result = client.read(blob, 3, 0, 4 * PAGE, trace=trace)
    assert trace.page_versions == [1, 2, 3, 1]
    assert result.data == page(1) + page(2) + page(3) + page(1)
    assert result.vr == 3


def test_unaligned_write_changes_nothing(cluster, client):
    blob = client.alloc(4 * PAGE, PAGE)
    before = cluster.counters.snapshot()["messages"]
    for offset, data in [(1, page(1)), (0, b"x" * 100)]:
        with pytest.raises(UnalignedWrite):
            client.write(blob, data, offset)
    with pytest.raises(ZeroSize):
        client.write(blob, b"", 0)
    with pytest.raises(OutOfRange):
        client.write(blob, page(1), 4 * PAGE)
    assert cluster.counters.snapshot()["messages"] == before
    assert client.latest(blob) == 0
    assert all(p.stats() == (0, 0) for p in cluster.providers)


def test_read_errors(client):
    blob = client.alloc(4 * PAGE, PAGE)
    for _ in range(3):
        client.write(blob, page(7), 0)
    with pytest.raises(VersionNotPublished, match=r"latest=3"):
        client.read(blob, 5, 0, 10)
    with pytest.raises(ZeroSize):
        client.read(blob, 1, 0, 0)
    with pytest.raises(OutOfRange):
        client.read(blob, 1, 4 * PAGE - 1, 2)


def test_unaligned_reads(client):
    blob = client.alloc(16 * PAGE, PAGE)
    data = random.Random(3).randbytes(4 * PAGE)
    client.write(blob, data, 2 * PAGE)
    full = bytes(2 * PAGE) + data + bytes(10 * PAGE)
    rng = random.Random(4)
    for _ in range(30):
        off = rng.randrange(16 * PAGE - 1)
        size = rng.randint(1, min(5 * PAGE, 16 * PAGE - off))
        assert client.read(blob, 1, off, size).data == full[off:off + size]


def test_one_assign_and_one_complete_per_write(cluster, client):
    blob = client.alloc(1 << 30, PAGE)
    before = cluster.counters.snapshot()["messages_by_type"]
    client.write(blob, bytes(8 * PAGE), 16 * PAGE)
    after = cluster.counters.snapshot()["messages_by_type"]
    delta = {t: after.get(t, 0) - before.get(t, 0) for t in after}
    assert delta[MsgType.VM_ASSIGN] == 1
    assert delta[MsgType.VM_COMPLETE] == 1
    assert delta[MsgType.PAGE_PUT] == 8
    assert delta[MsgType.PM_ALLOCATE] == 1


def test_cache_is_transparent(cluster):
    writer = cluster.client()
    blob = writer.alloc(1 << 30, PAGE)
    for i in range(5):
        writer.write(blob, page(i + 1) * 3, i * 2 * PAGE)
    cached, uncached = cluster.client(1 << 20), cluster.client(0)

    def meta_gets(c, v):
        before = cluster.counters.snapshot()["messages_by_type"].get(MsgType.META_GET, 0)
        data = c.read(blob, v, 0, 12 * PAGE).data
        return data, cluster.counters.snapshot()["messages_by_type"].get(MsgType.META_GET, 0) - before

    for v in range(6):
        cold_data, cold = meta_gets(cached, v)
        warm_data, warm = meta_gets(cached, v)
        plain_data, plain = meta_gets(uncached, v)
        assert cold_data == warm_data == plain_data
        assert warm == 0
        assert plain >= cold
    assert cached.cache.hits > 0


def test_stopped_provider_surfaces_error(cluster):
    c = cluster.client()
    c.config.retry_backoff = 0.01
    blob = c.alloc(1 << 20, PAGE)
    c.write(blob, bytes(4 * PAGE), 0)
    for p in cluster.providers:
        cluster.stop_provider(p.address)
    with pytest.raises(ProviderUnavailable):
        c.read(blob, 1, 0, PAGE)
