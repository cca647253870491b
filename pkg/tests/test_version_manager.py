import random
import threading

import pytest

from blobseer_lite.blob_model import PageInterval
from blobseer_lite.errors import AlreadyCompleted, NotPowerOfTwo, SegmentOutOfRange, UnknownBlob, UnknownVersion
from blobseer_lite.protocol import MsgType
from blobseer_lite.segment_tree import NodeDescriptor as D
from blobseer_lite.version_manager import Status, VersionManager, decode_assignment

from conftest import scan_border_links

P = PageInterval


def pairs(links):
    return [((l.child.offset, l.child.size), l.child_version) for l in links]


@pytest.fixture
def vm4():
    vm = VersionManager()
    return vm, vm.alloc_blob(4 << 16, 1 << 16)


def test_three_write_links(vm4):
    vm, blob = vm4
    assert vm.assign_version(blob, P(0, 4)) == (1, [])
    v, links = vm.assign_version(blob, P(1, 1))
    assert (v, pairs(links)) == (2, [((0, 1), 1), ((2, 2), 1)])
    v, links = vm.assign_version(blob, P(2, 1))
    assert (v, pairs(links)) == (3, [((0, 2), 2), ((3, 1), 1)])


def test_first_write_links_to_zero(vm4):
    vm, blob = vm4
    v, links = vm.assign_version(blob, P(0, 1))
    assert (v, pairs(links)) == (1, [((1, 1), 0), ((2, 2), 0)])


def test_alloc_validation():
    vm = VersionManager()
    blob = vm.alloc_blob(1 << 20, 1 << 20)
    assert vm.layout(blob).page_count == 1
    assert vm.assign_version(blob, P(0, 1)) == (1, [])
    with pytest.raises(NotPowerOfTwo):
        vm.alloc_blob(1000, 64)
    with pytest.raises(SegmentOutOfRange):
        vm.assign_version(blob, P(0, 2))
    with pytest.raises(UnknownBlob):
        vm.get_latest_published(type(blob)(bytes(16)))


def test_publication_order(vm4):
    vm, blob = vm4
    assert vm.get_latest_published(blob) == 0
    vm.assign_version(blob, P(0, 1))
    vm.assign_version(blob, P(1, 1))
    assert vm.complete_version(blob, 2) == 0
    assert vm.get_latest_published(blob) == 0
    assert [s for _, _, s in vm.history(blob)] == [Status.ASSIGNED, Status.COMPLETED]
    assert vm.complete_version(blob, 1) == 2
    assert [s for _, _, s in vm.history(blob)] == [Status.PUBLISHED, Status.PUBLISHED]
    with pytest.raises(AlreadyCompleted):
        vm.complete_version(blob, 1)
    with pytest.raises(UnknownVersion):
        vm.complete_version(blob, 3)


def test_sequential_writes_publish_each(vm4):
    vm, blob = vm4
    for k in range(1, 6):
        v, _ = vm.assign_version(blob, P(k % 4, 1))
        assert vm.complete_version(blob, v) == k


@pytest.mark.parametrize("seed", range(20))
def test_links_match_backward_scan(seed):
    rng = random.Random(seed)
    L = 1 << rng.randint(0, 7)
    vm = VersionManager()
    blob = vm.alloc_blob(L * 4096, 4096)
    history = []
    for _ in range(40):
        first = rng.randrange(L)
        seg = P(first, rng.randint(1, L - first))
        want = scan_border_links(history, seg, L)
        v, links = vm.assign_version(blob, seg)
        history.append(seg)
        assert v == len(history)
        assert pairs(links) == want


def test_concurrent_assignment_is_gapless_and_monotonic():
    vm = VersionManager()
    blob = vm.alloc_blob(1 << 30, 1 << 16)
    got = [[] for _ in range(8)]
    barrier = threading.Barrier(8)

    def worker(i):
        rng = random.Random(i)
        barrier.wait()
        for _ in range(200):
            first = rng.randrange(256)
            v, _ = vm.assign_version(blob, P(first, rng.randint(1, 8)))
            got[i].append(v)
            vm.complete_version(blob, v)

    threads = [threading.Thread(target=worker, args=(i,)) for i in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    for seq in got:
        assert seq == sorted(seq)
    assert sorted(v for seq in got for v in seq) == list(range(1, 1601))
    assert vm.get_latest_published(blob) == 1600
    # links recorded under concurrency still equal the sequential definition
    segs = [seg for _, seg, _ in vm.history(blob)]
    check = VersionManager()
    b2 = check.alloc_blob(1 << 30, 1 << 16)
    for i, seg in enumerate(segs[:100]):
        _, links = check.assign_version(b2, seg)
        assert pairs(links) == scan_border_links(segs[:i], seg, 1 << 14)


def test_wire_handler(vm4):
    vm, blob = vm4
    vm.assign_version(blob, P(0, 4))
    body = blob.raw + (1).to_bytes(8, "little") + (1).to_bytes(8, "little")
    v, links = decode_assignment(vm.handle(MsgType.VM_ASSIGN, body))
    assert (v, pairs(links)) == (2, [((0, 1), 1), ((2, 2), 1)])
    latest = vm.handle(MsgType.VM_LATEST, blob.raw)
    assert int.from_bytes(latest[:8], "little") == 0
    assert int.from_bytes(latest[8:16], "little") == 4 << 16
