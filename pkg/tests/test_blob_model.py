import pytest
from hypothesis import given
from hypothesis import strategies as st

from blobseer_lite.blob_model import (
    BlobId,
    BlobLayout,
    ByteRange,
    PageInterval,
    byte_range_to_page_interval,
    intervals_intersect,
    is_page_aligned,
)
from blobseer_lite.errors import NotPowerOfTwo, OutOfRange, PageLargerThanBlob, TreeTooDeep, ZeroSize

KB = 1 << 10
LAYOUT = BlobLayout(1 << 30, 64 * KB)


@pytest.mark.parametrize(
    "offset,size,expected",
    [
        (0, 64 * KB, PageInterval(0, 1)),
        (65536, 131072, PageInterval(1, 2)),
        (1000, 70000, PageInterval(0, 2)),
    ],
)
def test_page_interval_examples(offset, size, expected):
    assert byte_range_to_page_interval(LAYOUT, ByteRange(offset, size)) == expected


@given(st.integers(0, 4095), st.integers(1, 4096))
def test_page_interval_matches_enumeration(offset, size):
    layout = BlobLayout(8192, 256)
    if offset + size > layout.total_size:
        with pytest.raises(OutOfRange):
            byte_range_to_page_interval(layout, ByteRange(offset, size))
        return
    pages = sorted({b // layout.page_size for b in range(offset, offset + size)})
    got = byte_range_to_page_interval(layout, ByteRange(offset, size))
    assert list(got.pages()) == pages


def test_range_errors():
    with pytest.raises(ZeroSize):
        byte_range_to_page_interval(LAYOUT, ByteRange(0, 0))
    with pytest.raises(OutOfRange):
        byte_range_to_page_interval(LAYOUT, ByteRange(LAYOUT.total_size - 1, 2))
    with pytest.raises(OutOfRange):
        byte_range_to_page_interval(LAYOUT, ByteRange(-1, 2))


@pytest.mark.parametrize(
    "offset,size,aligned",
    [(0, 128 * KB, True), (1, 64 * KB, False), (64 * KB, 16 * KB, False), (64 * KB, 0, False)],
)
def test_is_page_aligned(offset, size, aligned):
    assert is_page_aligned(LAYOUT, ByteRange(offset, size)) is aligned


def test_intersect_examples():
    assert intervals_intersect(PageInterval(0, 2), PageInterval(1, 1))
    assert not intervals_intersect(PageInterval(0, 1), PageInterval(1, 2))


@given(st.integers(0, 1000), st.integers(1, 1000), st.integers(0, 1000), st.integers(1, 1000))
def test_intersect_is_symmetric_and_matches_sets(a, k, b, m):
    x, y = PageInterval(a, k), PageInterval(b, m)
    assert intervals_intersect(x, x)
    assert intervals_intersect(x, y) == intervals_intersect(y, x) == bool(set(x.pages()) & set(y.pages()))


def test_layout_validation():
    assert BlobLayout(1 << 40, 1 << 16).depth == 24
    assert BlobLayout(1 << 20, 1 << 20).page_count == 1
    with pytest.raises(NotPowerOfTwo):
        BlobLayout(1000, 64)
    with pytest.raises(PageLargerThanBlob):
        BlobLayout(64, 128)
    with pytest.raises(TreeTooDeep):
        BlobLayout(1 << 62, 1)


def test_blob_id_round_trip():
    b = BlobId.new()
    assert BlobId.from_hex(b.hex()) == b
    with pytest.raises(ValueError):
        BlobId(b"short")
