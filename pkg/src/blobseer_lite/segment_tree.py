"""Versioned segment-tree metadata.

Every version of a blob is described by a full binary tree over its pages.
A node covering ``(offset, size)`` pages has children ``(offset, size/2)`` and
``(offset + size/2, size/2)``; leaves cover one page and reference it.

A write only materializes the nodes whose interval intersects the written
segment. Inner nodes store the *version* of each child rather than a full
key, since the child descriptor follows from the parent. A child that lies
outside the segment (a border child) points at an older version supplied by
the version manager; version 0 means "never written" and is synthesized as
zero pages instead of being stored.
"""

from dataclasses import dataclass
from typing import Callable, Sequence

from .blob_model import BlobId, BlobLayout, PageInterval, is_power_of_two, pack_u64, unpack_u64
from .errors import ArityMismatch, LeafHasNoChildren, LinkMismatch, NodeMissing, SegmentOutOfTree
from .page_store import PageRef

KEY_SIZE = 40
TAG_INNER = 0x01
TAG_LEAF = 0x02


class _Zero:
    """Marker for a page that has never been written (reads as zeros)."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "ZERO"

    def __reduce__(self):
        return (_Zero, ())


ZERO = _Zero()


@dataclass(frozen=True, slots=True)
class NodeDescriptor:
    offset: int
    size: int

    def __post_init__(self):
        if not is_power_of_two(self.size) or self.offset % self.size:
            raise ValueError(f"invalid node descriptor ({self.offset}, {self.size})")

    @property
    def interval(self) -> PageInterval:
        return PageInterval(self.offset, self.size)

    @property
    def end(self) -> int:
        return self.offset + self.size

    @property
    def is_leaf(self) -> bool:
        return self.size == 1

    def intersects(self, segment: PageInterval) -> bool:
        return self.offset < segment.end and segment.first_page < self.end


def root_descriptor(layout: BlobLayout) -> NodeDescriptor:
    return NodeDescriptor(0, layout.page_count)


@dataclass(frozen=True, slots=True)
class MetadataNodeKey:
    blob: BlobId
    version: int
    descriptor: NodeDescriptor

    def encode(self) -> bytes:
        d = self.descriptor
        return self.blob.raw + pack_u64(self.version) + pack_u64(d.offset) + pack_u64(d.size)

    @classmethod
    def decode(cls, data, offset: int = 0) -> "MetadataNodeKey":
        return cls(
            BlobId(bytes(data[offset:offset + 16])),
            unpack_u64(data, offset + 16),
            NodeDescriptor(unpack_u64(data, offset + 24), unpack_u64(data, offset + 32)),
        )


@dataclass(frozen=True, slots=True)
class Inner:
    left_version: int
    right_version: int


@dataclass(frozen=True, slots=True)
class Leaf:
    page_ref: PageRef


@dataclass(frozen=True, slots=True)
class MetadataNode:
    key: MetadataNodeKey
    body: Inner | Leaf

    def encode_body(self) -> bytes:
        if isinstance(self.body, Inner):
            return bytes([TAG_INNER]) + pack_u64(self.body.left_version) + pack_u64(self.body.right_version)
        return bytes([TAG_LEAF]) + self.body.page_ref.encode()

    def encode(self) -> bytes:
        return self.key.encode() + self.encode_body()

    @staticmethod
    def decode_body(data, offset: int = 0) -> Inner | Leaf:
        tag = data[offset]
        if tag == TAG_INNER:
            if len(data) - offset < 17:
                raise ValueError("truncated inner node")
            return Inner(unpack_u64(data, offset + 1), unpack_u64(data, offset + 9))
        if tag == TAG_LEAF:
            ref, _ = PageRef.decode(data, offset + 1)
            return Leaf(ref)
        raise ValueError(f"unknown node tag 0x{tag:02x}")

    @classmethod
    def decode(cls, data) -> "MetadataNode":
        return cls(MetadataNodeKey.decode(data), cls.decode_body(data, KEY_SIZE))


@dataclass(frozen=True, slots=True)
class BorderLink:
    child: NodeDescriptor
    child_version: int

    def encode(self) -> bytes:
        return pack_u64(self.child.offset) + pack_u64(self.child.size) + pack_u64(self.child_version)

    @classmethod
    def decode(cls, data, offset: int = 0) -> "BorderLink":
        return cls(
            NodeDescriptor(unpack_u64(data, offset), unpack_u64(data, offset + 8)),
            unpack_u64(data, offset + 16),
        )


def children_of(d: NodeDescriptor) -> tuple[NodeDescriptor, NodeDescriptor]:
    if d.size == 1:
        raise LeafHasNoChildren(f"leaf ({d.offset}, 1) has no children")
    half = d.size // 2
    return NodeDescriptor(d.offset, half), NodeDescriptor(d.offset + half, half)


def _check_segment(root: NodeDescriptor, segment: PageInterval) -> None:
    if segment.page_len < 1 or segment.first_page < root.offset or segment.end > root.end:
        raise SegmentOutOfTree(
            f"segment ({segment.first_page}, {segment.page_len}) outside root ({root.offset}, {root.size})"
        )


def write_tree_shape(root: NodeDescriptor, segment: PageInterval) -> tuple[list[NodeDescriptor], list[NodeDescriptor]]:
    """One walk yielding ``(write_node_set, border_children)``."""
    _check_segment(root, segment)
    nodes, border = [], []
    stack = [root]
    while stack:
        d = stack.pop()
        nodes.append(d)
        if d.size > 1:
            left, right = children_of(d)
            # push right first so left is visited first
            if right.intersects(segment):
                stack.append(right)
            else:
                border.append(right)
            if left.intersects(segment):
                stack.append(left)
            else:
                border.append(left)
    border.sort(key=lambda c: c.offset)
    return nodes, border


def write_node_set(root: NodeDescriptor, segment: PageInterval) -> list[NodeDescriptor]:
    """Descriptors intersecting ``segment``, in pre-order (root, left, right)."""
    return write_tree_shape(root, segment)[0]


def border_children(root: NodeDescriptor, segment: PageInterval) -> list[NodeDescriptor]:
    """Children missing from the write tree of ``segment``, by ascending offset."""
    return write_tree_shape(root, segment)[1]


def build_write_tree(
    blob: BlobId,
    version: int,
    segment: PageInterval,
    page_refs: Sequence[PageRef],
    links: Sequence[BorderLink],
    root: NodeDescriptor,
) -> list[MetadataNode]:
    """Materialize the nodes of ``version`` for a write of ``segment``.

    ``page_refs[i]`` is the freshly stored page ``segment.first_page + i``.
    ``links`` must name exactly the border children of the write tree; each
    gives the version to record for that missing child.
    """
    if len(page_refs) != segment.page_len:
        raise ArityMismatch(f"{len(page_refs)} page refs for a {segment.page_len}-page segment")
    touched, expected = write_tree_shape(root, segment)
    link_map = {link.child: link.child_version for link in links}
    if len(link_map) != len(links) or set(link_map) != set(expected):
        raise LinkMismatch(
            f"links {sorted((c.offset, c.size) for c in link_map)} do not match border "
            f"children {[(c.offset, c.size) for c in expected]}"
        )
    for link in links:
        if link.child_version >= version:
            raise LinkMismatch(f"link {link} does not point to an older version than {version}")

    nodes = []
    for d in touched:
        key = MetadataNodeKey(blob, version, d)
        if d.size == 1:
            nodes.append(MetadataNode(key, Leaf(page_refs[d.offset - segment.first_page])))
            continue
        left, right = children_of(d)
        lv = version if left.intersects(segment) else link_map[left]
        rv = version if right.intersects(segment) else link_map[right]
        nodes.append(MetadataNode(key, Inner(lv, rv)))
    return nodes


FetchLevel = Callable[[list[MetadataNodeKey]], Sequence["MetadataNode | None"]]


def plan_lookup(
    fetch: FetchLevel,
    blob: BlobId,
    version: int,
    segment: PageInterval,
    root: NodeDescriptor,
) -> list[tuple[int, "PageRef | _Zero"]]:
    """Resolve every page of ``segment`` at ``version`` to a page ref or ZERO.

    The tree is walked level by level; ``fetch`` receives all keys of one level
    at once and may retrieve them in any order or in parallel. It returns the
    node for each key, or None when the key is absent.
    """
    _check_segment(root, segment)
    resolved: dict[int, object] = {}
    frontier: list[tuple[NodeDescriptor, int]] = []

    def visit(d: NodeDescriptor, v: int) -> None:
        if v == 0:
            lo = max(d.offset, segment.first_page)
            hi = min(d.end, segment.end)
            for page in range(lo, hi):
                resolved[page] = ZERO
        else:
            frontier.append((d, v))

    visit(root, version)
    while frontier:
        keys = [MetadataNodeKey(blob, v, d) for d, v in frontier]
        nodes = fetch(keys)
        frontier = []
        for key, node in zip(keys, nodes):
            if node is None:
                raise NodeMissing(
                    f"node ({key.descriptor.offset}, {key.descriptor.size}) of version "
                    f"{key.version} is missing"
                )
            d = key.descriptor
            if d.size == 1:
                if not isinstance(node.body, Leaf):
                    raise NodeMissing(f"expected a leaf at page {d.offset}")
                resolved[d.offset] = node.body.page_ref
                continue
            if not isinstance(node.body, Inner):
                raise NodeMissing(f"expected an inner node at ({d.offset}, {d.size})")
            left, right = children_of(d)
            if left.intersects(segment):
                visit(left, node.body.left_version)
            if right.intersects(segment):
                visit(right, node.body.right_version)
    return [(page, resolved[page]) for page in segment.pages()]
