"""Metadata provider: sharded, write-once storage of segment-tree nodes.

Keys are spread over a fixed set of shards with 64-bit FNV-1a over the
40-byte canonical key encoding.
"""

import hashlib
import threading

from .errors import ImmutabilityViolation, ShardUnavailable, UnknownMessageType
from .protocol import MsgType
from .segment_tree import KEY_SIZE, MetadataNode, MetadataNodeKey

FNV_OFFSET_BASIS = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a_64(data: bytes, h: int = FNV_OFFSET_BASIS) -> int:
    """64-bit FNV-1a. Pass the hash of a prefix as ``h`` to continue from it."""
    for byte in data:
        h = ((h ^ byte) * FNV_PRIME) & _MASK64
    return h


def shard_of(key: MetadataNodeKey, shard_count: int) -> int:
    if shard_count < 1:
        raise ValueError("shard_count must be at least 1")
    return fnv1a_64(key.encode()) % shard_count


def shards_of(keys, shard_count: int) -> list[int]:
    """``shard_of`` for many keys, hashing each shared blob/version prefix once."""
    if shard_count < 1:
        raise ValueError("shard_count must be at least 1")
    prefixes = {}
    out = []
    for key in keys:
        encoded = key.encode()
        head = encoded[:24]
        h = prefixes.get(head)
        if h is None:
            h = prefixes[head] = fnv1a_64(head)
        out.append(fnv1a_64(encoded[24:], h) % shard_count)
    return out


class MetadataShard:
    """One shard of the metadata key-value store."""

    def __init__(self, index: int = 0, track_puts: bool = False):
        self.index = index
        self._nodes: dict[bytes, bytes] = {}
        self._lock = threading.Lock()
        self.available = True
        self.violations = 0
        self.put_log: dict[bytes, set] | None = {} if track_puts else None

    def __len__(self):
        return len(self._nodes)

    def put_raw(self, key: bytes, body: bytes) -> None:
        if not self.available:
            raise ShardUnavailable(f"shard {self.index} is down")
        key, body = bytes(key), bytes(body)
        with self._lock:
            if self.put_log is not None:
                self.put_log.setdefault(key, set()).add(hashlib.blake2b(body, digest_size=16).digest())
            existing = self._nodes.get(key)
            if existing is None:
                self._nodes[key] = body
            elif existing != body:
                self.violations += 1
                raise ImmutabilityViolation(f"metadata key {key.hex()} already holds different content")

    def get_raw(self, key: bytes) -> bytes | None:
        if not self.available:
            raise ShardUnavailable(f"shard {self.index} is down")
        return self._nodes.get(bytes(key))

    def put_node(self, node: MetadataNode) -> None:
        self.put_raw(node.key.encode(), node.encode_body())

    def get_node(self, key: MetadataNodeKey) -> MetadataNode | None:
        # version-0 nodes are never stored, so they miss naturally
        body = self.get_raw(key.encode())
        if body is None:
            return None
        return MetadataNode(key, MetadataNode.decode_body(body))

    def handle(self, msg_type: int, body: bytes) -> bytes:
        if msg_type == MsgType.META_PUT:
            self.put_raw(body[:KEY_SIZE], body[KEY_SIZE:])
            return b""
        if msg_type == MsgType.META_GET:
            stored = self.get_raw(body[:KEY_SIZE])
            return b"\x00" if stored is None else b"\x01" + stored
        raise UnknownMessageType(f"metadata shard cannot handle 0x{msg_type:02x}")
