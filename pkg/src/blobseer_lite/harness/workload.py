"""Seeded random workloads of page-aligned writes and arbitrary reads.

Writes land in a small "hot" window at the start of the blob so that
concurrent writers overlap often.
"""

import hashlib
import random
from dataclasses import dataclass

from ..blob_model import BlobLayout


@dataclass(frozen=True)
class Op:
    kind: str  # "write" or "read"
    offset: int
    size: int
    seed: int

    def payload(self) -> bytes:
        return random.Random(self.seed).randbytes(self.size)


def generate_workload(
    seed: int,
    clients: int,
    ops: int,
    layout: BlobLayout,
    hot_pages: int = 256,
    max_write_pages: int = 8,
    max_read_pages: int = 4,
    write_fraction: float = 0.5,
) -> list[list[Op]]:
    """Split ``ops`` operations round-robin over ``clients`` workers."""
    rng = random.Random(seed)
    ps = layout.page_size
    hot_pages = min(hot_pages, layout.page_count)
    per_client: list[list[Op]] = [[] for _ in range(clients)]
    for i in range(ops):
        if rng.random() < write_fraction:
            npages = rng.randint(1, min(max_write_pages, hot_pages))
            first = rng.randrange(0, hot_pages - npages + 1)
            op = Op("write", first * ps, npages * ps, rng.getrandbits(63))
        else:
            hot_bytes = hot_pages * ps
            size = rng.randint(1, min(max_read_pages * ps, hot_bytes))
            offset = rng.randrange(0, hot_bytes - size + 1)
            op = Op("read", offset, size, rng.getrandbits(63))
        per_client[i % clients].append(op)
    return per_client


def workload_digest(workload: list[list[Op]]) -> str:
    h = hashlib.sha256()
    for worker, ops in enumerate(workload):
        for op in ops:
            h.update(f"{worker}:{op.kind}:{op.offset}:{op.size}:{op.seed};".encode())
    return h.hexdigest()
