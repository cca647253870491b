"""Desk-scale benchmarks: metadata cost per access and concurrent throughput.

Both return plain row dicts; ``write_csv`` renders them. Wall-clock columns
vary between runs, every other column is determined by config and seed.
"""

import csv
import io
import random
import statistics
import threading
import time

from ..client import OpTrace
from ..protocol import MsgType
from .cluster import spawn_cluster
from .config import ClusterConfig

METADATA_COLUMNS = ["phase", "shard_count", "segment_bytes", "metadata_nodes_touched", "envelopes_sent", "wall_micros"]
THROUGHPUT_COLUMNS = [
    "mode",
    "n_clients",
    "per_client_MBps_mean",
    "per_client_MBps_min",
    "per_client_MBps_max",
    "aggregate_MBps",
]

DEFAULT_SEGMENTS = [16 << 10, 64 << 10, 256 << 10, 1 << 20, 4 << 20, 16 << 20]
DEFAULT_SHARD_COUNTS = [10, 20, 40]


def write_csv(rows, columns, out=None) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({c: row[c] for c in columns})
    text = buf.getvalue()
    if out is not None:
        if hasattr(out, "write"):
            out.write(text)
        else:
            with open(out, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
    return text


def bench_metadata_overhead(
    config: ClusterConfig | None = None,
    segment_sizes=DEFAULT_SEGMENTS,
    shard_counts=DEFAULT_SHARD_COUNTS,
    blob_size: int = 1 << 40,
    page_size: int = 1 << 16,
    flush_threshold: int | None = None,
) -> list[dict]:
    """Single client; for each segment size write a fresh blob, then read it back.

    Each shard count gets its own cluster with one data provider per
    metadata shard. Segments smaller than a page are written as one page.
    The read phase runs with the metadata cache disabled.
    """
    config = config or ClusterConfig.default()
    rows = []
    for shards in shard_counts:
        cfg = config.replace(metadata_shard_count=shards, data_provider_count=shards)
        with spawn_cluster(cfg) as cluster:
            client = cluster.client(cache_capacity=0, flush_threshold=flush_threshold)
            for seg in segment_sizes:
                blob = client.alloc(blob_size, page_size)
                nbytes = max(page_size, -(-seg // page_size) * page_size)
                payload = random.Random(cfg.rng_seed ^ seg).randbytes(nbytes)

                before = cluster.counters.snapshot()["envelopes_by_type"].get(MsgType.META_PUT, 0)
                trace = OpTrace()
                v = client.write(blob, payload, 0, trace=trace)
                after = cluster.counters.snapshot()["envelopes_by_type"].get(MsgType.META_PUT, 0)
                rows.append(_meta_row("write", shards, seg, trace, after - before))

                before = cluster.counters.snapshot()["envelopes_by_type"].get(MsgType.META_GET, 0)
                trace = OpTrace()
                client.read(blob, v, 0, seg, trace=trace)
                after = cluster.counters.snapshot()["envelopes_by_type"].get(MsgType.META_GET, 0)
                rows.append(_meta_row("read", shards, seg, trace, after - before))
    return rows


def _meta_row(phase, shards, seg, trace, envelopes):
    return {
        "phase": phase,
        "shard_count": shards,
        "segment_bytes": seg,
        "metadata_nodes_touched": trace.metadata_nodes,
        "envelopes_sent": envelopes,
        "wall_micros": round(trace.metadata_seconds * 1e6),
    }


def client_segments(client_index: int, n_clients: int, region_segments: int, count: int) -> list[int]:
    """Client i owns segments i, i+n, i+2n, ... of the region (wrapping)."""
    owned = list(range(client_index, region_segments, n_clients)) or [client_index % region_segments]
    return [owned[j % len(owned)] for j in range(count)]


def bench_throughput(
    config: ClusterConfig | None = None,
    clients=(1, 2, 4, 8),
    mode: str = "read",
    iterations: int = 100,
    segment_size: int = 1 << 20,
    region_size: int = 1 << 30,
    blob_size: int = 1 << 40,
    page_size: int = 1 << 16,
    cache: bool = False,
    read_segments_per_client: int = 4,
) -> list[dict]:
    """Per-client bandwidth as the number of simultaneous clients grows.

    Clients start together on a barrier and access disjoint segments of a
    ``region_size`` window. Readers cycle over a few pre-written segments
    each; writers write a new segment every iteration.
    """
    if mode not in ("read", "write"):
        raise ValueError("mode must be read or write")
    config = config or ClusterConfig.default()
    region_segments = region_size // segment_size
    rows = []
    for n in clients:
        with spawn_cluster(config) as cluster:
            setup = cluster.client()
            blob = setup.alloc(blob_size, page_size)
            payload = random.Random(config.rng_seed).randbytes(segment_size)
            plans = []
            for i in range(n):
                if mode == "read":
                    owned = client_segments(i, n, region_segments, read_segments_per_client)
                    plans.append([owned[j % len(owned)] for j in range(iterations)])
                else:
                    plans.append(client_segments(i, n, region_segments, iterations))
            if mode == "read":
                for seg in sorted({s for plan in plans for s in plan}):
                    setup.write(blob, payload, seg * segment_size)
                setup.await_published(blob, setup.latest(blob))
            version = setup.latest(blob)

            barrier = threading.Barrier(n + 1)
            elapsed = [0.0] * n
            errors = []
            workers = [cluster.client(None if cache else 0) for _ in range(n)]

            def run(i):
                client = workers[i]
                client.layout(blob)
                barrier.wait()
                t0 = time.perf_counter()
                try:
                    for seg in plans[i]:
                        if mode == "read":
                            client.read(blob, version, seg * segment_size, segment_size)
                        else:
                            client.write(blob, payload, seg * segment_size)
                except Exception as exc:
                    errors.append(exc)
                elapsed[i] = time.perf_counter() - t0

            threads = [threading.Thread(target=run, args=(i,)) for i in range(n)]
            for t in threads:
                t.start()
            barrier.wait()
            t0 = time.perf_counter()
            for t in threads:
                t.join()
            wall = time.perf_counter() - t0
            if errors:
                raise errors[0]
            mb = iterations * segment_size / 1e6
            per_client = [mb / e for e in elapsed]
            rows.append(
                {
                    "mode": mode,
                    "n_clients": n,
                    "per_client_MBps_mean": round(statistics.fmean(per_client), 3),
                    "per_client_MBps_min": round(min(per_client), 3),
                    "per_client_MBps_max": round(max(per_client), 3),
                    "aggregate_MBps": round(n * mb / wall, 3),
                }
            )
    return rows
