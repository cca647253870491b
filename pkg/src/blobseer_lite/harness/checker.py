"""Serializability check against a flat-array oracle.

Concurrent workers run a seeded mix of writes and reads on one blob. Every
write's (version, offset, bytes) is logged; every read keeps what it
returned. Once all writers are done and published, the log is replayed
version by version and

* every read performed during the run must equal the oracle at its version;
* for each version v, fresh reads around v's patch and at a random spot must
  equal the oracle at v.
"""

import random
import threading
import time
from dataclasses import dataclass, field

from ..blob_model import BlobId
from ..errors import MismatchFound
from .cluster import Cluster, spawn_cluster
from .config import ClusterConfig
from .oracle import DenseOracle, OracleState, Patch, first_difference
from .workload import generate_workload, workload_digest


@dataclass(frozen=True)
class ReadRecord:
    version: int
    offset: int
    size: int
    vr: int
    data: bytes


@dataclass(frozen=True)
class Mismatch:
    version: int
    offset: int
    size: int
    first_diff: int  # absolute byte offset in the blob, -1 for non-byte anomalies
    phase: str

    def as_error(self) -> MismatchFound:
        return MismatchFound(self.version, self.offset, self.size, self.first_diff)


@dataclass
class History:
    blob: BlobId
    total_size: int
    page_size: int
    patches: list[Patch] = field(default_factory=list)
    reads: list[ReadRecord] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)


@dataclass
class CheckReport:
    seed: int
    clients: int
    ops: int
    workload_digest: str = ""
    writes: int = 0
    reads: int = 0
    latest: int = 0
    verified_reads: int = 0
    mismatches: list[Mismatch] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)
    immutability_violations: int = 0
    elapsed: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.mismatches and not self.errors and self.immutability_violations == 0

    def raise_for_mismatch(self) -> None:
        if self.mismatches:
            raise self.mismatches[0].as_error()

    def summary(self) -> str:
        if self.ok:
            return f"OK: 0 mismatches ({self.writes} writes, {self.reads} reads, {self.verified_reads} checked reads)"
        parts = [f"FAIL: {len(self.mismatches)} mismatches"]
        if self.mismatches:
            m = self.mismatches[0]
            parts.append(f"first at version {m.version} range ({m.offset}, {m.size}) byte {m.first_diff} [{m.phase}]")
        if self.errors:
            parts.append(f"{len(self.errors)} worker errors: {self.errors[0]}")
        if self.immutability_violations:
            parts.append(f"{self.immutability_violations} immutability violations")
        return "; ".join(parts)


def run_workload(cluster: Cluster, blob: BlobId, workload, cache_capacity: int | None = None) -> History:
    """Run one worker thread per op list, each with its own client, all starting together."""
    probe = cluster.client()
    layout = probe.layout(blob)
    history = History(blob, layout.total_size, layout.page_size)
    lock = threading.Lock()
    barrier = threading.Barrier(len(workload))

    def worker(ops):
        client = cluster.client(cache_capacity)
        barrier.wait()
        for op in ops:
            try:
                if op.kind == "write":
                    data = op.payload()
                    v = client.write(blob, data, op.offset)
                    with lock:
                        history.patches.append(Patch(v, op.offset, data))
                else:
                    latest = client.latest(blob)
                    v = random.Random(op.seed).randint(0, latest)
                    result = client.read(blob, v, op.offset, op.size)
                    with lock:
                        history.reads.append(ReadRecord(v, op.offset, op.size, result.vr, result.data))
            except Exception as exc:  # recorded; the check reports it as a failure
                with lock:
                    history.errors.append(f"{op.kind} ({op.offset}, {op.size}): {exc!r}")

    threads = [threading.Thread(target=worker, args=(ops,), name=f"worker-{i}") for i, ops in enumerate(workload)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if history.patches:
        probe.await_published(blob, max(p.version for p in history.patches))
    return history


def verify_history(client, history: History, seed: int = 0) -> tuple[list[Mismatch], int]:
    """Replay the oracle and compare reads. Returns (mismatches, reads checked)."""
    mismatches = []
    checked = 0
    patches = sorted(history.patches, key=lambda p: p.version)
    versions = [p.version for p in patches]
    if versions != list(range(1, len(patches) + 1)):
        mismatches.append(Mismatch(-1, 0, 0, -1, "version numbers not consecutive from 1"))
        return mismatches, checked

    by_version: dict[int, list[ReadRecord]] = {}
    for r in history.reads:
        if r.vr < r.version:
            mismatches.append(Mismatch(r.version, r.offset, r.size, -1, "returned vr below requested version"))
        by_version.setdefault(r.version, []).append(r)

    ps = history.page_size
    total = history.total_size
    hot_end = max([p.offset + len(p.data) for p in patches] + [ps])
    rng = random.Random(seed)
    oracle = OracleState(total, ps)

    def compare(version, offset, size, got, phase):
        nonlocal checked
        checked += 1
        want = oracle.read(offset, size)
        diff = first_difference(got, want)
        if diff >= 0:
            mismatches.append(Mismatch(version, offset, size, offset + diff, phase))

    for v in range(0, len(patches) + 1):
        if v:
            oracle.apply(patches[v - 1])
        for r in by_version.get(v, ()):
            compare(v, r.offset, r.size, r.data, "concurrent read")
        ranges = []
        if v:
            p = patches[v - 1]
            lo = max(0, p.offset - ps)
            hi = min(total, p.offset + len(p.data) + ps)
            ranges.append((lo, hi - lo))
        size = rng.randint(1, min(4 * ps, hot_end))
        ranges.append((rng.randrange(0, hot_end - size + 1), size))
        for offset, size in ranges:
            compare(v, offset, size, client.read(history.blob, v, offset, size).data, "final read")

    # the sparse oracle must agree with an independent dense replay
    dense = DenseOracle(total).replay(patches)
    for page in oracle.written_pages():
        a, b = oracle.read(page * ps, ps), dense.read(page * ps, ps)
        if a != b:
            mismatches.append(Mismatch(len(patches), page * ps, ps, page * ps + first_difference(a, b), "oracle self-check"))
    return mismatches, checked


def run_serializability_check(
    config: ClusterConfig | None = None,
    clients: int = 16,
    ops: int = 200,
    seed: int | None = None,
    blob_size: int = 1 << 30,
    page_size: int = 1 << 16,
    hot_pages: int = 256,
    max_write_pages: int = 8,
    cluster: Cluster | None = None,
) -> CheckReport:
    config = (config or ClusterConfig.default()).replace(track_puts=True)
    seed = config.rng_seed if seed is None else seed
    started = time.perf_counter()
    own = cluster is None
    cluster = cluster or spawn_cluster(config)
    try:
        setup = cluster.client()
        blob = setup.alloc(blob_size, page_size)
        workload = generate_workload(
            seed, clients, ops, setup.layout(blob), hot_pages=hot_pages, max_write_pages=max_write_pages
        )
        report = CheckReport(seed, clients, ops, workload_digest(workload))
        history = run_workload(cluster, blob, workload)
        report.writes = len(history.patches)
        report.reads = len(history.reads)
        report.errors = list(history.errors)
        report.latest = setup.latest(blob)
        report.mismatches, report.verified_reads = verify_history(setup, history, seed)
        report.immutability_violations = cluster.immutability_violations()
    finally:
        if own:
            cluster.stop()
    report.elapsed = time.perf_counter() - started
    return report
