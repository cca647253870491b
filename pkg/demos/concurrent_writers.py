"""Sixteen clients hammer the same 256 pages; an oracle replay checks every snapshot."""

import sys

from blobseer_lite import ClusterConfig
from blobseer_lite.harness.checker import run_serializability_check

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 7

report = run_serializability_check(ClusterConfig(), clients=16, ops=200, seed=seed)
print(f"seed {seed}: {report.writes} writes, {report.reads} reads, latest version {report.latest}")
print(f"{report.verified_reads} reads compared byte for byte against the replayed patch log")
print(f"rejected or conflicting overwrites: {report.immutability_violations}")
print(report.summary())
print(f"took {report.elapsed:.1f} s")
