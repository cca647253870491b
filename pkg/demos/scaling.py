"""Per-client bandwidth as readers and writers are added (in-process links of 117.5 MB/s)."""

import sys

from blobseer_lite import ClusterConfig
from blobseer_lite.harness.bench import THROUGHPUT_COLUMNS, bench_throughput, write_csv

iterations = int(sys.argv[1]) if len(sys.argv) > 1 else 30
cfg = ClusterConfig(data_provider_count=8, metadata_shard_count=8)

for mode in ("read", "write"):
    rows = bench_throughput(cfg, clients=(1, 2, 4, 8), mode=mode, iterations=iterations)
    write_csv(rows, THROUGHPUT_COLUMNS, sys.stdout)
    base = rows[0]["per_client_MBps_mean"]
    print(f"# {mode}: 8 clients keep {rows[-1]['per_client_MBps_mean'] / base:.0%} of the 1-client bandwidth")
