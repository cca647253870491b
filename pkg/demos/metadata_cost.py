"""How many tree nodes and envelopes one access costs on a 1 TB blob with 64 KB pages.

Prints CSV; pipe it to a file to plot elsewhere.
"""

import sys

from blobseer_lite import ClusterConfig
from blobseer_lite.harness.bench import METADATA_COLUMNS, bench_metadata_overhead, write_csv

K = 1024
segments = [16 * K, 256 * K, 4 * K * K, 16 * K * K]

# batched (default threshold) against one message per envelope
for threshold in (None, 1):
    print(f"# flush_threshold = {threshold or ClusterConfig().flush_threshold}")
    rows = bench_metadata_overhead(ClusterConfig(), segments, [10], flush_threshold=threshold)
    write_csv(rows, METADATA_COLUMNS, sys.stdout)
