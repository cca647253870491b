"""Snapshots of a 4-page blob: three overlapping writes, every version stays readable."""

from blobseer_lite import ClusterConfig, OpTrace, spawn_cluster

PAGE = 64 * 1024

cluster = spawn_cluster(ClusterConfig(latency_us=0, bandwidth_MBps=0, heartbeat_s=0))
client = cluster.client()
blob = client.alloc(4 * PAGE, PAGE)

# v1 fills the blob, v2 replaces page 1, v3 replaces page 2
print("v1 =", client.write(blob, b"A" * 4 * PAGE, 0))
print("v2 =", client.write(blob, b"B" * PAGE, PAGE))
print("v3 =", client.write(blob, b"C" * PAGE, 2 * PAGE))

# each page of a snapshot comes from the newest write at or below it
for v in range(4):
    trace = OpTrace()
    data = client.read(blob, v, 0, 4 * PAGE, trace=trace).data
    letters = "".join(chr(data[p * PAGE]) if data[p * PAGE] else "." for p in range(4))
    print(f"version {v}: pages {letters}  written by versions {trace.page_versions}")

# a one-page write creates only the nodes on its root-to-leaf path; the rest of
# the tree is shared with older versions through border links
trace = OpTrace()
client.write(blob, b"D" * PAGE, 3 * PAGE, trace=trace)
print(f"v{trace.version} stored {trace.metadata_nodes} tree nodes for a one-page write")
for v, seg, status in cluster.vm.history(blob):
    print(f"  v{v}: pages {seg.first_page}..{seg.end - 1} {status.name}")

cluster.stop()
