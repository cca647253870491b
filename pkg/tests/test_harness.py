import csv
import pathlib
import io
import subprocess
import sys

import pytest

from blobseer_lite import ClusterConfig, spawn_cluster
from blobseer_lite.blob_model import BlobLayout
from blobseer_lite.errors import InvalidConfig, MismatchFound, NoProviders
from blobseer_lite.harness.bench import (
    METADATA_COLUMNS,
    THROUGHPUT_COLUMNS,
    bench_metadata_overhead,
    bench_throughput,
    client_segments,
    write_csv,
)
from blobseer_lite.harness.checker import History, run_serializability_check, verify_history
from blobseer_lite.harness.cli import main
from blobseer_lite.harness.config import format_size, parse_size
from blobseer_lite.harness.oracle import DenseOracle, OracleState, Patch, first_difference, state_at
from blobseer_lite.harness.workload import generate_workload, workload_digest

from conftest import FAST

PAGE = 1 << 16


# -- config -----------------------------------------------------------------


def test_sizes():
    assert parse_size("64K") == 65536
    assert parse_size("1G") == 1 << 30
    assert parse_size("1TiB") == 1 << 40
    assert parse_size("123") == 123
    assert format_size(1 << 30) == "1G"
    with pytest.raises((ValueError, InvalidConfig)):
        parse_size("lots")


def test_config_text_and_env_override(tmp_path):
    text = "# desk cluster\ndata_provider_count = 8\nlatency_us = 50  # half\ntransport = socket\nrng_seed = 3\n"
    cfg = ClusterConfig.from_text(text, env={})
    assert (cfg.data_provider_count, cfg.latency_us, cfg.transport, cfg.rng_seed) == (8, 50, "socket", 3)
    assert ClusterConfig.from_text(text, env={"BLOBSEER_LITE_SEED": "11"}).rng_seed == 11
    path = tmp_path / "c.conf"
    path.write_text(cfg.to_text())
    assert ClusterConfig.from_file(path, env={}) == cfg
    with pytest.raises(InvalidConfig):
        ClusterConfig.from_text("bogus = 1", env={})
    with pytest.raises(InvalidConfig):
        ClusterConfig.from_text("transport = carrier-pigeon", env={})
    with pytest.raises(InvalidConfig):
        ClusterConfig.from_text("no equals sign", env={})


# -- cluster ----------------------------------------------------------------


def test_small_cluster_round_trip():
    with spawn_cluster(ClusterConfig(data_provider_count=2, metadata_shard_count=2, **FAST)) as c:
        client = c.client()
        blob = client.alloc(1 << 20, PAGE)
        assert client.write(blob, b"\x05" * PAGE, PAGE) == 1
        assert client.read(blob, 1, PAGE, PAGE).data == b"\x05" * PAGE
        c.heartbeat_once()
        assert sum(r.reported_pages for r in c.pm.providers()) == 1


def test_no_providers():
    with spawn_cluster(ClusterConfig(data_provider_count=0, **FAST)) as c:
        client = c.client()
        blob = client.alloc(1 << 20, PAGE)
        with pytest.raises(NoProviders):
            client.write(blob, bytes(PAGE), 0)


def test_socket_cluster_round_trip(tmp_path):
    from blobseer_lite.harness.cluster import connect

    with spawn_cluster(ClusterConfig(transport="socket", heartbeat_s=0)) as c:
        path = tmp_path / "cluster.txt"
        c.write_cluster_file(path)
        with connect(path) as client:
            blob = client.alloc(1 << 30, PAGE)
            client.write(blob, b"\x09" * 2 * PAGE, 0)
            assert client.read(blob, 1, PAGE - 3, 6).data == b"\x09" * 6


# -- workload and oracle ----------------------------------------------------


def test_same_seed_same_workload():
    layout = BlobLayout(1 << 30, PAGE)
    a = generate_workload(7, 16, 200, layout)
    assert workload_digest(a) == workload_digest(generate_workload(7, 16, 200, layout))
    assert workload_digest(a) != workload_digest(generate_workload(8, 16, 200, layout))
    assert sum(len(ops) for ops in a) == 200
    for ops in a:
        for op in ops:
            if op.kind == "write":
                assert op.offset % PAGE == 0 and op.size % PAGE == 0


def test_oracles_agree():
    patches = [Patch(1, 0, b"\x01" * 8), Patch(2, 4, b"\x02" * 8), Patch(3, 0, b"\x03" * 4)]
    sparse = state_at(patches, 3, 32, 4)
    dense = DenseOracle(32).replay(patches)
    assert sparse.read(0, 32) == dense.read(0, 32) == b"\x03" * 4 + b"\x02" * 8 + bytes(20)
    assert state_at(patches, 1, 32, 4).read(2, 8) == b"\x01" * 6 + bytes(2)
    with pytest.raises(ValueError):
        OracleState(32, 4).apply(patches[1])
    assert first_difference(b"abc", b"abd") == 2
    assert first_difference(b"abc", b"abc") == -1


# -- serializability check --------------------------------------------------


def test_sequential_check():
    report = run_serializability_check(ClusterConfig(**FAST), clients=1, ops=10, seed=1)
    assert report.ok, report.summary()
    assert report.summary().startswith("OK: 0 mismatches")


def test_concurrent_check():
    report = run_serializability_check(ClusterConfig(**FAST), clients=16, ops=200, seed=2)
    assert report.ok, report.summary()
    assert report.writes + report.reads == 200
    assert report.latest == report.writes


def test_injected_fault_is_pinpointed():
    with spawn_cluster(ClusterConfig(**FAST)) as c:
        client = c.client(cache_capacity=0)
        blob = client.alloc(1 << 20, PAGE)
        data = bytes(range(256)) * (2 * PAGE // 256)
        history = History(blob, 1 << 20, PAGE, patches=[Patch(client.write(blob, data, 3 * PAGE), 3 * PAGE, data)])
        assert verify_history(client, history)[0] == []

        provider, key = next((p, k) for p in c.providers for k in p.keys() if k.page_index == 1)
        provider.corrupt(key, 1234)
        mismatches, _ = verify_history(client, history)
        assert mismatches
        with pytest.raises(MismatchFound) as info:
            raise mismatches[0].as_error()
        assert info.value.version == 1
        assert info.value.first_diff == 4 * PAGE + 1234


# -- benches ----------------------------------------------------------------


def test_metadata_bench_rows():
    rows = bench_metadata_overhead(ClusterConfig(**FAST), [16 << 10, 1 << 20], [2])
    text = write_csv(rows, METADATA_COLUMNS)
    parsed = list(csv.DictReader(io.StringIO(text)))
    assert [r["phase"] for r in parsed] == ["write", "read", "write", "read"]
    assert int(parsed[0]["metadata_nodes_touched"]) == 25
    assert int(parsed[2]["metadata_nodes_touched"]) == 2 * 16 - 1 + 24 - 4


def test_whole_blob_write_touches_every_node():
    rows = bench_metadata_overhead(ClusterConfig(**FAST), [1 << 20], [1], blob_size=1 << 20)
    assert rows[0]["metadata_nodes_touched"] == 2 * 16 - 1


def test_metadata_bench_is_reproducible():
    cfg = ClusterConfig(**FAST)
    strip = lambda rows: [{k: v for k, v in r.items() if k != "wall_micros"} for r in rows]
    assert strip(bench_metadata_overhead(cfg, [64 << 10, 256 << 10], [3])) == strip(
        bench_metadata_overhead(cfg, [64 << 10, 256 << 10], [3])
    )


def test_client_segments_are_disjoint():
    owned = [set(client_segments(i, 4, 1024, 100)) for i in range(4)]
    for i in range(4):
        for j in range(i):
            assert not owned[i] & owned[j]


def test_throughput_bench_smoke():
    rows = bench_throughput(
        ClusterConfig(**FAST), clients=(1, 2), mode="write", iterations=3, segment_size=4 * PAGE, region_size=64 * PAGE
    )
    assert [r["n_clients"] for r in rows] == [1, 2]
    assert rows[0]["per_client_MBps_mean"] > 0
    assert set(rows[0]) == set(THROUGHPUT_COLUMNS)


def test_cached_reads_send_fewer_envelopes():
    with spawn_cluster(ClusterConfig(**FAST)) as c:
        w = c.client()
        blob = w.alloc(1 << 30, PAGE)
        w.write(blob, bytes(4 * PAGE), 0)
        results = {}
        for cache in (0, 1 << 20):
            reader = c.client(cache)
            c.counters.reset()
            data = [reader.read(blob, 1, 0, 4 * PAGE).data for _ in range(5)]
            results[cache] = (data, c.counters.envelopes)
        assert results[0][0] == results[1 << 20][0]
        assert results[1 << 20][1] < results[0][1]


# -- CLI --------------------------------------------------------------------


def test_cli_against_socket_cluster(tmp_path, capsys):
    with spawn_cluster(ClusterConfig(transport="socket", heartbeat_s=0)) as c:
        cf = tmp_path / "cluster.txt"
        c.write_cluster_file(cf)
        assert main(["alloc", "--cluster", str(cf), "--size", "1G", "--page", "64K"]) == 0
        blob = capsys.readouterr().out.strip()
        assert len(blob) == 32

        assert main(["--cluster", str(cf), "read", "--id", blob, "--version", "99", "--size", "10", "--out", str(tmp_path / "o")]) == 1
        assert "version not published (latest=0)" in capsys.readouterr().err

        src = tmp_path / "in.bin"
        src.write_bytes(b"\x42" * 2 * PAGE)
        assert main(["write", "--cluster", str(cf), "--id", blob, "--offset", "64K", "--file", str(src)]) == 0
        assert capsys.readouterr().out.strip() == "1"
        out = tmp_path / "out.bin"
        assert main(["read", "--cluster", str(cf), "--id", blob, "--version", "1", "--offset", "65530", "--size", "12", "--out", str(out)]) == 0
        assert capsys.readouterr().out.strip() == "1"
        assert out.read_bytes() == bytes(6) + b"\x42" * 6
        assert main(["latest", "--cluster", str(cf), "--id", blob]) == 0
        assert capsys.readouterr().out.strip() == "1"


def test_cli_usage_errors(capsys):
    assert main([]) == 2
    assert main(["alloc", "--size", "1G"]) == 2
    assert main(["latest", "--id", "not-hex"]) == 2
    err = capsys.readouterr().err
    assert "blobctl" in err


def test_cli_check_and_bench(tmp_path, capsys):
    assert main(["check", "--clients", "4", "--ops", "40", "--seed", "7"]) == 0
    assert capsys.readouterr().out.startswith("OK: 0 mismatches")
    out = tmp_path / "meta.csv"
    assert main(["bench-meta", "--segments", "64K", "--shards", "2", "--out", str(out)]) == 0
    assert out.read_text().splitlines()[0] == ",".join(METADATA_COLUMNS)


@pytest.mark.slow
def test_cli_entry_point_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "blobseer_lite.harness.cli", "alloc", "--size", "1G", "--page", "64K"],
        capture_output=True, text=True, timeout=60,
    )
    assert proc.returncode == 0
    assert len(proc.stdout.strip()) == 32


def test_snapshot_demo_runs():
    demo = pathlib.Path(__file__).parent.parent / "demos" / "snapshots.py"
    proc = subprocess.run([sys.executable, str(demo)], capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0, proc.stderr
    assert "written by versions [1, 2, 3, 1]" in proc.stdout
