"""blobctl: command line front end for a blob cluster.

``serve`` starts a socket cluster in this process and writes a cluster file;
``alloc``, ``write``, ``read`` and ``latest`` talk to it through that file.
Without ``--cluster`` (or $BLOBCTL_CLUSTER) they run against a throwaway
in-process cluster, which is only useful for trying commands out.
``bench-meta``, ``bench-throughput`` and ``check`` always spawn their own
in-process clusters.
"""

import argparse
import logging
import os
import signal
import sys
import threading

from ..blob_model import BlobId
from ..errors import BlobError, TransportError
from .bench import (
    DEFAULT_SEGMENTS,
    DEFAULT_SHARD_COUNTS,
    METADATA_COLUMNS,
    THROUGHPUT_COLUMNS,
    bench_metadata_overhead,
    bench_throughput,
    write_csv,
)
from .checker import run_serializability_check
from .cluster import connect, spawn_cluster
from .config import ClusterConfig, parse_size

CLUSTER_ENV = "BLOBCTL_CLUSTER"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _size(text):
    try:
        return parse_size(text)
    except (ValueError, BlobError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _int_list(text):
    try:
        values = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("counts must be positive")
    return values


def _size_list(text):
    return [_size(x) for x in text.split(",") if x.strip()]


def _load_config(path) -> ClusterConfig:
    return ClusterConfig.from_file(path) if path else ClusterConfig.default()


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="blobctl", description="Versioned blob store client and harness.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log actor activity to stderr")
    parser.add_argument("--cluster", help=f"cluster file written by 'blobctl serve' (default ${CLUSTER_ENV})")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def with_cluster(p):
        # accepted before or after the subcommand
        p.add_argument("--cluster", default=argparse.SUPPRESS, help="cluster file written by 'blobctl serve'")
        return p

    p = sub.add_parser("serve", help="run a socket cluster until interrupted")
    p.add_argument("--config", help="ClusterConfig key=value file")
    p.add_argument("--cluster-file", required=True, help="where to write the connection details")

    p = with_cluster(sub.add_parser("alloc", help="create a blob and print its id"))
    p.add_argument("--size", type=_size, required=True)
    p.add_argument("--page", type=_size, required=True)

    p = with_cluster(sub.add_parser("write", help="write a local file at an offset and print the version"))
    p.add_argument("--id", required=True)
    p.add_argument("--offset", type=_size, default=0)
    p.add_argument("--file", required=True)

    p = with_cluster(sub.add_parser("read", help="read a range of a version into a local file and print vr"))
    p.add_argument("--id", required=True)
    p.add_argument("--version", type=int, required=True)
    p.add_argument("--offset", type=_size, default=0)
    p.add_argument("--size", type=_size, required=True)
    p.add_argument("--out", required=True)

    p = with_cluster(sub.add_parser("latest", help="print the latest published version"))
    p.add_argument("--id", required=True)

    p = sub.add_parser("bench-meta", help="metadata cost per access, CSV")
    p.add_argument("--config")
    p.add_argument("--segments", type=_size_list, default=DEFAULT_SEGMENTS)
    p.add_argument("--shards", type=_int_list, default=DEFAULT_SHARD_COUNTS)
    p.add_argument("--flush-threshold", type=int)
    p.add_argument("--out")

    p = sub.add_parser("bench-throughput", help="per-client bandwidth against client count, CSV")
    p.add_argument("--config")
    p.add_argument("--mode", choices=["read", "write"], default="read")
    p.add_argument("--clients", type=_int_list, default=[1, 2, 4, 8])
    p.add_argument("--iterations", type=int, default=100)
    p.add_argument("--segment", type=_size, default=1 << 20)
    p.add_argument("--cache", action="store_true", help="keep the client metadata cache on")
    p.add_argument("--out")

    p = sub.add_parser("check", help="concurrent workload checked against a flat-array oracle")
    p.add_argument("--config")
    p.add_argument("--clients", type=int, default=16)
    p.add_argument("--ops", type=int, default=200)
    p.add_argument("--seed", type=int)
    return parser


def _client(args, stack):
    path = args.cluster or os.environ.get(CLUSTER_ENV)
    if path:
        client = connect(path)
        stack.append(client.close)
        return client
    print("blobctl: no --cluster given, using a throwaway in-process cluster", file=sys.stderr)
    cluster = spawn_cluster(ClusterConfig.default().replace(heartbeat_s=0))
    stack.append(cluster.stop)
    return cluster.client()


def _blob(text) -> BlobId:
    try:
        return BlobId.from_hex(text)
    except ValueError:
        raise UsageError(f"blobctl: --id must be 32 hex digits, got {text!r}") from None


def _serve(args) -> int:
    config = _load_config(args.config).replace(transport="socket")
    cluster = spawn_cluster(config)
    cluster.write_cluster_file(args.cluster_file)
    print(f"serving; cluster file {args.cluster_file}", flush=True)
    done = threading.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: done.set())
    try:
        done.wait()
    finally:
        cluster.stop()
    return 0


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
    cmd = args.command
    if cmd == "serve":
        return _serve(args)
    if cmd == "bench-meta":
        rows = bench_metadata_overhead(
            _load_config(args.config), args.segments, args.shards, flush_threshold=args.flush_threshold
        )
        write_csv(rows, METADATA_COLUMNS, args.out or sys.stdout)
        return 0
    if cmd == "bench-throughput":
        rows = bench_throughput(
            _load_config(args.config),
            args.clients,
            args.mode,
            iterations=args.iterations,
            segment_size=args.segment,
            cache=args.cache,
        )
        write_csv(rows, THROUGHPUT_COLUMNS, args.out or sys.stdout)
        return 0
    if cmd == "check":
        report = run_serializability_check(_load_config(args.config), args.clients, args.ops, args.seed)
        print(report.summary())
        return 0 if report.ok else 1

    cleanup = []
    try:
        client = _client(args, cleanup)
        if cmd == "alloc":
            print(client.alloc(args.size, args.page).hex())
        elif cmd == "latest":
            print(client.latest(_blob(args.id)))
        elif cmd == "write":
            with open(args.file, "rb") as fh:
                data = fh.read()
            print(client.write(_blob(args.id), data, args.offset))
        elif cmd == "read":
            result = client.read(_blob(args.id), args.version, args.offset, args.size)
            with open(args.out, "wb") as fh:
                fh.write(result.data)
            print(result.vr)
    finally:
        for close in reversed(cleanup):
            close()
    return 0


def main(argv=None) -> int:
    try:
        return run(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 2
    except (BlobError, TransportError, OSError) as exc:
        print(f"blobctl: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
