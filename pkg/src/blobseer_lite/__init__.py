"""Versioned blob storage: striped pages, segment-tree snapshots, lock-free writes."""

from .blob_model import BlobId, BlobLayout, ByteRange, PageInterval
from .client import BlobClient, ClientConfig, OpTrace, ReadResult
from .errors import BlobError, VersionNotPublished
from .harness.cluster import Cluster, spawn_cluster
from .harness.config import ClusterConfig

__all__ = [
    "BlobClient",
    "BlobError",
    "BlobId",
    "BlobLayout",
    "ByteRange",
    "ClientConfig",
    "Cluster",
    "ClusterConfig",
    "OpTrace",
    "PageInterval",
    "ReadResult",
    "VersionNotPublished",
    "spawn_cluster",
]

__version__ = "0.1.0"
