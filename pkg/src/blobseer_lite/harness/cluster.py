"""Start a full set of actors in this process and hand out clients.

With ``transport = inproc`` actors are reached through an ``InprocNetwork``
that injects latency and per-client bandwidth limits; with ``socket`` every
actor listens on its own TCP port.
"""

import logging
import threading

from ..client import BlobClient, ClientConfig
from ..errors import InvalidConfig, TransportError
from ..metadata_store import MetadataShard
from ..page_store import DataProvider
from ..protocol import MsgType, pack_str
from ..provider_manager import ProviderManager, encode_report
from ..transport import Counters, InprocNetwork, InprocTransport, SocketServer, SocketTransport
from ..version_manager import VersionManager
from .config import ClusterConfig

log = logging.getLogger(__name__)


class Cluster:
    def __init__(self, config: ClusterConfig):
        self.config = config
        self.counters = Counters()
        self.vm = VersionManager(seed=config.rng_seed)
        self.pm = ProviderManager()
        self.shards = [MetadataShard(i, track_puts=config.track_puts) for i in range(config.metadata_shard_count)]
        self.providers: list[DataProvider] = []
        self.network: InprocNetwork | None = None
        self._servers: list[SocketServer] = []
        self._clients: list[BlobClient] = []
        self._stop = threading.Event()
        self._heartbeat = None
        self._control = None
        self.vm_address = self.pm_address = ""
        self.shard_addresses: list[str] = []

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> "Cluster":
        cfg = self.config
        if cfg.transport == "inproc":
            self.network = InprocNetwork(cfg.latency, cfg.bandwidth)
            self.vm_address = self._serve("vm", self.vm.handle)
            self.pm_address = self._serve("pm", self.pm.handle)
            self.shard_addresses = [self._serve(f"meta-{s.index}", s.handle) for s in self.shards]
            names = [f"data-{i}" for i in range(cfg.data_provider_count)]
        else:
            port = iter(range(cfg.base_port, cfg.base_port + 3 + cfg.metadata_shard_count + cfg.data_provider_count))
            nxt = (lambda: next(port)) if cfg.base_port else (lambda: 0)
            self.vm_address = self._listen(self.vm.handle, nxt())
            self.pm_address = self._listen(self.pm.handle, nxt())
            self.shard_addresses = [self._listen(s.handle, nxt()) for s in self.shards]
            names = [None] * cfg.data_provider_count
        self._control = self._transport()
        for name in names:
            self.add_provider(name)
        if cfg.heartbeat_s > 0:
            self._heartbeat = threading.Thread(target=self._heartbeat_loop, name="heartbeat", daemon=True)
            self._heartbeat.start()
        return self

    def _serve(self, address, handler) -> str:
        self.network.register(address, handler)
        return address

    def _listen(self, handler, port) -> str:
        server = SocketServer(handler, self.config.host, port).start()
        self._servers.append(server)
        return server.address

    def add_provider(self, name: str | None = None) -> DataProvider:
        """Start one more data provider and register it with the provider manager."""
        cfg = self.config
        index = len(self.providers)
        provider = DataProvider("", cfg.provider_capacity, track_puts=cfg.track_puts)
        if cfg.transport == "inproc":
            provider.address = self._serve(name or f"data-{index}", provider.handle)
        else:
            port = cfg.base_port + 3 + cfg.metadata_shard_count + index if cfg.base_port else 0
            provider.address = self._listen(provider.handle, port)
        self.providers.append(provider)
        self._control.call(self.pm_address, MsgType.PM_REGISTER, pack_str(provider.address))
        return provider

    def stop(self) -> None:
        self._stop.set()
        if self._heartbeat is not None:
            self._heartbeat.join(timeout=5)
        for client in self._clients:
            client.close()
        self._clients.clear()
        if self._control is not None:
            self._control.close()
        for server in self._servers:
            server.stop()
        self._servers.clear()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.stop()

    # -- clients -----------------------------------------------------------

    def _transport(self, flush_threshold=None, flush_delay=None):
        cfg = self.config
        kwargs = dict(
            flush_threshold=cfg.flush_threshold if flush_threshold is None else flush_threshold,
            flush_delay=cfg.flush_delay if flush_delay is None else flush_delay,
            timeout=cfg.timeout_s,
            counters=self.counters,
        )
        if cfg.transport == "inproc":
            return InprocTransport(self.network, **kwargs)
        return SocketTransport(**kwargs)

    def client_config(self, cache_capacity: int | None = None) -> ClientConfig:
        return ClientConfig(
            version_manager=self.vm_address,
            provider_manager=self.pm_address,
            metadata_shards=list(self.shard_addresses),
            metadata_cache_capacity=self.config.cache_capacity if cache_capacity is None else cache_capacity,
            max_in_flight_requests=self.config.max_in_flight,
        )

    def client(self, cache_capacity: int | None = None, flush_threshold: int | None = None) -> BlobClient:
        """A new client with its own transport; closed when the cluster stops."""
        client = BlobClient(self.client_config(cache_capacity), self._transport(flush_threshold))
        self._clients.append(client)
        return client

    # -- heartbeats and inspection ----------------------------------------

    def heartbeat_once(self) -> None:
        for provider in list(self.providers):
            pages, nbytes = provider.stats()
            try:
                self._control.call(self.pm_address, MsgType.PM_REPORT, encode_report(provider.address, pages, nbytes))
            except TransportError as exc:
                log.warning("heartbeat for %s failed: %s", provider.address, exc)

    def _heartbeat_loop(self):
        while not self._stop.wait(self.config.heartbeat_s):
            self.heartbeat_once()

    def provider(self, address: str) -> DataProvider:
        for p in self.providers:
            if p.address == address:
                return p
        raise KeyError(address)

    def stop_provider(self, address: str) -> None:
        """Make a provider unreachable (in-process transport only)."""
        if self.network is None:
            raise InvalidConfig("stop_provider needs the in-process transport")
        self.network.unregister(address)

    def immutability_violations(self) -> int:
        """Rejected overwrites plus keys that were ever offered two different values."""
        total = sum(s.violations for s in self.shards) + sum(p.violations for p in self.providers)
        for store in [*self.shards, *self.providers]:
            if store.put_log is not None:
                total += sum(1 for digests in store.put_log.values() if len(digests) > 1)
        return total

    def cluster_file_text(self) -> str:
        return (
            f"transport = {self.config.transport}\n"
            f"version_manager = {self.vm_address}\n"
            f"provider_manager = {self.pm_address}\n"
            f"metadata_shards = {','.join(self.shard_addresses)}\n"
            f"timeout_s = {self.config.timeout_s}\n"
        )

    def write_cluster_file(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.cluster_file_text())


def spawn_cluster(config: ClusterConfig | None = None, **overrides) -> Cluster:
    config = config or ClusterConfig.default()
    if overrides:
        config = config.replace(**overrides)
    return Cluster(config).start()


def connect(cluster_file, cache_capacity: int = 1 << 20) -> BlobClient:
    """Client for a socket cluster described by a file from ``write_cluster_file``."""
    values = {}
    with open(cluster_file, encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if "=" in line:
                key, value = line.split("=", 1)
                values[key.strip()] = value.strip()
    try:
        if values.get("transport", "socket") != "socket":
            raise InvalidConfig("only socket clusters can be reached from another process")
        config = ClientConfig(
            version_manager=values["version_manager"],
            provider_manager=values["provider_manager"],
            metadata_shards=values["metadata_shards"].split(","),
            metadata_cache_capacity=cache_capacity,
        )
    except KeyError as exc:
        raise InvalidConfig(f"cluster file lacks {exc}") from None
    return BlobClient(config, SocketTransport(timeout=float(values.get("timeout_s", 5.0))))
