"""Cluster configuration, stored as a ``key=value`` text file.

Example::

    # four providers, four shards, in-process links
    data_provider_count = 4
    metadata_shard_count = 4
    transport = inproc
    latency_us = 100
    rng_seed = 7

Sizes accept K/M/G/T suffixes (powers of 1024). The environment variable
``BLOBSEER_LITE_SEED`` overrides ``rng_seed``.
"""

import dataclasses
import os
import re
from dataclasses import dataclass

from ..errors import InvalidConfig

SEED_ENV = "BLOBSEER_LITE_SEED"

_SUFFIX = {"": 1, "K": 1 << 10, "M": 1 << 20, "G": 1 << 30, "T": 1 << 40}
_SIZE_RE = re.compile(r"^\s*(\d+)\s*([KMGT]?)i?B?\s*$", re.IGNORECASE)


def parse_size(text) -> int:
    """``"64K"`` -> 65536. Plain integers pass through."""
    if isinstance(text, int):
        return text
    m = _SIZE_RE.match(str(text))
    if not m:
        raise InvalidConfig(f"cannot parse size {text!r}")
    return int(m.group(1)) * _SUFFIX[m.group(2).upper()]


def format_size(n: int) -> str:
    for suffix in "TGMK":
        unit = _SUFFIX[suffix]
        if n >= unit and n % unit == 0:
            return f"{n // unit}{suffix}"
    return str(n)


@dataclass(frozen=True)
class ClusterConfig:
    data_provider_count: int = 4
    metadata_shard_count: int = 4
    provider_capacity: int = 256 << 20
    transport: str = "inproc"
    latency_us: float = 100.0
    # per-client link speed for the in-process transport; 0 means unlimited
    bandwidth_MBps: float = 117.5
    rng_seed: int = 0
    flush_threshold: int = 64
    flush_delay_us: float = 200.0
    cache_capacity: int = 1 << 20
    max_in_flight: int = 1024
    heartbeat_s: float = 1.0
    timeout_s: float = 5.0
    host: str = "127.0.0.1"
    base_port: int = 0
    track_puts: bool = False

    def __post_init__(self):
        if self.transport not in ("inproc", "socket"):
            raise InvalidConfig(f"transport must be inproc or socket, not {self.transport!r}")
        if self.data_provider_count < 0 or self.metadata_shard_count < 1:
            raise InvalidConfig("need >= 0 data providers and >= 1 metadata shard")
        if not 1 <= self.flush_threshold <= 0xFFFF:
            raise InvalidConfig("flush_threshold must be within 1..65535")
        if self.latency_us < 0 or self.bandwidth_MBps < 0 or self.flush_delay_us < 0:
            raise InvalidConfig("latency, bandwidth and flush delay must be non-negative")
        if self.cache_capacity < 0 or self.provider_capacity < 0:
            raise InvalidConfig("capacities must be non-negative")

    @property
    def latency(self) -> float:
        return self.latency_us * 1e-6

    @property
    def bandwidth(self) -> float | None:
        return self.bandwidth_MBps * 1e6 if self.bandwidth_MBps else None

    @property
    def flush_delay(self) -> float:
        return self.flush_delay_us * 1e-6

    def replace(self, **changes) -> "ClusterConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_mapping(cls, values: dict, env=None) -> "ClusterConfig":
        fields = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in fields:
                raise InvalidConfig(f"unknown config key {key!r}")
            kwargs[key] = _coerce(fields[key].type, raw, key)
        env = os.environ if env is None else env
        if env.get(SEED_ENV):
            kwargs["rng_seed"] = _coerce("int", env[SEED_ENV], SEED_ENV)
        return cls(**kwargs)

    @classmethod
    def from_text(cls, text: str, env=None) -> "ClusterConfig":
        values = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidConfig(f"line {lineno}: expected key=value")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
        return cls.from_mapping(values, env)

    @classmethod
    def from_file(cls, path, env=None) -> "ClusterConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read(), env)

    @classmethod
    def default(cls, env=None) -> "ClusterConfig":
        return cls.from_mapping({}, env)

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in dataclasses.fields(self))


def _coerce(kind, raw, key):
    kind = kind if isinstance(kind, str) else kind.__name__
    if not isinstance(raw, str):
        return raw
    try:
        if kind == "int":
            return parse_size(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
    except (ValueError, InvalidConfig) as exc:
        raise InvalidConfig(f"bad value for {key}: {raw!r}") from exc
    return raw
