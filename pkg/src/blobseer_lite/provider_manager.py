"""Provider manager: registry of data providers and page placement."""

import threading
from dataclasses import dataclass

from .blob_model import pack_u64, unpack_u64
from .errors import DuplicateAddress, NoProviders, UnknownMessageType, UnknownProvider
from .protocol import MsgType, pack_str, pack_u32, unpack_str, unpack_u32


@dataclass
class ProviderRecord:
    address: str
    registration_seq: int
    reported_pages: int = 0
    reported_bytes: int = 0
    pending_bytes: int = 0

    @property
    def load(self) -> int:
        return self.reported_bytes + self.pending_bytes


class ProviderManager:
    """Least-loaded placement with pending-allocation accounting.

    Load is last reported bytes plus bytes handed out since that report, so
    back-to-back allocations spread over providers before any heartbeat
    arrives. Ties go to the earliest registered provider.
    """

    def __init__(self):
        self._records: dict[str, ProviderRecord] = {}
        self._lock = threading.Lock()

    def register_provider(self, address: str) -> None:
        with self._lock:
            if address in self._records:
                raise DuplicateAddress(f"provider {address} already registered")
            self._records[address] = ProviderRecord(address, len(self._records))

    def providers(self) -> list[ProviderRecord]:
        with self._lock:
            return sorted(self._records.values(), key=lambda r: r.registration_seq)

    def allocate_providers(self, k: int, page_size: int = 1) -> list[str]:
        with self._lock:
            if not self._records:
                raise NoProviders("no data providers registered")
            records = list(self._records.values())
            out = []
            for _ in range(k):
                best = min(records, key=lambda r: (r.load, r.registration_seq))
                best.pending_bytes += page_size
                out.append(best.address)
            return out

    def report_load(self, address: str, pages: int, nbytes: int) -> None:
        with self._lock:
            record = self._records.get(address)
            if record is None:
                raise UnknownProvider(f"provider {address} is not registered")
            record.reported_pages = pages
            record.reported_bytes = nbytes
            record.pending_bytes = 0

    def handle(self, msg_type: int, body: bytes) -> bytes:
        if msg_type == MsgType.PM_REGISTER:
            address, _ = unpack_str(body)
            self.register_provider(address)
            return b""
        if msg_type == MsgType.PM_ALLOCATE:
            addresses = self.allocate_providers(unpack_u32(body), unpack_u64(body, 4))
            return pack_u32(len(addresses)) + b"".join(pack_str(a) for a in addresses)
        if msg_type == MsgType.PM_REPORT:
            address, pos = unpack_str(body)
            self.report_load(address, unpack_u64(body, pos), unpack_u64(body, pos + 8))
            return b""
        raise UnknownMessageType(f"provider manager cannot handle 0x{msg_type:02x}")


def decode_allocation(body: bytes) -> list[str]:
    count = unpack_u32(body)
    out, pos = [], 4
    for _ in range(count):
        address, pos = unpack_str(body, pos)
        out.append(address)
    return out


def encode_report(address: str, pages: int, nbytes: int) -> bytes:
    return pack_str(address) + pack_u64(pages) + pack_u64(nbytes)
