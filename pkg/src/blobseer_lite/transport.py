"""Envelope wire format and a batching RPC layer.

Envelope layout (all integers little-endian)::

    "BLOB" | version u8 (0x01) | batch_count u16 | batch_count x message
    message = type u8 | length u32 | payload

Every request and response payload starts with the caller's 8-byte sequence
number; the rest is the message body. A failed request is answered with
type 0xFF whose body is ``error_code u16 | utf-8 detail``.

Requests to the same destination are queued and leave together in one
envelope, either when ``flush_threshold`` messages are waiting or
``flush_delay`` seconds after the first of them was queued.
"""

import collections
import concurrent.futures
import errno
import itertools
import logging
import socket
import socketserver
import struct
import threading
import time
from dataclasses import dataclass
from typing import Callable

from .errors import (
    BadMagic,
    BatchTooLarge,
    BlobError,
    DestinationUnreachable,
    PortInUse,
    RemoteError,
    RpcTimeout,
    TrailingData,
    TransportError,
    TruncatedFrame,
    UnknownMessageType,
    UnsupportedProtocolVersion,
    error_code,
    error_from_code,
)
from .protocol import VALID_TYPES, MsgType, pack_u16, response_type, unpack_u16

log = logging.getLogger(__name__)

MAGIC = b"BLOB"
PROTOCOL_VERSION = 0x01
MAX_BATCH = 0xFFFF
DEFAULT_FLUSH_THRESHOLD = 64
DEFAULT_FLUSH_DELAY = 200e-6
DEFAULT_TIMEOUT = 5.0

_HEADER = struct.Struct("<4sBH")
_MSG_HEADER = struct.Struct("<BI")
_SEQ = struct.Struct("<Q")
_FRAME_LEN = struct.Struct("<I")
# shorter waits are not worth a thread switch
_MIN_SLEEP = 20e-6

Handler = Callable[[int, bytes], bytes]


@dataclass(frozen=True, slots=True)
class Message:
    type: int
    payload: bytes


def encode_envelope(messages) -> bytes:
    n = len(messages)
    if n < 1 or n > MAX_BATCH:
        raise BatchTooLarge(f"batch of {n} messages (allowed 1..{MAX_BATCH})")
    parts = [_HEADER.pack(MAGIC, PROTOCOL_VERSION, n)]
    for m in messages:
        if m.type not in VALID_TYPES:
            raise UnknownMessageType(f"message type 0x{m.type:02x}")
        parts.append(_MSG_HEADER.pack(m.type, len(m.payload)))
        parts.append(m.payload)
    return b"".join(parts)


def decode_envelope(data) -> list[Message]:
    """Parse one envelope. Payloads are memoryviews into ``data``, not copies."""
    data = memoryview(data)
    if len(data) < 4 or bytes(data[:4]) != MAGIC:
        raise BadMagic("envelope does not start with BLOB")
    if len(data) < _HEADER.size:
        raise TruncatedFrame("envelope header truncated")
    _, proto, count = _HEADER.unpack_from(data)
    if proto != PROTOCOL_VERSION:
        raise UnsupportedProtocolVersion(f"protocol version 0x{proto:02x}")
    if count == 0:
        raise BatchTooLarge("envelope carries zero messages")
    pos = _HEADER.size
    out = []
    for _ in range(count):
        if pos + _MSG_HEADER.size > len(data):
            raise TruncatedFrame("message header truncated")
        mtype, length = _MSG_HEADER.unpack_from(data, pos)
        pos += _MSG_HEADER.size
        if mtype not in VALID_TYPES:
            raise UnknownMessageType(f"message type 0x{mtype:02x}")
        if pos + length > len(data):
            raise TruncatedFrame(f"payload of {length} bytes truncated")
        out.append(Message(mtype, data[pos:pos + length]))
        pos += length
    if pos != len(data):
        raise TrailingData(f"{len(data) - pos} bytes after last message")
    return out


def serve_envelope(handler: Handler, frame: bytes) -> bytes:
    """Run every request of one envelope through ``handler``; return the reply envelope."""
    replies = []
    for m in decode_envelope(frame):
        seq = bytes(m.payload[:8])
        try:
            if len(seq) < 8:
                raise TruncatedFrame("payload shorter than its sequence number")
            body = handler(m.type, m.payload[8:])
            replies.append(Message(response_type(m.type), seq + body))
        except BlobError as exc:
            replies.append(Message(MsgType.ERROR, seq + pack_u16(error_code(exc)) + str(exc).encode()))
        except Exception as exc:  # keep serving; report as a generic remote failure
            log.exception("handler failed for message 0x%02x", m.type)
            replies.append(Message(MsgType.ERROR, seq + pack_u16(0) + repr(exc).encode()))
    return encode_envelope(replies)


class Counters:
    """Exact, thread-safe traffic counters shared by any number of transports."""

    def __init__(self):
        self._lock = threading.Lock()
        self.reset()

    def reset(self):
        with self._lock:
            self.envelopes = 0
            self.messages = 0
            self.bytes_sent = 0
            self.envelopes_by_dest = collections.Counter()
            self.envelopes_by_type = collections.Counter()
            self.messages_by_type = collections.Counter()

    def record(self, dest: str, types, nbytes: int) -> None:
        with self._lock:
            self.envelopes += 1
            self.messages += len(types)
            self.bytes_sent += nbytes
            self.envelopes_by_dest[dest] += 1
            for t in set(types):
                self.envelopes_by_type[t] += 1
            self.messages_by_type.update(types)

    def snapshot(self) -> dict:
        with self._lock:
            return {
                "envelopes": self.envelopes,
                "messages": self.messages,
                "bytes_sent": self.bytes_sent,
                "envelopes_by_dest": dict(self.envelopes_by_dest),
                "envelopes_by_type": dict(self.envelopes_by_type),
                "messages_by_type": dict(self.messages_by_type),
            }


class _Pending:
    """One outstanding request; also the handle returned to the caller.

    Lighter than ``concurrent.futures.Future``: a lock taken at creation is
    released exactly once when the outcome is set.
    """

    __slots__ = ("seq", "dest", "type", "body", "_done", "_value", "_error")

    def __init__(self, seq, dest, mtype, body):
        self.seq = seq
        self.dest = dest
        self.type = mtype
        self.body = body
        self._done = threading.Lock()
        self._done.acquire()
        self._value = None
        self._error = None

    def done(self) -> bool:
        return not self._done.locked()

    def set_result(self, value) -> None:
        self._value = value
        self._done.release()

    def set_exception(self, exc: BaseException) -> None:
        self._error = exc
        self._done.release()

    def _wait(self, timeout):
        if self._done.locked():
            if not self._done.acquire(timeout=-1 if timeout is None else max(timeout, 0)):
                raise concurrent.futures.TimeoutError()
            self._done.release()

    def result(self, timeout: float | None = None):
        self._wait(timeout)
        if self._error is not None:
            raise self._error
        return self._value

    def exception(self, timeout: float | None = None):
        self._wait(timeout)
        return self._error


class Transport:
    """Batching request/response client. Subclasses move frames."""

    def __init__(
        self,
        flush_threshold: int = DEFAULT_FLUSH_THRESHOLD,
        flush_delay: float = DEFAULT_FLUSH_DELAY,
        timeout: float = DEFAULT_TIMEOUT,
        counters: Counters | None = None,
    ):
        if not 1 <= flush_threshold <= MAX_BATCH:
            raise ValueError("flush_threshold must be within 1..65535")
        self.flush_threshold = flush_threshold
        self.flush_delay = flush_delay
        self.timeout = timeout
        self.counters = counters if counters is not None else Counters()
        self._seq = itertools.count(1)
        self._inflight: dict[int, _Pending] = {}
        self._queues: dict[str, list[_Pending]] = {}
        self._deadlines: dict[str, float] = {}
        self._cond = threading.Condition()
        self._closed = False
        self._flusher = None

    # -- public API --------------------------------------------------------

    def call_batched(self, dest: str, msg_type: int, body: bytes) -> _Pending:
        return self.submit_many([(dest, msg_type, body)], flush=False)[0]

    def submit_many(self, requests, flush: bool = True) -> list[_Pending]:
        """Queue several ``(dest, type, body)`` requests at once.

        With ``flush`` the touched queues are sent immediately instead of
        waiting for the delay timer; requests to one destination still share
        envelopes.
        """
        futures, ready, touched = [], [], []
        with self._cond:
            if self._closed:
                raise TransportError("transport is closed")
            for dest, mtype, body in requests:
                item = _Pending(next(self._seq), dest, mtype, body)
                self._inflight[item.seq] = item
                futures.append(item)
                queue = self._queues.setdefault(dest, [])
                queue.append(item)
                if len(queue) >= self.flush_threshold:
                    ready.append((dest, queue[:]))
                    queue.clear()
                    self._deadlines.pop(dest, None)
                elif len(queue) == 1 and not flush:
                    self._deadlines[dest] = time.monotonic() + self.flush_delay
                    self._ensure_flusher()
                    self._cond.notify()
                if flush and dest not in touched:
                    touched.append(dest)
            if flush:
                for dest in touched:
                    queue = self._queues.get(dest)
                    if queue:
                        ready.append((dest, queue[:]))
                        queue.clear()
                        self._deadlines.pop(dest, None)
        self._dispatch(ready, inline=flush)
        return futures

    def call(self, dest: str, msg_type: int, body: bytes, timeout: float | None = None) -> memoryview:
        fut = self.submit_many([(dest, msg_type, body)], flush=True)[0]
        return self.wait(fut, timeout)

    def wait(self, fut: _Pending, timeout: float | None = None) -> memoryview:
        """Reply body of ``fut``, a view into the reply frame (not a copy)."""
        try:
            return fut.result(self.timeout if timeout is None else timeout)
        except concurrent.futures.TimeoutError:
            self._abandon(fut.seq)
            raise RpcTimeout(f"no response within {self.timeout if timeout is None else timeout} s") from None

    def flush(self, dest: str | None = None) -> None:
        ready = []
        with self._cond:
            for d in [dest] if dest is not None else list(self._queues):
                queue = self._queues.get(d)
                if queue:
                    ready.append((d, queue[:]))
                    queue.clear()
                    self._deadlines.pop(d, None)
        self._dispatch(ready)

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()
            leftover = list(self._inflight.values())
            self._inflight.clear()
            self._queues.clear()
        for item in leftover:
            item.set_exception(TransportError("transport closed"))

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- batching internals -----------------------------------------------

    def _ensure_flusher(self):
        if self._flusher is None:
            self._flusher = threading.Thread(target=self._flush_loop, name="rpc-flusher", daemon=True)
            self._flusher.start()

    def _flush_loop(self):
        while True:
            ready = []
            with self._cond:
                while not self._closed:
                    if not self._deadlines:
                        self._cond.wait()
                        continue
                    now = time.monotonic()
                    due = [d for d, t in self._deadlines.items() if t <= now]
                    if due:
                        for d in due:
                            del self._deadlines[d]
                            queue = self._queues.get(d)
                            if queue:
                                ready.append((d, queue[:]))
                                queue.clear()
                        break
                    self._cond.wait(min(self._deadlines.values()) - now)
                if self._closed:
                    return
            self._dispatch(ready)

    def _dispatch(self, ready, inline: bool = False) -> None:
        """Encode and send ``(dest, batch)`` pairs that left their queues together.

        ``inline`` signals that the calling thread is about to wait for the
        replies, so a transport may use it to drive the exchange.
        """
        group = []
        for dest, batch in ready:
            try:
                frame = encode_envelope([Message(i.type, _SEQ.pack(i.seq) + i.body) for i in batch])
            except BlobError as exc:
                self._fail(batch, exc)
                continue
            self.counters.record(dest, [i.type for i in batch], len(frame))
            group.append((dest, frame, batch))
        if group:
            self._transmit_group(group, inline)

    def _transmit_group(self, group, inline: bool = False) -> None:
        for dest, frame, batch in group:
            try:
                self._transmit(dest, frame, batch)
            except TransportError as exc:
                self._fail(batch, exc)
            except OSError as exc:
                self._fail(batch, DestinationUnreachable(f"{dest}: {exc}"))

    def _transmit(self, dest: str, frame: bytes, batch: list[_Pending]) -> None:
        raise NotImplementedError

    def _fail(self, batch, exc: Exception) -> None:
        with self._cond:
            owned = [self._inflight.pop(item.seq, None) for item in batch]
        for item in owned:
            if item is not None:
                item.set_exception(exc)

    def _abandon(self, seq: int) -> None:
        with self._cond:
            self._inflight.pop(seq, None)

    def _on_reply_frame(self, frame: bytes) -> None:
        messages = decode_envelope(frame)
        seqs = [_SEQ.unpack_from(m.payload)[0] for m in messages]
        with self._cond:
            items = [self._inflight.pop(seq, None) for seq in seqs]
        for m, item in zip(messages, items):
            if item is None:
                continue  # abandoned after a timeout
            body = m.payload[8:]
            if m.type == MsgType.ERROR:
                item.set_exception(error_from_code(unpack_u16(body), bytes(body[2:]).decode(errors="replace")))
            elif m.type != response_type(item.type):
                item.set_exception(RemoteError(f"reply type 0x{m.type:02x} for request 0x{item.type:02x}"))
            else:
                item.set_result(body)

    def _fail_dest(self, dest: str, exc: Exception) -> None:
        with self._cond:
            lost = [i for i in self._inflight.values() if i.dest == dest]
        self._fail(lost, exc)


# -- in-process transport ---------------------------------------------------


class InprocNetwork:
    """Registry of in-process actors reachable by name.

    ``latency`` (seconds) is added once per direction of every envelope;
    ``bandwidth`` (bytes/s, None for unlimited) models each transport's own
    network interface, serializing its outgoing and incoming bytes.
    """

    def __init__(self, latency: float = 0.0, bandwidth: float | None = None):
        self.latency = latency
        self.bandwidth = bandwidth
        self._handlers: dict[str, Handler] = {}
        self._lock = threading.Lock()

    def register(self, address: str, handler: Handler) -> None:
        with self._lock:
            self._handlers[address] = handler

    def unregister(self, address: str) -> None:
        with self._lock:
            self._handlers.pop(address, None)

    def deliver(self, address: str, frame: bytes) -> bytes:
        handler = self._handlers.get(address)
        if handler is None:
            raise DestinationUnreachable(f"no actor at {address}")
        return serve_envelope(handler, frame)


class InprocTransport(Transport):
    def __init__(self, network: InprocNetwork, max_workers: int = 32, **kwargs):
        super().__init__(**kwargs)
        self.network = network
        self._pool = concurrent.futures.ThreadPoolExecutor(max_workers, thread_name_prefix="inproc-link")
        self._nic_lock = threading.Lock()
        self._nic_free = {"tx": 0.0, "rx": 0.0}

    def _transmit_group(self, group, inline=False):
        live = []
        for dest, frame, batch in group:
            if self.network._handlers.get(dest) is None:
                self._fail(batch, DestinationUnreachable(f"no actor at {dest}"))
            else:
                live.append((dest, frame, batch))
        if not live:
            return
        # envelopes flushed together travel in parallel, so one thread drives
        # the whole group; a caller that will block on the replies drives it itself
        if inline:
            self._round_trip(live)
        else:
            self._pool.submit(self._round_trip, live)

    def _nic(self, sizes, direction: str) -> list[float]:
        """Completion time of each transfer queued on this client's link."""
        now = time.monotonic()
        if not self.network.bandwidth:
            return [now] * len(sizes)
        out = []
        with self._nic_lock:
            free = max(now, self._nic_free[direction])
            for n in sizes:
                free += n / self.network.bandwidth
                out.append(free)
            self._nic_free[direction] = free
        return out

    def _sleep_until(self, t: float) -> None:
        remaining = t - time.monotonic()
        if remaining > _MIN_SLEEP:
            time.sleep(remaining)

    def _round_trip(self, group):
        latency = self.network.latency
        try:
            replies = []
            for (dest, frame, batch), sent in zip(group, self._nic([len(f) for _, f, _ in group], "tx")):
                self._sleep_until(sent + latency)
                try:
                    replies.append((self.network.deliver(dest, frame), batch))
                except TransportError as exc:
                    self._fail(batch, exc)
            done = self._nic([len(r) for r, _ in replies], "rx")
            if done:
                self._sleep_until(done[-1] + latency)
            for reply, _ in replies:
                self._on_reply_frame(reply)
        except Exception as exc:
            log.exception("in-process delivery failed")
            for _, _, batch in group:
                self._fail(batch, TransportError(repr(exc)))

    def close(self):
        super().close()
        self._pool.shutdown(wait=False)


# -- socket transport -------------------------------------------------------


def _recv_exact(sock, n: int) -> bytes | None:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            return None
        buf += chunk
    return bytes(buf)


def read_frame(sock) -> bytes | None:
    header = _recv_exact(sock, _FRAME_LEN.size)
    if header is None:
        return None
    return _recv_exact(sock, _FRAME_LEN.unpack(header)[0])


def write_frame(sock, frame: bytes) -> None:
    sock.sendall(_FRAME_LEN.pack(len(frame)) + frame)


def split_address(address: str) -> tuple[str, int]:
    host, _, port = address.rpartition(":")
    return host, int(port)


class _ThreadingServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class SocketServer:
    """Serve one actor over length-prefixed envelopes on a TCP port."""

    def __init__(self, handler: Handler, host: str = "127.0.0.1", port: int = 0, workers: int = 8):
        pool = concurrent.futures.ThreadPoolExecutor(workers, thread_name_prefix="rpc-server")
        self._pool = pool

        class _Conn(socketserver.BaseRequestHandler):
            def handle(self):
                sock = self.request
                sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                write_lock = threading.Lock()

                def answer(frame):
                    try:
                        reply = serve_envelope(handler, frame)
                    except TransportError as exc:
                        log.warning("dropping undecodable frame: %s", exc)
                        return
                    try:
                        with write_lock:
                            write_frame(sock, reply)
                    except OSError:
                        pass

                while True:
                    try:
                        frame = read_frame(sock)
                    except OSError:
                        return
                    if frame is None:
                        return
                    pool.submit(answer, frame)

        try:
            self._server = _ThreadingServer((host, port), _Conn)
        except OSError as exc:
            if exc.errno == errno.EADDRINUSE:
                raise PortInUse(f"{host}:{port} is already in use") from exc
            raise
        self._thread = None

    @property
    def address(self) -> str:
        host, port = self._server.server_address[:2]
        return f"{host}:{port}"

    def start(self) -> "SocketServer":
        self._thread = threading.Thread(target=self._server.serve_forever, name=f"rpc-{self.address}", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        self._pool.shutdown(wait=False)


class _Connection:
    def __init__(self, transport: "SocketTransport", dest: str):
        self.dest = dest
        self.sock = socket.create_connection(split_address(dest), timeout=transport.timeout)
        self.sock.settimeout(None)
        self.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self.lock = threading.Lock()
        self.alive = True
        self._transport = transport
        threading.Thread(target=self._read_loop, name=f"rpc-conn-{dest}", daemon=True).start()

    def _read_loop(self):
        try:
            while True:
                frame = read_frame(self.sock)
                if frame is None:
                    break
                self._transport._on_reply_frame(frame)
        except (OSError, TransportError):
            pass
        self.alive = False
        self._transport._connection_lost(self)

    def send(self, frame: bytes) -> None:
        with self.lock:
            write_frame(self.sock, frame)

    def close(self):
        self.alive = False
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


class SocketTransport(Transport):
    """One long-lived TCP connection per destination."""

    def __init__(self, **kwargs):
        super().__init__(**kwargs)
        self._conns: dict[str, _Connection] = {}
        self._conn_lock = threading.Lock()

    def _connection(self, dest: str) -> _Connection:
        with self._conn_lock:
            conn = self._conns.get(dest)
            if conn is None or not conn.alive:
                try:
                    conn = _Connection(self, dest)
                except (OSError, ValueError) as exc:
                    raise DestinationUnreachable(f"cannot connect to {dest}: {exc}") from exc
                self._conns[dest] = conn
            return conn

    def _transmit(self, dest, frame, batch):
        self._connection(dest).send(frame)

    def _connection_lost(self, conn: _Connection) -> None:
        with self._conn_lock:
            if self._conns.get(conn.dest) is conn:
                del self._conns[conn.dest]
        self._fail_dest(conn.dest, DestinationUnreachable(f"connection to {conn.dest} lost"))

    def close(self):
        super().close()
        with self._conn_lock:
            conns = list(self._conns.values())
            self._conns.clear()
        for conn in conns:
            conn.close()
