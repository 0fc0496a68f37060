"""TCP loopback transport: workers are separate processes.

The master listens, accepts exactly K connections, and assigns ranks in
connection order via an 8-byte preamble [rank u32 LE][num_workers u32 LE]
sent immediately on accept. After the preamble the stream is the framed
protocol from :mod:`iterfarm.transport.frames`. The listen socket closes
once K workers are connected, so later connection attempts are refused.
"""

from __future__ import annotations

import logging
import socket
import struct
from typing import Callable

from ..errors import MalformedFrame, TransportFailure
from . import frames
from .base import MasterEndpoint, OrderMessage, ResultMessage, Transport, WorkerEndpoint

log = logging.getLogger(__name__)

_PREAMBLE = struct.Struct("<II")


def _recv_exact(sock: socket.socket, size: int) -> bytes:
    chunks = []
    remaining = size
    while remaining:
        chunk = sock.recv(remaining)
        if not chunk:
            raise TransportFailure("connection closed mid-message")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def _read_frame(sock: socket.socket) -> tuple[int, bytes]:
    header = _recv_exact(sock, 4)
    (length,) = struct.unpack("<I", header)
    if length < 1:
        raise MalformedFrame("frame length field must cover the type byte")
    body = _recv_exact(sock, length)
    return frames.decode_frame(header + body)


class TcpMasterEndpoint(MasterEndpoint):
    def __init__(self, socks: list[socket.socket], timeout: float):
        self._socks = socks
        self._timeout = timeout
        self._closed = False

    def broadcast_order(self, order: OrderMessage) -> None:
        if self._closed:
            raise TransportFailure("master endpoint is closed")
        frame = frames.order_to_frame(order)
        for rank, sock in enumerate(self._socks):
            try:
                sock.sendall(frame)
            except OSError as exc:
                raise TransportFailure(f"worker {rank} unreachable: {exc}") from exc

    def gather_results(self) -> list[ResultMessage]:
        if self._closed:
            raise TransportFailure("master endpoint is closed")
        out = []
        for rank, sock in enumerate(self._socks):
            try:
                msg_type, payload = _read_frame(sock)
            except socket.timeout:
                raise TransportFailure(
                    f"timed out after {self._timeout}s waiting for worker {rank}"
                ) from None
            except OSError as exc:
                raise TransportFailure(f"worker {rank}: {exc}") from exc
            if msg_type != frames.MSG_RESULT:
                raise MalformedFrame(
                    f"worker {rank} sent message type {msg_type:#04x}, expected a result"
                )
            result = frames.decode_result_payload(payload)
            if result.worker_rank != rank:
                raise TransportFailure(
                    f"socket of worker {rank} delivered a result claiming rank "
                    f"{result.worker_rank}"
                )
            out.append(result)
        return out

    def close(self) -> None:
        self._closed = True
        for sock in self._socks:
            try:
                sock.close()
            except OSError:
                pass


class TcpWorkerEndpoint(WorkerEndpoint):
    def __init__(self, sock: socket.socket, rank: int, num_workers: int):
        self._sock = sock
        self.rank = rank
        self.num_workers = num_workers

    def receive_order(self) -> OrderMessage:
        try:
            msg_type, payload = _read_frame(self._sock)
        except socket.timeout:
            raise TransportFailure(f"worker {self.rank}: timed out waiting for an order") from None
        except OSError as exc:
            raise TransportFailure(f"worker {self.rank}: {exc}") from exc
        return frames.frame_to_order(msg_type, payload)

    def send_result(self, result: ResultMessage) -> None:
        frame = frames.encode_frame(
            frames.MSG_RESULT, frames.encode_result_payload(result)
        )
        try:
            self._sock.sendall(frame)
        except OSError as exc:
            raise TransportFailure(f"worker {self.rank}: {exc}") from exc

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


class TcpMasterTransport(Transport):
    """Master side of a TCP star. Binds and listens immediately.

    ``address`` is a (host, port) pair; port 0 asks the OS for a free
    port, and the bound address is available as ``.address`` before
    ``start`` blocks in accept. ``start`` ignores ``worker_fn``: workers
    are external processes that dial in with :func:`connect_worker`.
    """

    def __init__(
        self,
        address: tuple[str, int] = ("127.0.0.1", 0),
        num_workers: int = 1,
        timeout: float = 60.0,
    ):
        if num_workers < 1:
            raise ValueError(f"num_workers must be >= 1, got {num_workers}")
        self.num_workers = num_workers
        self.timeout = timeout
        self._listener: socket.socket | None = socket.create_server(
            address, backlog=num_workers
        )
        self.address: tuple[str, int] = self._listener.getsockname()[:2]
        self._endpoint: TcpMasterEndpoint | None = None

    def start(
        self, worker_fn: Callable[[WorkerEndpoint], None] | None = None
    ) -> MasterEndpoint:
        if self._endpoint is not None:
            raise RuntimeError("transport already started")
        if self._listener is None:
            raise TransportFailure("transport is closed")
        socks: list[socket.socket] = []
        self._listener.settimeout(self.timeout)
        try:
            for rank in range(self.num_workers):
                try:
                    conn, peer = self._listener.accept()
                except socket.timeout:
                    raise TransportFailure(
                        f"only {rank} of {self.num_workers} workers connected "
                        f"within {self.timeout}s"
                    ) from None
                conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                conn.settimeout(self.timeout)
                conn.sendall(_PREAMBLE.pack(rank, self.num_workers))
                log.debug("worker %d connected from %s", rank, peer)
                socks.append(conn)
        except BaseException:
            for sock in socks:
                sock.close()
            raise
        finally:
            self._listener.close()
            self._listener = None
        self._endpoint = TcpMasterEndpoint(socks, self.timeout)
        return self._endpoint

    def close(self) -> None:
        if self._listener is not None:
            self._listener.close()
            self._listener = None
        if self._endpoint is not None:
            self._endpoint.close()


def connect_worker(
    address: tuple[str, int],
    timeout: float = 60.0,
    connect_timeout: float = 10.0,
) -> TcpWorkerEndpoint:
    """Dial the master and complete the rank preamble.

    Raises TransportFailure when the master is absent, full (listen socket
    already closed), or unreachable.
    """
    try:
        sock = socket.create_connection(address, timeout=connect_timeout)
    except OSError as exc:
        raise TransportFailure(f"cannot connect to master at {address}: {exc}") from exc
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    sock.settimeout(timeout)
    try:
        rank, num_workers = _PREAMBLE.unpack(_recv_exact(sock, _PREAMBLE.size))
    except (OSError, TransportFailure) as exc:
        sock.close()
        raise TransportFailure(f"no rank assignment from master: {exc}") from exc
    log.debug("connected to %s as worker %d of %d", address, rank, num_workers)
    return TcpWorkerEndpoint(sock, rank, num_workers)
