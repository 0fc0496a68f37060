"""In-process transport: master and workers share one process.

Workers run as threads (or are driven manually by tests). Links carry
frozen message structs whose payloads are already encoded bytes, so no
mutable state ever crosses between the master and a worker context.
"""

from __future__ import annotations

import logging
import queue
import threading
from dataclasses import dataclass
from typing import Any, Callable

from ..errors import TransportFailure
from .base import MasterEndpoint, OrderMessage, ResultMessage, Transport, WorkerEndpoint

log = logging.getLogger(__name__)

_CLOSED = object()  # sentinel pushed into order queues on master close


@dataclass(frozen=True)
class _WorkerFailure:
    rank: int
    error: BaseException


class InProcWorkerEndpoint(WorkerEndpoint):
    def __init__(self, transport: "InProcTransport", rank: int):
        self._transport = transport
        self.rank = rank
        self.num_workers = transport.num_workers
        self._orders: queue.Queue = queue.Queue()
        self._closed = threading.Event()

    def receive_order(self) -> OrderMessage:
        if self._closed.is_set():
            raise TransportFailure(f"worker {self.rank}: endpoint is closed")
        try:
            item = self._orders.get(timeout=self._transport.timeout)
        except queue.Empty:
            raise TransportFailure(
                f"worker {self.rank}: no order within {self._transport.timeout}s"
            ) from None
        if item is _CLOSED:
            raise TransportFailure(f"worker {self.rank}: master closed the link")
        return item

    def send_result(self, result: ResultMessage) -> None:
        if self._transport._master_closed.is_set():
            raise TransportFailure(
                f"worker {self.rank}: cannot send, master endpoint is closed"
            )
        if self._closed.is_set():
            raise TransportFailure(f"worker {self.rank}: endpoint is closed")
        self._transport._results.put(result)

    def close(self) -> None:
        self._closed.set()


class InProcMasterEndpoint(MasterEndpoint):
    def __init__(self, transport: "InProcTransport"):
        self._transport = transport

    def broadcast_order(self, order: OrderMessage) -> None:
        t = self._transport
        if t._master_closed.is_set():
            raise TransportFailure("master endpoint is closed")
        for ep in t.worker_endpoints:
            if ep._closed.is_set():
                raise TransportFailure(f"worker {ep.rank} unreachable: link closed")
        for ep in t.worker_endpoints:
            ep._orders.put(order)

    def gather_results(self) -> list[ResultMessage]:
        t = self._transport
        out: list[ResultMessage] = []
        for _ in range(t.num_workers):
            try:
                item = t._results.get(timeout=t.timeout)
            except queue.Empty:
                raise TransportFailure(
                    f"timed out after {t.timeout}s with {len(out)} of "
                    f"{t.num_workers} results"
                ) from None
            if isinstance(item, _WorkerFailure):
                raise TransportFailure(
                    f"worker {item.rank} failed: {item.error!r}"
                ) from item.error
            out.append(item)
        out.sort(key=lambda r: r.worker_rank)
        ranks = [r.worker_rank for r in out]
        if ranks != list(range(t.num_workers)):
            raise TransportFailure(f"gather saw ranks {ranks}")
        return out

    def close(self) -> None:
        t = self._transport
        if t._master_closed.is_set():
            return
        t._master_closed.set()
        for ep in t.worker_endpoints:
            ep._orders.put(_CLOSED)


class InProcTransport(Transport):
    """A star of K worker threads connected to the calling thread.

    ``start`` spawns one daemon thread per worker running ``worker_fn``;
    pass ``worker_fn=None`` to create the endpoints without threads and
    drive them manually. A worker whose body raises surfaces at the
    master's next gather as a TransportFailure naming the rank.
    """

    def __init__(self, num_workers: int, timeout: float = 60.0):
        if num_workers < 1:
            raise ValueError(f"num_workers must be >= 1, got {num_workers}")
        self.num_workers = num_workers
        self.timeout = timeout
        self._results: queue.Queue = queue.Queue()
        self._master_closed = threading.Event()
        self.worker_endpoints: list[InProcWorkerEndpoint] = []
        self._threads: list[threading.Thread] = []
        self._master: InProcMasterEndpoint | None = None

    def start(
        self, worker_fn: Callable[[WorkerEndpoint], None] | None = None
    ) -> MasterEndpoint:
        if self._master is not None:
            raise RuntimeError("transport already started")
        self.worker_endpoints = [
            InProcWorkerEndpoint(self, rank) for rank in range(self.num_workers)
        ]
        self._master = InProcMasterEndpoint(self)
        if worker_fn is not None:
            for ep in self.worker_endpoints:
                thread = threading.Thread(
                    target=self._run_worker,
                    args=(worker_fn, ep),
                    name=f"farm-worker-{ep.rank}",
                    daemon=True,
                )
                self._threads.append(thread)
                thread.start()
        return self._master

    def _run_worker(
        self, worker_fn: Callable[[WorkerEndpoint], None], ep: InProcWorkerEndpoint
    ) -> None:
        try:
            worker_fn(ep)
        except BaseException as exc:  # noqa: BLE001 - reported to the master
            log.debug("worker %d raised", ep.rank, exc_info=True)
            self._results.put(_WorkerFailure(ep.rank, exc))

    def close(self) -> None:
        if self._master is not None:
            self._master.close()
        for thread in self._threads:
            thread.join(timeout=5.0)
        self._threads = []
