"""Message structs and endpoint interfaces shared by all transports.

A transport wires one master to K workers in a star. The master sends
orders (current parameter, job case, exit flag) to every worker and
gathers one result (partial reduce) back from each. Payloads inside the
messages are already-encoded bytes; transports never see problem types.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Optional


@dataclass(frozen=True)
class OrderMessage:
    """Master-to-worker iteration order.

    ``parameter`` holds the encoded parameter bytes. When ``exit`` is
    true the receiving worker must terminate without mapping, and the
    parameter bytes are irrelevant (conventionally empty).
    """

    parameter: bytes
    job_case: int
    exit: bool = False


@dataclass(frozen=True)
class ResultMessage:
    """Worker-to-master partial reduce.

    ``value`` carries the encoded partial and must be None exactly when
    ``reduce_counter`` is 0 (an all-ignored sublist has no value).
    ``elapsed`` is the worker's map+reduce wall time; it is informational
    and is not carried by the TCP wire format, which delivers 0.0.
    """

    worker_rank: int
    reduce_counter: int
    value: Optional[bytes]
    elapsed: float = 0.0

    def __post_init__(self):
        if (self.value is None) != (self.reduce_counter == 0):
            raise ValueError(
                "result value must be absent exactly when reduce_counter is 0"
            )


class MasterEndpoint(ABC):
    """The master's side of a connected star."""

    @abstractmethod
    def broadcast_order(self, order: OrderMessage) -> None:
        """Deliver ``order`` to every worker. TransportFailure if any link is down."""

    @abstractmethod
    def gather_results(self) -> list[ResultMessage]:
        """Collect exactly one result per worker, returned in ascending rank order.

        Raises TransportFailure on timeout, a failed worker, or a garbled
        message, regardless of arrival order.
        """

    @abstractmethod
    def close(self) -> None:
        """Tear down all links. Idempotent."""


class WorkerEndpoint(ABC):
    """One worker's side of a connected star."""

    rank: int
    num_workers: int

    @abstractmethod
    def receive_order(self) -> OrderMessage:
        """Block for the next order. TransportFailure if the link dies."""

    @abstractmethod
    def send_result(self, result: ResultMessage) -> None:
        """Send this iteration's partial to the master."""

    @abstractmethod
    def close(self) -> None:
        """Tear down this worker's link. Idempotent."""


class Transport(ABC):
    """Factory for one connected master/worker star."""

    num_workers: int

    @abstractmethod
    def start(
        self, worker_fn: Callable[[WorkerEndpoint], None] | None = None
    ) -> MasterEndpoint:
        """Bring the star up and return the master endpoint.

        ``worker_fn`` is the worker body to run for each in-process worker
        context; transports whose workers live in other processes ignore it.
        """

    @abstractmethod
    def close(self) -> None:
        """Shut the star down and release resources. Idempotent."""
