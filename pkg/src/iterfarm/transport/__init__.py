"""Pluggable master/worker transports and the wire protocol."""

from .base import (
    MasterEndpoint,
    OrderMessage,
    ResultMessage,
    Transport,
    WorkerEndpoint,
)
from .inproc import InProcTransport
from .tcp import TcpMasterTransport, connect_worker

__all__ = [
    "MasterEndpoint",
    "OrderMessage",
    "ResultMessage",
    "Transport",
    "WorkerEndpoint",
    "InProcTransport",
    "TcpMasterTransport",
    "connect_worker",
]
