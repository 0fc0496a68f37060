"""Length-prefixed wire framing and message payload codecs.

Frame layout, all integers little-endian:

    length   u32   number of bytes that follow (type byte + payload)
    type     u8    0x01 ORDER, 0x02 RESULT, 0x03 EXIT
    payload  ...   type-specific

ORDER payload:   [job_case u8][exit u8][parameter bytes]
RESULT payload:  [worker_rank u32][reduce_counter u64][value bytes]
                 where the value bytes are absent exactly when the
                 counter is 0
EXIT payload:    empty as sent by this package; the type tolerates any
                 payload on decode

An EXIT frame is the terminal exit-only order: it ends a worker without
a parameter attached. Orders inside the iteration loop travel as ORDER
frames with their exit byte 0.
"""

from __future__ import annotations

import struct

from ..errors import MalformedFrame
from .base import OrderMessage, ResultMessage

MSG_ORDER = 0x01
MSG_RESULT = 0x02
MSG_EXIT = 0x03

_KNOWN_TYPES = (MSG_ORDER, MSG_RESULT, MSG_EXIT)

_LEN = struct.Struct("<I")
_ORDER_HEAD = struct.Struct("<BB")
_RESULT_HEAD = struct.Struct("<IQ")

MAX_PAYLOAD = 0xFFFFFFFE  # length field covers payload plus the type byte


def encode_frame(msg_type: int, payload: bytes) -> bytes:
    if msg_type not in _KNOWN_TYPES:
        raise ValueError(f"unknown message type {msg_type:#04x}")
    if len(payload) > MAX_PAYLOAD:
        raise ValueError(f"payload of {len(payload)} bytes exceeds frame limit")
    return _LEN.pack(1 + len(payload)) + bytes([msg_type]) + payload


def decode_frame(data: bytes) -> tuple[int, bytes]:
    """Decode exactly one frame; the buffer must contain nothing else."""
    if len(data) < _LEN.size + 1:
        raise MalformedFrame(f"frame truncated at {len(data)} bytes")
    (length,) = _LEN.unpack_from(data)
    if length < 1:
        raise MalformedFrame("frame length field must cover the type byte")
    if len(data) - _LEN.size != length:
        raise MalformedFrame(
            f"frame length field says {length} bytes, buffer has {len(data) - _LEN.size}"
        )
    msg_type = data[_LEN.size]
    if msg_type not in _KNOWN_TYPES:
        raise MalformedFrame(f"unknown message type {msg_type:#04x}")
    return msg_type, data[_LEN.size + 1 :]


def encode_order_payload(order: OrderMessage) -> bytes:
    return _ORDER_HEAD.pack(order.job_case, 1 if order.exit else 0) + order.parameter


def decode_order_payload(payload: bytes) -> OrderMessage:
    if len(payload) < _ORDER_HEAD.size:
        raise MalformedFrame("order payload shorter than its header")
    job_case, exit_byte = _ORDER_HEAD.unpack_from(payload)
    if exit_byte not in (0, 1):
        raise MalformedFrame(f"order exit byte must be 0 or 1, got {exit_byte}")
    return OrderMessage(payload[_ORDER_HEAD.size :], job_case, bool(exit_byte))


def encode_result_payload(result: ResultMessage) -> bytes:
    head = _RESULT_HEAD.pack(result.worker_rank, result.reduce_counter)
    return head if result.value is None else head + result.value


def decode_result_payload(payload: bytes) -> ResultMessage:
    if len(payload) < _RESULT_HEAD.size:
        raise MalformedFrame("result payload shorter than its header")
    rank, counter = _RESULT_HEAD.unpack_from(payload)
    value = payload[_RESULT_HEAD.size :]
    if counter == 0:
        if value:
            raise MalformedFrame("counter-0 result must carry no value bytes")
        return ResultMessage(rank, 0, None)
    return ResultMessage(rank, counter, value)


def order_to_frame(order: OrderMessage) -> bytes:
    """Wire form of an order: EXIT frame when terminal, ORDER frame otherwise."""
    if order.exit:
        return encode_frame(MSG_EXIT, b"")
    return encode_frame(MSG_ORDER, encode_order_payload(order))


def frame_to_order(msg_type: int, payload: bytes) -> OrderMessage:
    if msg_type == MSG_EXIT:
        return OrderMessage(b"", 0, True)
    if msg_type == MSG_ORDER:
        return decode_order_payload(payload)
    raise MalformedFrame(f"expected an order, got message type {msg_type:#04x}")
