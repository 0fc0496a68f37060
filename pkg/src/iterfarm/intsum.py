"""Integer summation toy problem, mostly useful for benchmarks and tests.

Each iteration sums the whole list; the run exits after a fixed number of
rounds. Integer addition is exact, so any worker count and any grouping
of the fold produce the same total, which makes this problem the natural
probe for engine-level equivalences. An optional per-element delay makes
map work heavy enough to measure speedup, and an optional index filter
exercises the ignored-element counter semantics.
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from .context import ExecutionContext
from .problem import Problem

_STATE = struct.Struct("<Iq")
_ELEM = struct.Struct("<q")


@dataclass
class SumState:
    """Master-side parameter: rounds completed and the latest total."""

    rounds_done: int = 0
    total: int = 0


class IntSumProblem(Problem):
    """Sum a fixed list of integers for a given number of rounds.

    map_delay_us adds a sleep to every map call. keep_index, when given,
    decides by global element index which elements take part; the rest
    are ignored and excluded from the reduce counter.
    """

    variant = "intsum"

    def __init__(
        self,
        values: Sequence[int],
        rounds: int = 1,
        map_delay_us: int = 0,
        keep_index: Optional[Callable[[int], bool]] = None,
    ):
        if rounds < 1:
            raise ValueError(f"rounds must be >= 1, got {rounds}")
        self.values = list(values)
        self.rounds = rounds
        self.map_delay_us = map_delay_us
        self.keep_index = keep_index

    def set_list_size(self) -> int:
        return len(self.values)

    def set_map_list_elem(self, i: int) -> tuple[int, int]:
        return (i, self.values[i])

    def set_init_parameter(self) -> SumState:
        return SumState()

    def encode_parameter(self, parameter: SumState) -> bytes:
        return _STATE.pack(parameter.rounds_done, parameter.total)

    def decode_parameter(self, data: bytes) -> SumState:
        rounds_done, total = _STATE.unpack(data)
        return SumState(rounds_done, total)

    def map_f(self, elem: tuple[int, int], ctx: ExecutionContext) -> tuple[int, bool]:
        index, value = elem
        if self.map_delay_us:
            time.sleep(self.map_delay_us / 1e6)
        keep = self.keep_index(index) if self.keep_index is not None else True
        return value, keep

    def reduce_f(self, x: int, y: int) -> int:
        return x + y

    def process_results(
        self, reduce_result: int | None, reduce_counter: int, parameter: SumState
    ) -> tuple[int, bool]:
        parameter.rounds_done += 1
        if reduce_counter:
            parameter.total = reduce_result
        return 0, parameter.rounds_done >= self.rounds

    def encode_reduce(self, value: int) -> bytes:
        return _ELEM.pack(value)

    def decode_reduce(self, data: bytes) -> int:
        return _ELEM.unpack(data)[0]

    def iter_output(self, reduce_result, reduce_counter, parameter, elapsed, next_job, precision):
        return f"total={parameter.total} counted={reduce_counter}"

    def problem_output(self, reduce_result, reduce_counter, parameter, elapsed, precision):
        return f"total={parameter.total} counted={reduce_counter} rounds={parameter.rounds_done}"

    def parameters_output(self, parameter, precision):
        return f"list_size={len(self.values)} rounds={self.rounds}"
