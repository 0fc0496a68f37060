"""Per-process execution context visible to map callbacks.

The engine owns and updates one context per worker (plus one for the
sequential engine). Callbacks receive it read-only; mutating it from
problem code is undefined behavior.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Any


@dataclass
class ExecutionContext:
    """Skeleton state a map callback may consult.

    rank                0-based worker rank; the master's rank equals num_workers.
    master_rank         always num_workers in a star of K workers.
    num_workers         K.
    address_offset      global index of this worker's first sublist element.
    sublist_length      number of elements assigned to this worker.
    iter_counter        iterations completed so far.
    job_case            job of the order currently being processed.
    number_in_sublist   position within the sublist of the element being mapped.
    parameter           this iteration's decoded parameter (worker-local copy).
    """

    rank: int
    master_rank: int
    num_workers: int
    address_offset: int
    sublist_length: int
    iter_counter: int = 0
    job_case: int = 0
    number_in_sublist: int = 0
    parameter: Any = None

    def for_element(self, number_in_sublist: int) -> "ExecutionContext":
        """A copy of this context pinned to one sublist position.

        Used by the intra-worker parallel map so concurrent map calls never
        share a mutable context.
        """
        return dataclasses.replace(self, number_in_sublist=number_in_sublist)
