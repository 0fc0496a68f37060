"""Contiguous block partitioning of the map list across workers."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ListTooShort


@dataclass(frozen=True)
class Partition:
    """Assignment of contiguous sublists to worker ranks.

    ``assignments[rank]`` is an ``(offset, length)`` pair. Offsets are
    ascending, lengths differ by at most one, and the blocks tile the
    whole list with no gaps or overlaps.
    """

    list_size: int
    num_workers: int
    assignments: tuple[tuple[int, int], ...]


def partition_list(list_size: int, num_workers: int) -> Partition:
    """Split ``list_size`` elements into ``num_workers`` contiguous blocks.

    Every worker gets ``list_size // num_workers`` elements; the first
    ``list_size % num_workers`` ranks get one extra. Raises ListTooShort
    when there are fewer elements than workers, since every worker must
    own at least one element.
    """
    if num_workers < 1:
        raise ValueError(f"num_workers must be >= 1, got {num_workers}")
    if list_size < num_workers:
        raise ListTooShort(
            f"map list of size {list_size} cannot feed {num_workers} workers"
        )
    base, extra = divmod(list_size, num_workers)
    assignments = []
    offset = 0
    for rank in range(num_workers):
        length = base + (1 if rank < extra else 0)
        assignments.append((offset, length))
        offset += length
    return Partition(list_size, num_workers, tuple(assignments))
