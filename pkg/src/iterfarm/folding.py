"""Reduce-list folding with success counters.

Every map application yields an ExtendedReduceElement: the mapped value
plus a counter that is 1 on success and 0 when the element asked to be
ignored. Folds skip counter-0 entries entirely (their value is absent)
and sum the counters, so the final counter says how many list elements
actually took part in the reduction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Sequence


@dataclass(slots=True)
class ExtendedReduceElement:
    """A reduce value tagged with the number of successes it aggregates.

    ``value`` is meaningless (conventionally None) when ``reduce_counter``
    is 0.
    """

    value: Any
    reduce_counter: int


def process_extended_reduce_list(
    elems: Sequence[ExtendedReduceElement],
    reduce_f: Callable[[Any, Any], Any],
) -> ExtendedReduceElement:
    """Fold ``elems`` left to right with ``reduce_f``, skipping ignored entries.

    The first element with a nonzero counter seeds the accumulator; every
    later nonzero element is folded in, in list order. Counters are summed
    over the whole input. If every counter is 0 the result carries value
    None and counter 0. ``reduce_f`` must be pure: it returns a fresh value
    and mutates neither argument.
    """
    if not elems:
        raise ValueError("cannot fold an empty reduce list")
    acc = None
    seeded = False
    total = 0
    for elem in elems:
        total += elem.reduce_counter
        if elem.reduce_counter == 0:
            continue
        if not seeded:
            acc = elem.value
            seeded = True
        else:
            acc = reduce_f(acc, elem.value)
    return ExtendedReduceElement(acc if seeded else None, total)


def worker_reduce(
    extended_sublist: Sequence[ExtendedReduceElement],
    reduce_f: Callable[[Any, Any], Any],
) -> ExtendedReduceElement:
    """One worker's partial: fold its own mapped sublist."""
    return process_extended_reduce_list(extended_sublist, reduce_f)


def master_reduce(
    partials: Sequence[ExtendedReduceElement],
    reduce_f: Callable[[Any, Any], Any],
) -> ExtendedReduceElement:
    """Fold worker partials, already ordered by ascending rank."""
    return process_extended_reduce_list(partials, reduce_f)
