"""The problem contract: what user code supplies to the engine.

A problem is defined by subclassing :class:`Problem`. The engine treats a
computation as an iteration over a fixed *map list*: each iteration it
broadcasts the current parameter, applies ``map_f`` to every list element,
folds the results with ``reduce_f``, and hands the fold to
``process_results``, which updates the parameter and decides whether to
stop. Both engines (sequential and parallel) drive exactly the same
callbacks, so a problem written against this class runs unchanged in
either mode and over any transport.

Multi-job workflows
-------------------
A problem may carry up to four job families (job cases 0..3). Job 0 is the
plain method family on this class. Workflow problems override
:meth:`Problem.job_handlers` to return one :class:`JobHandlers` record per
job; the master picks the family of the job named in each order. The
``job_dispatcher`` hook can reroute the next job (and the exit flag) after
every iteration, which is how job chains are scripted.

Values crossing the wire
------------------------
The parameter and every job's reduce element must have byte codecs. The
engine round-trips the parameter through its codec at each order boundary,
even in-process, so worker-side code can never alias master state. Codecs
should be fixed-width little-endian and bit-exact for floats.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Callable, Optional, Sequence

from .context import ExecutionContext
from .errors import CodecMismatch, ListTooShort, MissingJobImplementation

MapF = Callable[[Any, ExecutionContext], tuple[Any, bool]]
ReduceF = Callable[[Any, Any], Any]
ProcessResultsF = Callable[[Any, int, Any], tuple[int, bool]]
IterOutputF = Callable[[Any, int, Any, float, int, int], Optional[str]]
ProblemOutputF = Callable[[Any, int, Any, float, int], Optional[str]]


@dataclass(frozen=True)
class JobHandlers:
    """The callback family of one job case.

    map_f, reduce_f, process_results and both reduce codecs are required
    for any job the run can reach; iter_output and problem_output are
    optional trace/report hooks.
    """

    map_f: MapF | None = None
    reduce_f: ReduceF | None = None
    process_results: ProcessResultsF | None = None
    encode_reduce: Callable[[Any], bytes] | None = None
    decode_reduce: Callable[[bytes], Any] | None = None
    iter_output: IterOutputF | None = None
    problem_output: ProblemOutputF | None = None


_REQUIRED_SLOTS = (
    "map_f",
    "reduce_f",
    "process_results",
    "encode_reduce",
    "decode_reduce",
)


class Problem(ABC):
    """Base class for user problems.

    Subclasses implement the job-0 family directly as methods. The engine
    calls, in order: ``init`` once per process, ``set_list_size`` and
    ``set_map_list_elem`` to build the map list, ``set_init_parameter``
    once on the master, then per iteration ``map_f``/``reduce_f`` on
    workers and ``process_results`` (plus ``job_dispatcher`` when
    max_job_case > 0) on the master.

    ``init`` runs in every process of a distributed run, so it must be
    deterministic and idempotent. ``map_f`` may run concurrently over
    distinct elements when the intra-worker parallel map is enabled, so it
    must not mutate shared problem data.
    """

    def init(self) -> bool:
        """Prepare problem data; return False to abort the run."""
        return True

    @abstractmethod
    def set_list_size(self) -> int:
        """Number of elements in the map list."""

    @abstractmethod
    def set_map_list_elem(self, i: int) -> Any:
        """Element ``i`` (0-based) of the map list."""

    @abstractmethod
    def set_init_parameter(self) -> Any:
        """Initial parameter broadcast before the first iteration."""

    # -- parameter codec ------------------------------------------------

    @abstractmethod
    def encode_parameter(self, parameter: Any) -> bytes:
        """Serialize a parameter for an order message."""

    @abstractmethod
    def decode_parameter(self, data: bytes) -> Any:
        """Inverse of :meth:`encode_parameter`."""

    # -- job 0 family ----------------------------------------------------

    @abstractmethod
    def map_f(self, elem: Any, ctx: ExecutionContext) -> tuple[Any, bool]:
        """Map one element under ``ctx.parameter``.

        Returns ``(reduce_elem, success)``. On ``success=False`` the
        element is excluded from the fold and the counter.
        """

    @abstractmethod
    def reduce_f(self, x: Any, y: Any) -> Any:
        """Associative combine of two reduce elements. Must be pure."""

    @abstractmethod
    def process_results(
        self, reduce_result: Any, reduce_counter: int, parameter: Any
    ) -> tuple[int, bool]:
        """Fold the iteration's global reduce into the parameter.

        Mutates ``parameter`` in place (it is the master's owned value)
        and returns ``(next_job, exit)``. Must tolerate
        ``reduce_counter == 0``, in which case ``reduce_result`` is None.
        """

    @abstractmethod
    def encode_reduce(self, value: Any) -> bytes:
        """Serialize a job-0 reduce element."""

    @abstractmethod
    def decode_reduce(self, data: bytes) -> Any:
        """Inverse of :meth:`encode_reduce`."""

    def iter_output(
        self,
        reduce_result: Any,
        reduce_counter: int,
        parameter: Any,
        elapsed: float,
        next_job: int,
        precision: int,
    ) -> str | None:
        """Fields appended to a trace record; None for no extra fields."""
        return None

    def problem_output(
        self,
        reduce_result: Any,
        reduce_counter: int,
        parameter: Any,
        elapsed: float,
        precision: int,
    ) -> str | None:
        """Final report line emitted when the run stops; None for silence."""
        return None

    # -- run-level hooks --------------------------------------------------

    def job_dispatcher(
        self, parameter: Any, next_job: int, exit_flag: bool
    ) -> tuple[int, bool]:
        """Optionally override the next job and exit decision.

        Called on the master before the first iteration and after every
        ``process_results`` whenever the run's max_job_case is positive.
        The default keeps whatever was proposed.
        """
        return next_job, exit_flag

    def parameters_output(self, parameter: Any, precision: int) -> str | None:
        """One-off description line emitted before the first iteration."""
        return None

    def job_handlers(self) -> tuple[JobHandlers, ...]:
        """Indexed callback families, one per job case.

        The default exposes the method family of this class as job 0.
        Workflow problems override this to return additional families.
        """
        return (
            JobHandlers(
                map_f=self.map_f,
                reduce_f=self.reduce_f,
                process_results=self.process_results,
                encode_reduce=self.encode_reduce,
                decode_reduce=self.decode_reduce,
                iter_output=self.iter_output,
                problem_output=self.problem_output,
            ),
        )


def validate(problem: Problem, config) -> None:
    """Check a problem against a run configuration before any iteration.

    Verifies that every job case up to ``config.max_job_case`` has a
    complete handler family, that the map list is long enough for the
    worker count, and that the parameter codec round-trips the initial
    parameter bit-exactly. Raises MissingJobImplementation, ListTooShort
    or CodecMismatch accordingly. Assumes the problem is constructed and
    initialized.
    """
    handlers = problem.job_handlers()
    for job in range(config.max_job_case + 1):
        if job >= len(handlers):
            raise MissingJobImplementation(
                f"job {job} has no handlers (only {len(handlers)} families defined)"
            )
        family = handlers[job]
        for slot in _REQUIRED_SLOTS:
            if getattr(family, slot) is None:
                raise MissingJobImplementation(f"job {job} is missing {slot}")

    list_size = problem.set_list_size()
    if list_size < config.num_workers:
        raise ListTooShort(
            f"map list of size {list_size} cannot feed {config.num_workers} workers"
        )

    parameter = problem.set_init_parameter()
    first = problem.encode_parameter(parameter)
    second = problem.encode_parameter(problem.decode_parameter(first))
    if first != second:
        raise CodecMismatch(
            "parameter codec does not round-trip: decode(encode(p)) re-encodes "
            f"to {len(second)} bytes that differ from the original {len(first)}"
        )


def build_map_list(problem: Problem) -> list[Any]:
    """Materialize the full map list. Raises ListTooShort when empty."""
    size = problem.set_list_size()
    if size < 1:
        raise ListTooShort("map list is empty")
    return [problem.set_map_list_elem(i) for i in range(size)]


def build_map_sublist(problem: Problem, offset: int, length: int) -> list[Any]:
    """Materialize one worker's contiguous slice of the map list."""
    return [problem.set_map_list_elem(offset + t) for t in range(length)]


def fmt_float(value: float, precision: int) -> str:
    """Scientific notation with exactly ``precision`` fractional digits."""
    return f"{value:.{precision}e}"
