"""Sequential and parallel engines driving the iterate/map/reduce loop.

Both engines execute the same schedule. Per iteration:

1. the master encodes the current parameter into an order (job case,
   exit flag false) and broadcasts it to every worker;
2. each worker maps its own contiguous sublist, folds the mapped values
   left to right, and sends the partial back;
3. the master folds the partials in ascending rank order, hands the
   total to ``process_results`` (which updates the parameter and
   proposes the next job and the exit flag), then lets the
   ``job_dispatcher`` override that proposal when the run uses jobs;
4. when the exit flag is set, a terminal exit-only order releases the
   workers and the run reports its outcome.

The broadcast and the gather are both full barriers, so an iteration
never overlaps the next one. Fold order is fixed by list order within a
sublist and by rank across partials, which makes every run with a fixed
worker count bit-reproducible.

The sequential engine is the same loop with one fused context standing
in for the master and a single worker; parameters still round-trip
through the problem codec at the order boundary, so a parallel run with
one worker is bit-identical to a sequential run.
"""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Optional, Sequence

from .context import ExecutionContext
from .errors import InitFailed, IterationLimitExceeded
from .folding import ExtendedReduceElement, master_reduce, worker_reduce
from .partition import partition_list
from .problem import Problem, build_map_list, build_map_sublist, validate
from .transport.base import OrderMessage, ResultMessage, Transport, WorkerEndpoint

log = logging.getLogger(__name__)

Sink = Callable[[str], None]


@dataclass(frozen=True)
class RunConfig:
    """Run-level knobs shared by both engines.

    intra_worker_threads of 0 means one thread per available core; the
    intra-worker map stays serial unless intra_worker_parallel is set.
    max_iterations is a safety bound, not a stop condition.
    """

    num_workers: int = 1
    max_job_case: int = 0
    output_precision: int = 4
    iter_output_enabled: bool = False
    trace_count: int = 1
    intra_worker_parallel: bool = False
    intra_worker_threads: int = 0
    max_iterations: int = 1_000_000

    def __post_init__(self):
        if self.num_workers < 1:
            raise ValueError("num_workers must be >= 1")
        if not 0 <= self.max_job_case <= 3:
            raise ValueError("max_job_case must be in 0..3")
        if self.output_precision < 0:
            raise ValueError("output_precision must be >= 0")
        if self.trace_count < 1:
            raise ValueError("trace_count must be >= 1")
        if self.intra_worker_threads < 0:
            raise ValueError("intra_worker_threads must be >= 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass(frozen=True)
class RunOutcome:
    """What a finished run reports back."""

    final_parameter: Any
    final_reduce: ExtendedReduceElement
    iterations: int
    elapsed_seconds: float
    final_job_case: int


@dataclass
class MasterState:
    """Mutable master-side loop state threaded through master_iterate."""

    parameter: Any
    job: int = 0
    exit: bool = False
    iter_counter: int = 0
    final_job: int = 0
    last_reduce: ExtendedReduceElement = field(
        default_factory=lambda: ExtendedReduceElement(None, 0)
    )


def worker_map(
    order: OrderMessage,
    sublist: Sequence[Any],
    problem: Problem,
    ctx: ExecutionContext,
    *,
    parallel: bool = False,
    threads: int = 0,
) -> list[ExtendedReduceElement]:
    """Apply the ordered job's map_f to every sublist element.

    Decodes the order's parameter into the context, then maps serially in
    list order, or concurrently when ``parallel`` asks for it. Output
    order always equals input order; concurrent calls get private context
    copies so ``number_in_sublist`` stays truthful per element.
    """
    handlers = problem.job_handlers()[order.job_case]
    map_f = handlers.map_f
    ctx.job_case = order.job_case
    ctx.parameter = problem.decode_parameter(order.parameter)

    pool_size = threads if threads > 0 else (os.cpu_count() or 1)
    if parallel and pool_size > 1 and len(sublist) > 1:
        def apply_one(t: int, elem: Any) -> ExtendedReduceElement:
            value, ok = map_f(elem, ctx.for_element(t))
            return ExtendedReduceElement(value, 1 if ok else 0)

        with ThreadPoolExecutor(max_workers=pool_size) as pool:
            return list(pool.map(apply_one, range(len(sublist)), sublist))

    out = []
    for t, elem in enumerate(sublist):
        ctx.number_in_sublist = t
        value, ok = map_f(elem, ctx)
        out.append(ExtendedReduceElement(value, 1 if ok else 0))
    return out


def worker_loop(
    problem: Problem, endpoint: WorkerEndpoint, config: RunConfig | None = None
) -> None:
    """Body of one worker: serve orders until a terminal exit order.

    Runs the problem's init, builds this rank's sublist from the shared
    partition rule, then alternates receive/map/reduce/send. In a
    distributed run the problem instance must be constructed from the
    same inputs as the master's, since each process derives its own data.
    """
    parallel = config.intra_worker_parallel if config else False
    threads = config.intra_worker_threads if config else 0
    if not problem.init():
        raise InitFailed(f"worker {endpoint.rank}: problem init reported failure")
    size = problem.set_list_size()
    part = partition_list(size, endpoint.num_workers)
    offset, length = part.assignments[endpoint.rank]
    sublist = build_map_sublist(problem, offset, length)
    handlers = problem.job_handlers()
    ctx = ExecutionContext(
        rank=endpoint.rank,
        master_rank=endpoint.num_workers,
        num_workers=endpoint.num_workers,
        address_offset=offset,
        sublist_length=length,
    )
    log.debug("worker %d serving %d elements at offset %d", endpoint.rank, length, offset)
    while True:
        order = endpoint.receive_order()
        if order.exit:
            break
        started = time.perf_counter()
        mapped = worker_map(
            order, sublist, problem, ctx, parallel=parallel, threads=threads
        )
        family = handlers[order.job_case]
        partial = worker_reduce(mapped, family.reduce_f)
        elapsed = time.perf_counter() - started
        payload = (
            family.encode_reduce(partial.value) if partial.reduce_counter else None
        )
        endpoint.send_result(
            ResultMessage(endpoint.rank, partial.reduce_counter, payload, elapsed)
        )
        ctx.iter_counter += 1
    endpoint.close()


def _emit(sink: Optional[Sink], line: Optional[str]) -> None:
    if sink is not None and line is not None:
        sink(line)


def _checked_job(job: int, config: RunConfig, origin: str) -> int:
    if not 0 <= job <= config.max_job_case:
        raise ValueError(
            f"{origin} chose job {job}, outside 0..{config.max_job_case}"
        )
    return job


def _predispatch(problem: Problem, config: RunConfig, state: MasterState) -> None:
    # One dispatcher call before the first order, so a workflow can pick
    # its starting job. Single-job runs never invoke the dispatcher.
    if config.max_job_case > 0:
        job, exit_flag = problem.job_dispatcher(state.parameter, state.job, state.exit)
        state.job = _checked_job(job, config, "job_dispatcher")
        state.exit = exit_flag


def master_iterate(
    problem: Problem,
    config: RunConfig,
    state: MasterState,
    reduce_result: ExtendedReduceElement,
    sink: Optional[Sink],
    elapsed: float,
) -> None:
    """Master tail of one iteration: fold the global reduce into the state.

    Runs process_results of the current job, lets the dispatcher override
    its proposal, bumps the iteration counter, and emits a trace record on
    the configured cadence. ``state.exit`` going true ends the run.
    """
    family = problem.job_handlers()[state.job]
    next_job, exit_flag = family.process_results(
        reduce_result.value, reduce_result.reduce_counter, state.parameter
    )
    next_job = _checked_job(next_job, config, "process_results")
    if config.max_job_case > 0:
        next_job, exit_flag = problem.job_dispatcher(
            state.parameter, next_job, exit_flag
        )
        next_job = _checked_job(next_job, config, "job_dispatcher")
    state.iter_counter += 1
    state.last_reduce = reduce_result
    state.final_job = state.job
    if config.iter_output_enabled and state.iter_counter % config.trace_count == 0:
        fields = None
        if family.iter_output is not None:
            fields = family.iter_output(
                reduce_result.value,
                reduce_result.reduce_counter,
                state.parameter,
                elapsed,
                next_job,
                config.output_precision,
            )
        record = f"iter={state.iter_counter} job={state.job}"
        _emit(sink, record if fields is None else f"{record} {fields}")
    state.job = next_job
    state.exit = exit_flag


def _finalize(
    problem: Problem,
    config: RunConfig,
    state: MasterState,
    sink: Optional[Sink],
    elapsed: float,
) -> None:
    if state.iter_counter == 0:
        return
    family = problem.job_handlers()[state.final_job]
    if family.problem_output is not None:
        _emit(
            sink,
            family.problem_output(
                state.last_reduce.value,
                state.last_reduce.reduce_counter,
                state.parameter,
                elapsed,
                config.output_precision,
            ),
        )


def _check_iteration_budget(config: RunConfig, state: MasterState) -> None:
    if state.iter_counter >= config.max_iterations:
        raise IterationLimitExceeded(
            f"no stop after {state.iter_counter} iterations "
            f"(max_iterations={config.max_iterations})"
        )


def run_sequential(
    problem: Problem, config: RunConfig, sink: Optional[Sink] = None
) -> RunOutcome:
    """Run the whole computation in the calling thread.

    The full map list plays the role of a single worker's sublist; the
    worker-count knob in ``config`` is ignored. Every other semantic,
    including codec round-trips at the order boundary and fold order,
    matches a one-worker parallel run exactly.
    """
    config_1 = replace(config, num_workers=1)
    if not problem.init():
        raise InitFailed("problem init reported failure")
    validate(problem, config_1)
    map_list = build_map_list(problem)
    handlers = problem.job_handlers()
    ctx = ExecutionContext(
        rank=0,
        master_rank=1,
        num_workers=1,
        address_offset=0,
        sublist_length=len(map_list),
    )
    state = MasterState(parameter=problem.set_init_parameter())
    started = time.perf_counter()
    _emit(
        sink,
        problem.parameters_output(state.parameter, config.output_precision),
    )
    _predispatch(problem, config, state)
    while not state.exit:
        _check_iteration_budget(config, state)
        order = OrderMessage(
            problem.encode_parameter(state.parameter), state.job, False
        )
        mapped = worker_map(
            order,
            map_list,
            problem,
            ctx,
            parallel=config.intra_worker_parallel,
            threads=config.intra_worker_threads,
        )
        family = handlers[state.job]
        partial = worker_reduce(mapped, family.reduce_f)
        # Round-trip the partial through the reduce codec for parity with
        # the wire path, then fold it as the single-rank partial list.
        if partial.reduce_counter:
            value = family.decode_reduce(family.encode_reduce(partial.value))
        else:
            value = None
        total = master_reduce(
            [ExtendedReduceElement(value, partial.reduce_counter)], family.reduce_f
        )
        master_iterate(
            problem, config, state, total, sink, time.perf_counter() - started
        )
        ctx.iter_counter = state.iter_counter
    elapsed = time.perf_counter() - started
    _finalize(problem, config, state, sink, elapsed)
    return RunOutcome(
        final_parameter=state.parameter,
        final_reduce=state.last_reduce,
        iterations=state.iter_counter,
        elapsed_seconds=elapsed,
        final_job_case=state.final_job,
    )


def run_parallel(
    problem: Problem,
    config: RunConfig,
    transport: Transport,
    sink: Optional[Sink] = None,
) -> RunOutcome:
    """Run as one master plus ``config.num_workers`` workers over ``transport``.

    The master thread owns the parameter, the iteration loop, and every
    master-side callback; it does no mapping itself. Worker bodies run
    wherever the transport puts them (threads in-process, external
    processes over TCP). Transport errors, a failed worker, or the
    iteration budget abort the run with the corresponding exception after
    shutting the transport down.
    """
    if transport.num_workers != config.num_workers:
        raise ValueError(
            f"transport is sized for {transport.num_workers} workers, "
            f"config says {config.num_workers}"
        )
    if not problem.init():
        raise InitFailed("problem init reported failure")
    validate(problem, config)
    handlers = problem.job_handlers()
    state = MasterState(parameter=problem.set_init_parameter())
    try:
        master = transport.start(lambda ep: worker_loop(problem, ep, config))
        started = time.perf_counter()
        _emit(
            sink,
            problem.parameters_output(state.parameter, config.output_precision),
        )
        _predispatch(problem, config, state)
        while not state.exit:
            _check_iteration_budget(config, state)
            master.broadcast_order(
                OrderMessage(problem.encode_parameter(state.parameter), state.job, False)
            )
            results = master.gather_results()
            family = handlers[state.job]
            partials = [
                ExtendedReduceElement(
                    family.decode_reduce(r.value) if r.reduce_counter else None,
                    r.reduce_counter,
                )
                for r in results
            ]
            total = master_reduce(partials, family.reduce_f)
            master_iterate(
                problem, config, state, total, sink, time.perf_counter() - started
            )
        master.broadcast_order(OrderMessage(b"", state.job, True))
        elapsed = time.perf_counter() - started
        _finalize(problem, config, state, sink, elapsed)
    finally:
        transport.close()
    log.debug(
        "run finished: %d iterations, final job %d", state.iter_counter, state.final_job
    )
    return RunOutcome(
        final_parameter=state.parameter,
        final_reduce=state.last_reduce,
        iterations=state.iter_counter,
        elapsed_seconds=elapsed,
        final_job_case=state.final_job,
    )
