"""iterfarm: a master/worker farm skeleton for iterative map/reduce algorithms.

The engine repeats a fixed schedule until a problem-defined stop
condition holds: broadcast the current parameter, map a fixed list across
K workers, fold the mapped values, update the parameter from the fold.
Problems plug in by subclassing :class:`Problem`; transports decide where
the workers live (threads in-process, or separate processes over TCP).
Fold order is pinned by list order and worker rank, so runs with a fixed
worker count are bit-reproducible.

A quick taste, summing a list twice on four workers::

    from iterfarm import InProcTransport, RunConfig, run_parallel
    from iterfarm.intsum import IntSumProblem

    problem = IntSumProblem(range(100), rounds=2)
    outcome = run_parallel(problem, RunConfig(num_workers=4), InProcTransport(4))
    assert outcome.final_parameter.total == sum(range(100))
"""

from .context import ExecutionContext
from .engine import (
    MasterState,
    RunConfig,
    RunOutcome,
    master_iterate,
    run_parallel,
    run_sequential,
    worker_loop,
    worker_map,
)
from .errors import (
    CodecMismatch,
    FarmError,
    InitFailed,
    IterationLimitExceeded,
    ListTooShort,
    MalformedFrame,
    MatrixFormatError,
    MissingJobImplementation,
    NotConverged,
    TransportFailure,
    ZeroDiagonal,
)
from .folding import (
    ExtendedReduceElement,
    master_reduce,
    process_extended_reduce_list,
    worker_reduce,
)
from .partition import Partition, partition_list
from .problem import (
    JobHandlers,
    Problem,
    build_map_list,
    build_map_sublist,
    fmt_float,
    validate,
)
from .transport import (
    InProcTransport,
    OrderMessage,
    ResultMessage,
    TcpMasterTransport,
    connect_worker,
)

__version__ = "0.1.0"

__all__ = [
    "CodecMismatch",
    "ExecutionContext",
    "ExtendedReduceElement",
    "FarmError",
    "InProcTransport",
    "InitFailed",
    "IterationLimitExceeded",
    "JobHandlers",
    "ListTooShort",
    "MalformedFrame",
    "MasterState",
    "MatrixFormatError",
    "MissingJobImplementation",
    "NotConverged",
    "OrderMessage",
    "Partition",
    "Problem",
    "ResultMessage",
    "RunConfig",
    "RunOutcome",
    "TcpMasterTransport",
    "TransportFailure",
    "ZeroDiagonal",
    "build_map_list",
    "build_map_sublist",
    "connect_worker",
    "fmt_float",
    "master_iterate",
    "master_reduce",
    "partition_list",
    "process_extended_reduce_list",
    "run_parallel",
    "run_sequential",
    "validate",
    "worker_loop",
    "worker_map",
    "worker_reduce",
    "__version__",
]
