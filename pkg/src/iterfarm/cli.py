"""Command-line front end: run one problem, bench a worker-count sweep, or serve as a TCP worker.

Subcommands:

  run      solve one problem and print a report
  bench    run the same problem for several worker counts, print a table
           and a CSV copy of it
  worker   connect to a TCP master and serve map/reduce orders

Set the BSF_LOG environment variable (debug, info, warning, error) to see
engine and transport logging on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import random
import sys
from typing import Optional

from .engine import RunConfig, run_parallel, run_sequential, worker_loop
from .errors import (
    CodecMismatch,
    FarmError,
    InitFailed,
    IterationLimitExceeded,
    ListTooShort,
    MatrixFormatError,
    MissingJobImplementation,
    NotConverged,
    TransportFailure,
    ZeroDiagonal,
)
from .intsum import IntSumProblem
from .jacobi import (
    JacobiMapProblem,
    JacobiProblem,
    generate_diagonally_dominant_system,
    load_linear_system,
)
from .problem import Problem
from .transport import InProcTransport, TcpMasterTransport, connect_worker

_STATUS_MAP = (
    (ListTooShort, 3),
    (InitFailed, 4),
    (IterationLimitExceeded, 5),
    (NotConverged, 5),
    (TransportFailure, 6),  # includes MalformedFrame
    (ZeroDiagonal, 7),
    (MatrixFormatError, 8),
    (MissingJobImplementation, 9),
    (CodecMismatch, 9),
    (FarmError, 1),
)

CSV_COLUMNS = ("variant", "n", "K", "transport", "iterations", "elapsed_s", "speedup")


def _status_for(exc: BaseException) -> int:
    for klass, code in _STATUS_MAP:
        if isinstance(exc, klass):
            return code
    return 1


def _parse_address(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise argparse.ArgumentTypeError(f"expected HOST:PORT, got {text!r}")
    return (host or "127.0.0.1", int(port))


def _parse_k_list(text: str) -> list[int]:
    try:
        ks = [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated ints, got {text!r}")
    if not ks or any(k < 1 for k in ks):
        raise argparse.ArgumentTypeError("worker counts must be positive")
    return ks


def _add_problem_args(sub: argparse.ArgumentParser) -> None:
    sub.add_argument(
        "--problem",
        choices=("jacobi", "jacobi-map", "intsum"),
        default="jacobi",
        help="which built-in problem to run",
    )
    src = sub.add_argument_group("problem input (matrix file or generated)")
    src.add_argument("--matrix", metavar="FILE", help="linear system text file")
    src.add_argument(
        "--generate",
        type=int,
        metavar="N",
        help="generate a size-N input (dominant system, or intsum list)",
    )
    src.add_argument("--seed", type=int, default=0, help="generator seed (default 0)")
    sub.add_argument(
        "--eps", type=float, default=1e-18, help="stop threshold on the squared step"
    )
    sub.add_argument(
        "--map-delay-us",
        type=int,
        default=0,
        metavar="D",
        help="per-element sleep in microseconds (intsum only; benchmark fixture)",
    )


def _add_config_args(sub: argparse.ArgumentParser) -> None:
    sub.add_argument(
        "--max-iter", type=int, default=1_000_000, help="iteration safety bound"
    )
    sub.add_argument("--trace", action="store_true", help="print per-iteration records")
    sub.add_argument(
        "--trace-count", type=int, default=1, metavar="T",
        help="emit a trace record every T iterations",
    )
    sub.add_argument(
        "--precision", type=int, default=4, help="fractional digits in float output"
    )
    sub.add_argument(
        "--intra-threads",
        type=int,
        default=None,
        metavar="T",
        help="parallelize each worker's map over T threads (0 = all cores)",
    )


def _build_problem(args: argparse.Namespace) -> tuple[Problem, int]:
    """Problem instance plus its list size, from the input flags."""
    if args.problem == "intsum":
        if args.matrix:
            raise argparse.ArgumentTypeError("--matrix does not apply to intsum")
        if args.generate is None:
            raise argparse.ArgumentTypeError("intsum needs --generate N")
        rng = random.Random(args.seed)
        values = [rng.randint(-1000, 1000) for _ in range(args.generate)]
        return IntSumProblem(values, map_delay_us=args.map_delay_us), len(values)

    if args.map_delay_us:
        raise argparse.ArgumentTypeError("--map-delay-us applies to intsum only")
    if (args.matrix is None) == (args.generate is None):
        raise argparse.ArgumentTypeError("give exactly one of --matrix or --generate")
    if args.matrix is not None:
        system = load_linear_system(args.matrix)
    else:
        system = generate_diagonally_dominant_system(args.generate, args.seed)
    klass = JacobiMapProblem if args.problem == "jacobi-map" else JacobiProblem
    return klass(system, epsilon=args.eps), system.n


def _run_config(args: argparse.Namespace, num_workers: int) -> RunConfig:
    return RunConfig(
        num_workers=num_workers,
        output_precision=args.precision,
        iter_output_enabled=args.trace,
        trace_count=args.trace_count,
        intra_worker_parallel=args.intra_threads is not None,
        intra_worker_threads=args.intra_threads or 0,
        max_iterations=args.max_iter,
    )


def _print_sink(line: str) -> None:
    print(line)


def _cmd_run(args: argparse.Namespace) -> int:
    problem, n = _build_problem(args)
    config = _run_config(args, args.workers)
    if args.transport == "seq":
        outcome = run_sequential(problem, config, sink=_print_sink)
    elif args.transport == "inproc":
        outcome = run_parallel(
            problem, config, InProcTransport(args.workers, timeout=args.timeout),
            sink=_print_sink,
        )
    else:
        transport = TcpMasterTransport(
            _parse_address(args.listen), args.workers, timeout=args.timeout
        )
        host, port = transport.address
        print(f"listening on {host}:{port}", file=sys.stderr, flush=True)
        outcome = run_parallel(problem, config, transport, sink=_print_sink)
    print(
        f"variant={getattr(problem, 'variant', args.problem)} n={n} "
        f"workers={args.workers} transport={args.transport}"
    )
    print(
        f"iterations={outcome.iterations} elapsed_s={outcome.elapsed_seconds:.6f} "
        f"final_job={outcome.final_job_case}"
    )
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    rows = []
    for k in args.k_list:
        problem, n = _build_problem(args)  # fresh, identical instance per run
        config = _run_config(args, k)
        outcome = run_parallel(problem, config, InProcTransport(k, timeout=args.timeout))
        rows.append(
            {
                "variant": getattr(problem, "variant", args.problem),
                "n": n,
                "K": k,
                "transport": "inproc",
                "iterations": outcome.iterations,
                "elapsed_s": outcome.elapsed_seconds,
            }
        )
    base = next((r["elapsed_s"] for r in rows if r["K"] == 1), None)
    for row in rows:
        row["speedup"] = (base / row["elapsed_s"]) if base else None

    header = f"{'variant':<12}{'n':>8}{'K':>4}  {'transport':<9}{'iterations':>11}{'elapsed_s':>12}{'speedup':>9}"
    print(header)
    for row in rows:
        speedup = f"{row['speedup']:.3f}" if row["speedup"] is not None else "-"
        print(
            f"{row['variant']:<12}{row['n']:>8}{row['K']:>4}  {row['transport']:<9}"
            f"{row['iterations']:>11}{row['elapsed_s']:>12.6f}{speedup:>9}"
        )

    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow(
            [
                row["variant"],
                row["n"],
                row["K"],
                row["transport"],
                row["iterations"],
                f"{row['elapsed_s']:.6f}",
                "" if row["speedup"] is None else repr(row["speedup"]),
            ]
        )
    text = buf.getvalue()
    print(text, end="")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            fh.write(text)
    return 0


def _cmd_worker(args: argparse.Namespace) -> int:
    problem, _ = _build_problem(args)
    config = RunConfig(
        intra_worker_parallel=args.intra_threads is not None,
        intra_worker_threads=args.intra_threads or 0,
    )
    endpoint = connect_worker(_parse_address(args.connect), timeout=args.timeout)
    worker_loop(problem, endpoint, config)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iterfarm",
        description="Iterative master/worker map-reduce runs and benchmarks.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="solve one problem and report")
    _add_problem_args(run)
    _add_config_args(run)
    run.add_argument("--workers", type=int, default=1, metavar="K")
    run.add_argument(
        "--transport", choices=("seq", "inproc", "tcp"), default="inproc"
    )
    run.add_argument(
        "--listen",
        default="127.0.0.1:0",
        metavar="ADDR",
        help="bind address for the TCP master (HOST:PORT, port 0 = any)",
    )
    run.add_argument("--timeout", type=float, default=60.0, help="transport timeout, seconds")
    run.set_defaults(handler=_cmd_run)

    bench = commands.add_parser("bench", help="sweep worker counts, in-process")
    _add_problem_args(bench)
    _add_config_args(bench)
    bench.add_argument(
        "--k-list",
        type=_parse_k_list,
        default=[1, 2, 4],
        metavar="A,B,C",
        help="worker counts to sweep (default 1,2,4)",
    )
    bench.add_argument("--csv", metavar="FILE", help="also write the CSV here")
    bench.add_argument("--timeout", type=float, default=60.0, help="transport timeout, seconds")
    bench.set_defaults(handler=_cmd_bench)

    worker = commands.add_parser("worker", help="serve a TCP master")
    _add_problem_args(worker)
    worker.add_argument("--connect", required=True, metavar="ADDR")
    worker.add_argument(
        "--intra-threads", type=int, default=None, metavar="T",
        help="parallelize this worker's map over T threads (0 = all cores)",
    )
    worker.add_argument("--timeout", type=float, default=60.0, help="transport timeout, seconds")
    worker.set_defaults(handler=_cmd_worker)
    return parser


def _configure_logging() -> None:
    level_name = os.environ.get("BSF_LOG", "").strip()
    if not level_name:
        return
    level = getattr(logging, level_name.upper(), None)
    if not isinstance(level, int):
        print(f"warning: BSF_LOG={level_name!r} is not a log level", file=sys.stderr)
        return
    logging.basicConfig(
        level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s"
    )
    logging.getLogger("iterfarm").setLevel(level)


def main(argv: Optional[list[str]] = None) -> int:
    _configure_logging()
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits; keep main() returning
        return int(exc.code or 0)
    try:
        return args.handler(args)
    except argparse.ArgumentTypeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 8
    except Exception as exc:  # noqa: BLE001 - boundary of the process
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return _status_for(exc)


if __name__ == "__main__":
    sys.exit(main())
