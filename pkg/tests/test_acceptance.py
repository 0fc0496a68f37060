"""End-to-end acceptance checks, one test per shipping criterion.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one
``ACCEPTANCE nn ...: PASS`` line per criterion.
"""

import csv
import io
import math
import os
import random
import re
import socket
import struct
import subprocess
import sys
import time
import warnings
from contextlib import contextmanager

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iterfarm import (
    ListTooShort,
    RunConfig,
    partition_list,
    run_parallel,
    run_sequential,
)
from iterfarm.cli import main as cli_main
from iterfarm.intsum import IntSumProblem
from iterfarm.jacobi import (
    JacobiProblem,
    generate_diagonally_dominant_system,
    sequential_jacobi_oracle,
)
from iterfarm.transport import InProcTransport, frames

from _problems import RecordingJacobi, RecordingJacobiMap, ScriptedWorkflow

RTOL = 1e-9
ATOL = 1e-12  # absolute floor so near-zero coordinates are not judged relatively
EXPECTED_ITERATIONS_512_SEED42 = 9


@contextmanager
def criterion(number, label):
    try:
        yield
    except BaseException as exc:
        word = "SKIP" if isinstance(exc, pytest.skip.Exception) else "FAIL"
        print(f"ACCEPTANCE {number:02d} {label}: {word}")
        raise
    print(f"ACCEPTANCE {number:02d} {label}: PASS")


def test_criterion_01_oracle_equivalence_sweep():
    with criterion(1, "parallel runs reproduce the reference loop"):
        started = time.perf_counter()
        sizes = (8, 64, 512)
        for seed in range(100, 120):
            n = sizes[seed % 3]
            system = generate_diagonally_dominant_system(n, seed=seed)
            oracle = sequential_jacobi_oracle(system, 1e-18)
            for k in (1, 2, 4, 8):
                problem = RecordingJacobi(system, 1e-18)
                outcome = run_parallel(
                    problem, RunConfig(num_workers=k), InProcTransport(k)
                )
                assert outcome.iterations == len(oracle) - 1, (seed, k)
                for step, (got, want) in enumerate(zip(problem.records, oracle[1:])):
                    np.testing.assert_allclose(
                        got, want, rtol=RTOL, atol=ATOL,
                        err_msg=f"seed={seed} k={k} iteration={step + 1}",
                    )
        elapsed = time.perf_counter() - started
        assert elapsed < 30.0, f"sweep took {elapsed:.1f}s"


class _BitwiseSum:
    @staticmethod
    def run(values, k, rounds=1):
        problem = IntSumProblem(values, rounds=rounds)
        if k == 0:
            outcome = run_sequential(problem, RunConfig())
        else:
            outcome = run_parallel(
                problem, RunConfig(num_workers=k), InProcTransport(k)
            )
        return outcome.final_reduce.value, problem.encode_parameter(
            outcome.final_parameter
        )


@settings(max_examples=200, deadline=None)
@given(
    values=st.lists(st.integers(-(10**12), 10**12), min_size=1, max_size=120),
    k=st.integers(1, 16),
)
def test_criterion_02_integer_sum_bitwise_property(values, k):
    k = min(k, len(values))
    want = _BitwiseSum.run(values, 0)
    got = _BitwiseSum.run(values, k)
    assert got == want


def test_criterion_02_integer_sum_bitwise_all_worker_counts():
    with criterion(2, "integer sum is bit-identical for K in 1..16"):
        rng = random.Random(2024)
        values = [rng.randint(-(10**15), 10**15) for _ in range(252)]
        want = _BitwiseSum.run(values, 0, rounds=2)
        for k in range(1, 17):
            assert _BitwiseSum.run(values, k, rounds=2) == want, k
        # and one long list through the widest farm
        values = [rng.randint(-(10**9), 10**9) for _ in range(10_000)]
        assert _BitwiseSum.run(values, 16) == _BitwiseSum.run(values, 0)


def test_criterion_03_partition_laws():
    with criterion(3, "partition covers, orders, and balances"):
        for n in range(1, 65):
            for k in range(1, n + 1):
                p = partition_list(n, k)
                cursor = 0
                lengths = []
                for offset, length in p.assignments:
                    assert offset == cursor and length >= 1
                    cursor += length
                    lengths.append(length)
                assert cursor == n
                assert max(lengths) - min(lengths) <= 1
                extra = n % k
                assert all(
                    length == n // k + (1 if rank < extra else 0)
                    for rank, length in enumerate(lengths)
                )
            for k in (n + 1, n + 7):
                with pytest.raises(ListTooShort):
                    partition_list(n, k)


def test_criterion_04_frozen_convergence_512():
    with criterion(4, "512-row reference system converges on schedule"):
        system = generate_diagonally_dominant_system(512, seed=42)
        oracle = sequential_jacobi_oracle(system, 1e-18)
        assert len(oracle) - 1 == EXPECTED_ITERATIONS_512_SEED42

        for runner in ("seq", "par"):
            problem = JacobiProblem(system, 1e-18)
            if runner == "seq":
                outcome = run_sequential(problem, RunConfig())
            else:
                outcome = run_parallel(
                    problem, RunConfig(num_workers=4), InProcTransport(4)
                )
            assert outcome.iterations == EXPECTED_ITERATIONS_512_SEED42, runner
            residual = system.a @ outcome.final_parameter - system.b
            assert float(np.max(np.abs(residual))) < 1e-6, runner


def test_criterion_05_formulations_agree():
    with criterion(5, "column and row formulations agree per iteration"):
        for seed in range(200, 210):
            system = generate_diagonally_dominant_system(64, seed=seed)
            column = RecordingJacobi(system, 1e-18)
            run_parallel(column, RunConfig(num_workers=2), InProcTransport(2))
            rowwise = RecordingJacobiMap(system, 1e-18)
            run_parallel(rowwise, RunConfig(num_workers=2), InProcTransport(2))
            gap = len(column.records) - len(rowwise.records)
            assert abs(gap) <= 1, f"seed={seed}: counts differ by {gap}"
            if gap != 0:
                warnings.warn(
                    f"seed={seed}: stop threshold grazed, iteration counts "
                    f"differ by one ({len(column.records)} vs {len(rowwise.records)})",
                    stacklevel=1,
                )
            for step, (a, b) in enumerate(zip(column.records, rowwise.records)):
                np.testing.assert_allclose(
                    a, b, rtol=RTOL, atol=ATOL,
                    err_msg=f"seed={seed} iteration={step + 1}",
                )


def test_criterion_06_ignored_elements_are_not_counted():
    with criterion(6, "ignored map elements stay out of the fold counter"):
        rng = random.Random(6)
        for size in range(1, 101):
            values = [rng.randint(-99, 99) for _ in range(size)]
            problem = IntSumProblem(values, keep_index=lambda i: i % 2 == 0)
            outcome = run_sequential(problem, RunConfig())
            assert outcome.final_reduce.reduce_counter == math.ceil(size / 2), size
            assert outcome.final_reduce.value == sum(values[0::2]), size
        # same law through the parallel fold
        values = [rng.randint(-99, 99) for _ in range(100)]
        for k in (1, 3, 7):
            problem = IntSumProblem(values, keep_index=lambda i: i % 2 == 0)
            outcome = run_parallel(
                problem, RunConfig(num_workers=k), InProcTransport(k)
            )
            assert outcome.final_reduce.reduce_counter == 50, k
            assert outcome.final_reduce.value == sum(values[0::2]), k


def _workflow_checks(problem, outcome):
    assert outcome.iterations == 6
    assert outcome.final_job_case == 2
    master_jobs = [job for kind, job, *_ in problem.calls if kind == "process"]
    assert master_jobs == [0, 0, 1, 1, 2, 2]
    by_iteration = {}
    for entry in problem.calls:
        if entry[0] == "map":
            _, job, iteration = entry
            by_iteration.setdefault(iteration, set()).add(job)
    assert sorted(by_iteration) == list(range(6))
    assert [by_iteration[i] for i in range(6)] == [{0}, {0}, {1}, {1}, {2}, {2}]
    reduce_jobs = [job for kind, job, *_ in problem.calls if kind == "reduce"]
    assert set(reduce_jobs) == {0, 1, 2}


def test_criterion_07_three_job_workflow():
    with criterion(7, "dispatcher scripts a three-job chain"):
        problem = ScriptedWorkflow()
        outcome = run_sequential(problem, RunConfig(max_job_case=2))
        _workflow_checks(problem, outcome)

        problem = ScriptedWorkflow()
        outcome = run_parallel(
            problem, RunConfig(num_workers=2, max_job_case=2), InProcTransport(2)
        )
        _workflow_checks(problem, outcome)


def _spawn_cli(*argv):
    return subprocess.Popen(
        [sys.executable, "-m", "iterfarm.cli", *argv],
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        text=True,
    )


def _comparable_lines(out):
    keep = ("n=", "iter=", "residual_inf=", "iterations=")
    lines = [ln for ln in out.splitlines() if ln.startswith(keep)]
    # timing is the one legitimately nondeterministic field
    return [re.sub(r"elapsed_s=\S+ ", "", ln) for ln in lines]


def test_criterion_08_transports_are_equivalent():
    with criterion(8, "tcp and in-process runs are bit-identical"):
        problem_args = (
            "--problem", "jacobi", "--generate", "64", "--seed", "7",
            "--trace", "--precision", "17",
        )
        master = _spawn_cli(
            "run", *problem_args, "--workers", "4", "--transport", "tcp",
            "--listen", "127.0.0.1:0", "--timeout", "30",
        )
        try:
            banner = master.stderr.readline()
            address = re.search(r"listening on (\S+)", banner).group(1)
            workers = [
                _spawn_cli(
                    "worker", "--connect", address,
                    "--problem", "jacobi", "--generate", "64", "--seed", "7",
                    "--timeout", "30",
                )
                for _ in range(4)
            ]
            tcp_out, tcp_err = master.communicate(timeout=120)
            assert master.returncode == 0, tcp_err
            for worker in workers:
                _, werr = worker.communicate(timeout=120)
                assert worker.returncode == 0, werr
        finally:
            master.kill()

        local = _spawn_cli("run", *problem_args, "--workers", "4")
        local_out, local_err = local.communicate(timeout=120)
        assert local.returncode == 0, local_err

        # 17 fractional digits round-trip doubles exactly, so equal trace
        # text means bit-equal iterates
        assert _comparable_lines(tcp_out) == _comparable_lines(local_out)

        # the framing layer survives a long randomized soak
        rng = random.Random(88)
        for _ in range(1000):
            msg_type = rng.choice(
                (frames.MSG_ORDER, frames.MSG_RESULT, frames.MSG_EXIT)
            )
            payload = rng.randbytes(rng.randrange(0, 2048))
            assert frames.decode_frame(frames.encode_frame(msg_type, payload)) == (
                msg_type,
                payload,
            )
        order_bytes = struct.pack("<BB", 2, 0) + rng.randbytes(64)
        assert (
            frames.encode_order_payload(frames.decode_order_payload(order_bytes))
            == order_bytes
        )


def test_criterion_09_speedup_smoke(capsys):
    with criterion(9, "four workers beat one on delay-bound maps"):
        started = time.perf_counter()
        code = cli_main(
            [
                "bench", "--problem", "intsum", "--generate", "1000", "--seed", "3",
                "--map-delay-us", "1000", "--k-list", "1,4",
            ]
        )
        elapsed = time.perf_counter() - started
        out = capsys.readouterr().out
        assert code == 0
        lines = out.splitlines()
        start = next(i for i, ln in enumerate(lines) if ln.startswith("variant,"))
        rows = {
            row["K"]: row
            for row in csv.DictReader(io.StringIO("\n".join(lines[start:])))
        }
        speedup = float(rows["4"]["speedup"])
        cores = os.cpu_count() or 1
        if speedup < 1.6 and cores < 4:
            # the bar is stated for a >= 4-core machine; sleeping maps
            # usually overlap anyway, but don't fail a starved box
            pytest.skip(f"speedup {speedup:.2f} with only {cores} core(s)")
        assert speedup >= 1.6, f"speedup was {speedup:.2f}"
        assert elapsed < 10.0, f"bench took {elapsed:.1f}s"


def test_criterion_10_repeat_runs_are_identical():
    with criterion(10, "repeat runs emit identical bytes"):
        def one_run():
            system = generate_diagonally_dominant_system(64, seed=13)
            problem = RecordingJacobi(system, 1e-18)
            lines = []
            run_parallel(
                problem,
                RunConfig(
                    num_workers=4, iter_output_enabled=True, output_precision=17
                ),
                InProcTransport(4),
                sink=lines.append,
            )
            return lines, problem.records

        first_lines, first_records = one_run()
        second_lines, second_records = one_run()
        assert first_lines == second_lines
        assert len(first_records) == len(second_records)
        for a, b in zip(first_records, second_records):
            assert a.tobytes() == b.tobytes()
