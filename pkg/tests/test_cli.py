import csv
import io
import logging
import re
import socket
import subprocess
import sys

import numpy as np
import pytest

from iterfarm.cli import CSV_COLUMNS, main
from iterfarm.jacobi import LinearSystem, save_linear_system


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def grab(pattern, text):
    match = re.search(pattern, text)
    assert match, f"{pattern!r} not found in:\n{text}"
    return match.group(1)


def test_run_reports_convergence(capsys):
    code, out, _ = run_cli(
        capsys, "run", "--problem", "jacobi", "--generate", "16",
        "--seed", "1", "--workers", "2",
    )
    assert code == 0
    assert "variant=jacobi n=16 workers=2 transport=inproc" in out
    assert float(grab(r"residual_inf=(\S+)", out)) < 1e-6
    assert int(grab(r"iterations=(\d+)", out)) > 0


def test_seq_transport_matches_inproc(capsys):
    args = ("run", "--generate", "12", "--seed", "3")
    code, seq_out, _ = run_cli(capsys, *args, "--transport", "seq")
    assert code == 0
    code, par_out, _ = run_cli(capsys, *args, "--transport", "inproc", "--workers", "3")
    assert code == 0
    assert grab(r"iterations=(\d+)", seq_out) == grab(r"iterations=(\d+)", par_out)
    assert grab(r"residual_inf=(\S+)", seq_out)  # report line present on both
    assert grab(r"residual_inf=(\S+)", par_out)


def test_run_intsum(capsys):
    code, out, _ = run_cli(
        capsys, "run", "--problem", "intsum", "--generate", "32",
        "--seed", "5", "--workers", "4",
    )
    assert code == 0
    assert "variant=intsum n=32" in out
    assert int(grab(r"counted=(\d+)", out)) == 32
    assert grab(r"rounds=(\d+)", out) == "1"


def test_trace_precision(capsys):
    code, out, _ = run_cli(
        capsys, "run", "--generate", "8", "--seed", "2", "--transport", "seq",
        "--trace", "--precision", "6",
    )
    assert code == 0
    iter_lines = [ln for ln in out.splitlines() if ln.startswith("iter=")]
    assert iter_lines
    for ln in iter_lines:
        assert re.fullmatch(r"iter=\d+ job=0 sqstep=\d\.\d{6}e[+-]\d+", ln), ln


def test_zero_diagonal_exit_status(capsys, tmp_path):
    path = tmp_path / "singular.txt"
    save_linear_system(
        LinearSystem(np.array([[0.0, 1.0], [1.0, 1.0]]), np.array([1.0, 1.0])), path
    )
    code, _, err = run_cli(capsys, "run", "--matrix", str(path))
    assert code == 7
    assert "ZeroDiagonal" in err
    assert "row 1" in err


def test_missing_matrix_file(capsys, tmp_path):
    code, _, err = run_cli(capsys, "run", "--matrix", str(tmp_path / "nope.txt"))
    assert code == 8
    assert "error" in err


def test_malformed_matrix_file(capsys, tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("2\n1 0\n0 1\n")
    code, _, err = run_cli(capsys, "run", "--matrix", str(path))
    assert code == 8
    assert "MatrixFormatError" in err


def test_more_workers_than_rows(capsys):
    code, _, err = run_cli(capsys, "run", "--generate", "4", "--workers", "8")
    assert code == 3
    assert "ListTooShort" in err


def test_divergent_system_exit_status(capsys, tmp_path):
    path = tmp_path / "divergent.txt"
    save_linear_system(
        LinearSystem(np.array([[1.0, 5.0], [5.0, 1.0]]), np.array([1.0, 1.0])), path
    )
    code, _, err = run_cli(capsys, "run", "--matrix", str(path), "--max-iter", "40")
    assert code == 5
    assert "IterationLimitExceeded" in err


@pytest.mark.parametrize(
    "argv",
    [
        (),  # a subcommand is required
        ("run", "--problem", "nonesuch", "--generate", "4"),
        ("run",),  # neither --matrix nor --generate
        ("run", "--matrix", "a.txt", "--generate", "4"),
        ("run", "--problem", "intsum"),  # intsum without --generate
        ("run", "--problem", "intsum", "--matrix", "a.txt"),
        ("run", "--generate", "8", "--map-delay-us", "5"),  # intsum-only flag
        ("bench", "--generate", "8", "--k-list", "0"),
        ("run", "--generate", "8", "--transport", "tcp", "--listen", "nocolon"),
    ],
)
def test_usage_errors(capsys, argv):
    code, _, _ = run_cli(capsys, *argv)
    assert code == 2


def test_bench_table_and_csv(capsys, tmp_path):
    csv_path = tmp_path / "out.csv"
    code, out, _ = run_cli(
        capsys, "bench", "--problem", "intsum", "--generate", "64", "--seed", "2",
        "--k-list", "1,2", "--csv", str(csv_path),
    )
    assert code == 0
    lines = out.splitlines()
    start = next(i for i, ln in enumerate(lines) if ln.startswith("variant,"))
    rows = list(csv.DictReader(io.StringIO("\n".join(lines[start:]))))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert [row["K"] for row in rows] == ["1", "2"]
    assert all(row["variant"] == "intsum" and row["n"] == "64" for row in rows)
    assert float(rows[0]["speedup"]) == 1.0
    assert all(float(row["elapsed_s"]) >= 0 for row in rows)
    # the file holds the same CSV that went to stdout
    assert csv_path.read_text() == "\n".join(lines[start:]) + "\n"


def test_bench_without_k1_leaves_speedup_blank(capsys):
    code, out, _ = run_cli(
        capsys, "bench", "--problem", "intsum", "--generate", "32", "--k-list", "2",
    )
    assert code == 0
    lines = out.splitlines()
    start = next(i for i, ln in enumerate(lines) if ln.startswith("variant,"))
    rows = list(csv.DictReader(io.StringIO("\n".join(lines[start:]))))
    assert rows[0]["speedup"] == ""


def _free_port() -> int:
    probe = socket.create_server(("127.0.0.1", 0))
    port = probe.getsockname()[1]
    probe.close()
    return port


def test_worker_without_master(capsys):
    code, _, err = run_cli(
        capsys, "worker", "--connect", f"127.0.0.1:{_free_port()}",
        "--problem", "jacobi", "--generate", "8", "--timeout", "3",
    )
    assert code == 6
    assert "cannot connect" in err


def test_log_level_env_var(capsys, monkeypatch):
    root = logging.getLogger()
    saved_handlers = root.handlers[:]
    saved_level = root.level
    try:
        monkeypatch.setenv("BSF_LOG", "bogus")
        code, _, err = run_cli(capsys, "run", "--generate", "4", "--transport", "seq")
        assert code == 0
        assert "BSF_LOG" in err

        monkeypatch.setenv("BSF_LOG", "debug")
        code, _, _ = run_cli(capsys, "run", "--generate", "4", "--transport", "seq")
        assert code == 0
    finally:
        root.handlers[:] = saved_handlers
        root.setLevel(saved_level)
        logging.getLogger("iterfarm").setLevel(logging.NOTSET)


def spawn_cli(*argv, **kwargs):
    return subprocess.Popen(
        [sys.executable, "-m", "iterfarm.cli", *argv],
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        text=True,
        **kwargs,
    )


def test_tcp_end_to_end_subprocesses():
    master = spawn_cli(
        "run", "--problem", "jacobi", "--generate", "24", "--seed", "6",
        "--workers", "2", "--transport", "tcp", "--listen", "127.0.0.1:0",
        "--timeout", "30",
    )
    try:
        banner = master.stderr.readline()
        address = grab(r"listening on (\S+)", banner)
        workers = [
            spawn_cli(
                "worker", "--connect", address, "--problem", "jacobi",
                "--generate", "24", "--seed", "6", "--timeout", "30",
            )
            for _ in range(2)
        ]
        out, err = master.communicate(timeout=60)
        assert master.returncode == 0, err
        for worker in workers:
            _, werr = worker.communicate(timeout=60)
            assert worker.returncode == 0, werr
    finally:
        master.kill()

    assert "transport=tcp" in out
    assert float(grab(r"residual_inf=(\S+)", out)) < 1e-6

    # same numbers as an in-process run of the same system
    probe = spawn_cli(
        "run", "--problem", "jacobi", "--generate", "24", "--seed", "6", "--workers", "2",
    )
    probe_out, _ = probe.communicate(timeout=60)
    assert probe.returncode == 0
    assert grab(r"iterations=(\d+)", out) == grab(r"iterations=(\d+)", probe_out)
