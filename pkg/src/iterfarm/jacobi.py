"""Jacobi iteration for linear systems, as two farm problems plus an oracle.

For a system ``A x = b`` with nonzero diagonal, the iteration matrix and
offset are

    c[i][j] = -a[i][j] / a[i][i]  for j != i,   c[i][i] = 0
    d[i]    =  b[i] / a[i][i]

and the scheme is ``x <- C x + d`` starting from ``x = d``, stopping when
the squared Euclidean norm of the step falls below ``epsilon``. The
iteration converges whenever A is diagonally dominant with at least one
strictly dominant row.

Two formulations of the same scheme are provided:

* :class:`JacobiProblem` maps over matrix columns, each map producing the
  column's contribution ``x[j] * c[:, j]``, and reduces by vector
  addition. The reduce result is the full product ``C x``.
* :class:`JacobiMapProblem` maps over rows, each map producing one
  finished coordinate of the next iterate; the reduce is a disjoint merge
  of coordinate containers, so all arithmetic lives in the map phase.

Indexing is 0-based everywhere in code; diagnostics that name matrix rows
use the conventional 1-based numbering.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .context import ExecutionContext
from .errors import MatrixFormatError, NotConverged, ZeroDiagonal
from .problem import Problem, fmt_float

_F8 = np.dtype("<f8")
_COORD_COUNT = np.dtype("<u4")


@dataclass(frozen=True)
class LinearSystem:
    """A dense square system ``a @ x = b``."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"matrix must be square, got shape {a.shape}")
        if b.shape != (a.shape[0],):
            raise ValueError(
                f"right-hand side of length {b.shape} does not match n={a.shape[0]}"
            )
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.a.shape[0]


@dataclass(frozen=True)
class JacobiIterationData:
    """Precomputed iteration matrix, offset vector, and stop threshold."""

    c: np.ndarray
    d: np.ndarray
    epsilon: float


def build_iteration_data(system: LinearSystem, epsilon: float) -> JacobiIterationData:
    """Derive C and d from the system; the diagonal must be zero-free."""
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    diag = np.diag(system.a)
    zero_rows = np.flatnonzero(diag == 0.0)
    if zero_rows.size:
        raise ZeroDiagonal(int(zero_rows[0]) + 1)
    c = -system.a / diag[:, None]
    np.fill_diagonal(c, 0.0)
    d = system.b / diag
    return JacobiIterationData(c, d, float(epsilon))


def check_diagonal_dominance(system: LinearSystem) -> tuple[bool, bool]:
    """(dominant, strict_somewhere) for the convergence precondition.

    Dominant means every row satisfies ``|a[i][i]| >= sum of the other
    |a[i][j]|``; strict_somewhere additionally requires at least one row
    with a strict inequality, and is reported False when dominance
    already fails.
    """
    diag = np.abs(np.diag(system.a))
    off = np.abs(system.a).sum(axis=1) - diag
    dominant = bool(np.all(diag >= off))
    strict = bool(dominant and np.any(diag > off))
    return dominant, strict


def map_f_column(j: int, x: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Column j's contribution to ``C x``: the vector ``x[j] * c[:, j]``."""
    return x[j] * c[:, j]


def reduce_vec_add(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Elementwise vector sum; the combine step of the column formulation."""
    return u + v


def process_results_jacobi(
    s: np.ndarray, x_prev: np.ndarray, data: JacobiIterationData
) -> tuple[np.ndarray, bool]:
    """Next iterate and stop decision from the reduced sum ``s = C x_prev``."""
    x_next = s + data.d
    step = x_next - x_prev
    return x_next, bool(float(step @ step) < data.epsilon)


def map_f_coordinate(i: int, x: np.ndarray, data: JacobiIterationData) -> float:
    """Coordinate i of the next iterate: ``d[i] + c[i, :] @ x``."""
    return float(data.d[i] + data.c[i, :] @ x)


def sequential_jacobi_oracle(
    system: LinearSystem, epsilon: float, max_iterations: int = 1_000_000
) -> list[np.ndarray]:
    """Plain-loop reference run, independent of the farm machinery.

    Returns every iterate, starting with ``x(0) = d``; the last entry is
    the first iterate whose squared step is below ``epsilon``. Raises
    NotConverged when the budget runs out first.
    """
    data = build_iteration_data(system, epsilon)
    x = data.d.copy()
    iterates = [x.copy()]
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(max_iterations):
            x_next = data.c @ x + data.d
            iterates.append(x_next.copy())
            step = x_next - x
            if float(step @ step) < epsilon:
                return iterates
            x = x_next
    raise NotConverged(
        f"no convergence within {max_iterations} iterations "
        f"(is the matrix diagonally dominant?)"
    )


def generate_diagonally_dominant_system(n: int, seed: int) -> LinearSystem:
    """A random always-convergent test system, deterministic per seed.

    Off-diagonal entries are uniform in [-1, 1]; each diagonal entry is
    the sum of the absolute off-diagonal entries in its row plus 1, so
    dominance is strict in every row. The right-hand side is uniform in
    [-n, n].
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    a = rng.uniform(-1.0, 1.0, size=(n, n))
    off = np.abs(a).sum(axis=1) - np.abs(np.diag(a))
    np.fill_diagonal(a, off + 1.0)
    b = rng.uniform(-float(n), float(n), size=n)
    return LinearSystem(a, b)


# -- text format: n, then n matrix rows, then b ---------------------------


def load_linear_system(path: str | Path) -> LinearSystem:
    """Read a system from a text file.

    Line 1 holds n; lines 2..n+1 hold the n rows of A as space-separated
    reals; line n+2 holds b. Blank lines are ignored. Any dimension
    mismatch or stray token raises MatrixFormatError.
    """
    lines = [
        line.split() for line in Path(path).read_text().splitlines() if line.strip()
    ]
    if not lines:
        raise MatrixFormatError(f"{path}: empty file")
    if len(lines[0]) != 1:
        raise MatrixFormatError(f"{path}: first line must hold n alone")
    try:
        n = int(lines[0][0])
    except ValueError:
        raise MatrixFormatError(f"{path}: cannot parse n from {lines[0][0]!r}") from None
    if n < 1:
        raise MatrixFormatError(f"{path}: n must be >= 1, got {n}")
    if len(lines) != n + 2:
        raise MatrixFormatError(
            f"{path}: expected {n + 2} non-blank lines for n={n}, found {len(lines)}"
        )

    def parse_row(tokens: list[str], what: str) -> list[float]:
        if len(tokens) != n:
            raise MatrixFormatError(
                f"{path}: {what} has {len(tokens)} entries, expected {n}"
            )
        try:
            return [float(tok) for tok in tokens]
        except ValueError as exc:
            raise MatrixFormatError(f"{path}: {what}: {exc}") from None

    rows = [parse_row(lines[1 + i], f"matrix row {i + 1}") for i in range(n)]
    b = parse_row(lines[n + 1], "right-hand side")
    return LinearSystem(np.array(rows), np.array(b))


def save_linear_system(system: LinearSystem, path: str | Path) -> None:
    """Write a system in the text format that load_linear_system reads."""
    out = [str(system.n)]
    for row in system.a:
        out.append(" ".join(repr(float(v)) for v in row))
    out.append(" ".join(repr(float(v)) for v in system.b))
    Path(path).write_text("\n".join(out) + "\n")


# -- farm problems ---------------------------------------------------------


def _encode_vector(x: np.ndarray) -> bytes:
    return np.asarray(x, dtype=_F8).tobytes()


def _decode_vector(data: bytes) -> np.ndarray:
    return np.frombuffer(data, dtype=_F8).copy()


class JacobiProblem(Problem):
    """Column formulation: map over columns of C, reduce by vector addition.

    The map list is the column indices 0..n-1. The parameter is the
    current iterate as a float64 vector.
    """

    variant = "jacobi"

    def __init__(self, system: LinearSystem, epsilon: float = 1e-18):
        self.system = system
        self.data = build_iteration_data(system, epsilon)
        self._last_sq_step: float | None = None

    def init(self) -> bool:
        return True

    def set_list_size(self) -> int:
        return self.system.n

    def set_map_list_elem(self, i: int) -> int:
        return i

    def set_init_parameter(self) -> np.ndarray:
        return self.data.d.copy()

    def encode_parameter(self, parameter: np.ndarray) -> bytes:
        return _encode_vector(parameter)

    def decode_parameter(self, data: bytes) -> np.ndarray:
        return _decode_vector(data)

    def map_f(self, elem: int, ctx: ExecutionContext) -> tuple[np.ndarray, bool]:
        return map_f_column(elem, ctx.parameter, self.data.c), True

    def reduce_f(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return reduce_vec_add(x, y)

    def process_results(
        self, reduce_result: np.ndarray | None, reduce_counter: int, parameter: np.ndarray
    ) -> tuple[int, bool]:
        if reduce_counter == 0:
            self._last_sq_step = float("nan")
            return 0, True  # nothing was mapped; stop rather than loop forever
        x_next, exit_flag = process_results_jacobi(reduce_result, parameter, self.data)
        step = x_next - parameter
        self._last_sq_step = float(step @ step)
        parameter[:] = x_next
        return 0, exit_flag

    def encode_reduce(self, value: np.ndarray) -> bytes:
        return _encode_vector(value)

    def decode_reduce(self, data: bytes) -> np.ndarray:
        return _decode_vector(data)

    def iter_output(self, reduce_result, reduce_counter, parameter, elapsed, next_job, precision):
        return f"sqstep={fmt_float(self._last_sq_step, precision)}"

    def problem_output(self, reduce_result, reduce_counter, parameter, elapsed, precision):
        residual = self.system.a @ parameter - self.system.b
        return f"residual_inf={fmt_float(float(np.max(np.abs(residual))), precision)}"

    def parameters_output(self, parameter, precision):
        return f"n={self.system.n} eps={fmt_float(self.data.epsilon, precision)}"


class JacobiMapProblem(JacobiProblem):
    """Row formulation: each map call finishes one coordinate of the iterate.

    The map list is the row indices. A reduce element is a sparse
    container {global row index: coordinate value}; the fold merges
    disjoint containers, and placement comes from the context's
    address_offset and number_in_sublist rather than from arithmetic on
    the payload.
    """

    variant = "jacobi-map"

    def map_f(self, elem: int, ctx: ExecutionContext) -> tuple[dict[int, float], bool]:
        i = ctx.address_offset + ctx.number_in_sublist
        assert i == elem, "map list order must mirror global row numbering"
        return {i: map_f_coordinate(elem, ctx.parameter, self.data)}, True

    def reduce_f(self, x: dict[int, float], y: dict[int, float]) -> dict[int, float]:
        return {**x, **y}

    def process_results(
        self,
        reduce_result: dict[int, float] | None,
        reduce_counter: int,
        parameter: np.ndarray,
    ) -> tuple[int, bool]:
        if reduce_counter == 0:
            self._last_sq_step = float("nan")
            return 0, True
        n = self.system.n
        x_next = np.fromiter(
            (reduce_result[i] for i in range(n)), dtype=_F8, count=n
        )
        step = x_next - parameter
        sq = float(step @ step)
        self._last_sq_step = sq
        parameter[:] = x_next
        return 0, bool(sq < self.data.epsilon)

    def encode_reduce(self, value: dict[int, float]) -> bytes:
        idx = np.fromiter(sorted(value), dtype=_COORD_COUNT, count=len(value))
        vals = np.fromiter(
            (value[int(i)] for i in idx), dtype=_F8, count=len(value)
        )
        return (
            np.asarray(len(value), dtype=_COORD_COUNT).tobytes()
            + idx.tobytes()
            + vals.tobytes()
        )

    def decode_reduce(self, data: bytes) -> dict[int, float]:
        count = int(np.frombuffer(data, dtype=_COORD_COUNT, count=1)[0])
        idx = np.frombuffer(data, dtype=_COORD_COUNT, count=count, offset=4)
        vals = np.frombuffer(data, dtype=_F8, count=count, offset=4 + 4 * count)
        return {int(i): float(v) for i, v in zip(idx, vals)}
