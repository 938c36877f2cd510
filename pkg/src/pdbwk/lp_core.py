"""Dense LP kernel: two-phase primal simplex (Bland's rule) and a vertex oracle.

All problems are normalized internally to ``max c.x  s.t.  A x <= b, x >= 0``.
Minimization and ``>=`` rows are handled by negation; variables listed in
``fixed_to_zero`` are deleted before solving and re-inflated afterwards.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import FrozenSet, Sequence, Tuple

import numba
import numpy as np

from .errors import RejectedInputError, SolverFailure, StructuralError

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-6
ORACLE_MAX_SIZE = 16

_OPTIMAL, _INFEASIBLE, _UNBOUNDED, _ITER_CAP = 0, 1, 2, 3


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


_STATUS_FROM_CODE = {
    _OPTIMAL: Status.OPTIMAL,
    _INFEASIBLE: Status.INFEASIBLE,
    _UNBOUNDED: Status.UNBOUNDED,
}


@dataclass(frozen=True)
class LinearProgram:
    """A dense LP over non-negative variables.

    ``sense`` holds one of ``"<="`` / ``">="`` per row. ``offset`` is a constant
    added to the reported objective value (it never affects the argmax).
    """

    objective: np.ndarray
    constraint_matrix: np.ndarray
    rhs: np.ndarray
    sense: Tuple[str, ...] = ()
    fixed_to_zero: FrozenSet[int] = frozenset()
    maximize: bool = True
    offset: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=float).reshape(-1)
        A = np.asarray(self.constraint_matrix, dtype=float)
        b = np.asarray(self.rhs, dtype=float).reshape(-1)
        if A.ndim != 2:
            if A.size == 0:
                A = A.reshape(b.size, c.size)
            else:
                raise StructuralError(f"constraint matrix must be 2-D, got shape {A.shape}")
        k, n = A.shape
        if c.size != n:
            raise StructuralError(f"objective has length {c.size}, matrix has {n} columns")
        if b.size != k:
            raise StructuralError(f"rhs has length {b.size}, matrix has {k} rows")
        if not np.all(np.isfinite(b)):
            raise StructuralError("rhs must be finite")
        sense = tuple(self.sense) if self.sense else ("<=",) * k
        if len(sense) != k or any(s not in ("<=", ">=") for s in sense):
            raise StructuralError(f"sense must list '<=' or '>=' for each of {k} rows")
        fixed = frozenset(int(i) for i in self.fixed_to_zero)
        if any(i < 0 or i >= n for i in fixed):
            raise StructuralError(f"fixed_to_zero {sorted(fixed)} not a subset of range({n})")
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "constraint_matrix", A)
        object.__setattr__(self, "rhs", b)
        object.__setattr__(self, "sense", sense)
        object.__setattr__(self, "fixed_to_zero", fixed)

    @property
    def n(self) -> int:
        return self.constraint_matrix.shape[1]

    @property
    def k(self) -> int:
        return self.constraint_matrix.shape[0]

    def normalized(self):
        """Return ``(c, A, b, free_columns, row_sign, obj_sign)`` in max / <= form."""
        free = np.array([i for i in range(self.n) if i not in self.fixed_to_zero], dtype=np.int64)
        row_sign = np.array([1.0 if s == "<=" else -1.0 for s in self.sense])
        obj_sign = 1.0 if self.maximize else -1.0
        A = self.constraint_matrix[:, free] * row_sign[:, None]
        return (
            np.ascontiguousarray(obj_sign * self.objective[free]),
            np.ascontiguousarray(A),
            np.ascontiguousarray(row_sign * self.rhs),
            free,
            row_sign,
            obj_sign,
        )


@dataclass(frozen=True)
class LpSolution:
    """Primal-dual solution of a :class:`LinearProgram`.

    ``dual`` follows the textbook sign convention of the stated problem, so it
    is non-negative for a max/<= or min/>= LP. ``basis`` holds basic variable
    indices where ``0..n-1`` are structural and ``n + i`` is the slack of row i.
    """

    status: Status
    primal: np.ndarray
    dual: np.ndarray
    objective_value: float
    basis: FrozenSet[int] = field(default_factory=frozenset)
    slacks: np.ndarray = field(default_factory=lambda: np.zeros(0))
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


@numba.njit(cache=True)
def _pivot(tab, obj, row, col):
    tab[row, :] /= tab[row, col]
    for i in range(tab.shape[0]):
        if i != row:
            f = tab[i, col]
            if f != 0.0:
                tab[i, :] -= f * tab[row, :]
    f = obj[col]
    if f != 0.0:
        obj[:] -= f * tab[row, :]


@numba.njit(cache=True)
def _bland_loop(tab, obj, basis, n_enter, tol, iters, max_iter):
    """Run Bland-rule pivots on (tab, obj). Returns (code, iterations)."""
    k = tab.shape[0]
    last = tab.shape[1] - 1
    while True:
        col = -1
        for j in range(n_enter):
            if obj[j] > tol:
                col = j
                break
        if col < 0:
            return _OPTIMAL, iters
        if iters >= max_iter:
            return _ITER_CAP, iters
        row = -1
        best = 0.0
        for i in range(k):
            a = tab[i, col]
            if a > tol:
                ratio = tab[i, last] / a
                if row < 0 or ratio < best - tol or (ratio <= best + tol and basis[i] < basis[row]):
                    row = i
                    best = ratio
        if row < 0:
            return _UNBOUNDED, iters
        _pivot(tab, obj, row, col)
        basis[row] = col
        iters += 1


@numba.njit(cache=True)
def _simplex(c, A, b, tol, max_iter):
    k, n = A.shape
    n_art = 0
    for i in range(k):
        if b[i] < 0.0:
            n_art += 1
    ncol = n + k + n_art
    tab = np.zeros((k, ncol + 1))
    basis = np.empty(k, dtype=np.int64)
    a = 0
    for i in range(k):
        sgn = -1.0 if b[i] < 0.0 else 1.0
        for j in range(n):
            tab[i, j] = sgn * A[i, j]
        tab[i, n + i] = sgn
        tab[i, ncol] = sgn * b[i]
        if b[i] < 0.0:
            tab[i, n + k + a] = 1.0
            basis[i] = n + k + a
            a += 1
        else:
            basis[i] = n + i

    iters = 0
    x = np.zeros(n)
    y = np.zeros(k)
    if n_art > 0:
        # phase I: maximize -sum(artificials); reduced costs of the initial basis
        obj = np.zeros(ncol + 1)
        for j in range(n + k, ncol):
            obj[j] = -1.0
        for i in range(k):
            if basis[i] >= n + k:
                obj[:] += tab[i, :]
        code, iters = _bland_loop(tab, obj, basis, ncol, tol, iters, max_iter)
        if code == _ITER_CAP:
            return code, x, y, basis, iters
        bmax = 1.0
        for i in range(k):
            bmax = max(bmax, abs(b[i]))
        if obj[ncol] > 1e-7 * bmax:
            return _INFEASIBLE, x, y, basis, iters
        for i in range(k):
            if basis[i] >= n + k:
                for j in range(n + k):
                    if abs(tab[i, j]) > tol:
                        _pivot(tab, obj, i, j)
                        basis[i] = j
                        break

    obj = np.zeros(ncol + 1)
    for j in range(n):
        obj[j] = c[j]
    for i in range(k):
        cb = c[basis[i]] if basis[i] < n else 0.0
        if cb != 0.0:
            obj[:] -= cb * tab[i, :]
    code, iters = _bland_loop(tab, obj, basis, n + k, tol, iters, max_iter)
    if code != _OPTIMAL:
        return code, x, y, basis, iters
    for i in range(k):
        if basis[i] < n:
            x[basis[i]] = tab[i, ncol]
    for i in range(k):
        y[i] = -obj[n + i]
    return _OPTIMAL, x, y, basis, iters


def solve_dense(c: np.ndarray, A: np.ndarray, b: np.ndarray, tol: float = PIVOT_TOL):
    """Solve ``max c.x s.t. A x <= b, x >= 0`` with no validation.

    Hot-path entry used by the estimators and policies. Returns
    ``(status, x, y, value)``; ``value`` is ``+inf`` when unbounded and ``nan``
    when infeasible.

    Raises:
        SolverFailure: if the iteration cap ``50 * (n + k)`` is exceeded.
    """
    k, n = A.shape
    code, x, y, _, _ = _simplex(c, A, b, tol, 50 * (n + k))
    if code == _OPTIMAL:
        return Status.OPTIMAL, x, y, float(c @ x)
    if code == _UNBOUNDED:
        return Status.UNBOUNDED, x, y, np.inf
    if code == _INFEASIBLE:
        return Status.INFEASIBLE, x, y, np.nan
    raise SolverFailure(f"simplex exceeded {50 * (n + k)} iterations (n={n}, k={k})")


def solve_lp(lp: LinearProgram, tol: float = PIVOT_TOL) -> LpSolution:
    """Solve ``lp`` to optimality with a two-phase Bland-rule simplex.

    The result is deterministic for identical input. Unbounded problems report
    ``objective_value = +inf`` (max) or ``-inf`` (min); infeasible ones report
    ``nan`` and leave the mapping to a sentinel to the caller.
    """
    if tol <= 0:
        raise RejectedInputError("tol must be positive")
    c, A, b, free, row_sign, obj_sign = lp.normalized()
    n, k = lp.n, lp.k
    max_iter = 50 * (n + k)
    code, xf, yf, basis_f, iters = _simplex(c, A, b, tol, max_iter)
    if code == _ITER_CAP:
        raise SolverFailure(f"simplex exceeded {max_iter} iterations (n={n}, k={k})")
    status = _STATUS_FROM_CODE[code]
    x = np.zeros(n)
    x[free] = xf
    if status is Status.OPTIMAL:
        y = yf * row_sign * obj_sign
        value = float(lp.objective @ x) + lp.offset
        nf = free.size
        basis = frozenset(int(free[j]) if j < nf else n + int(j - nf) for j in basis_f if j < nf + k)
    else:
        y = np.full(k, np.nan)
        basis = frozenset()
        if status is Status.UNBOUNDED:
            value = np.inf if lp.maximize else -np.inf
        else:
            value = np.nan
    slacks = lp.rhs - lp.constraint_matrix @ x
    return LpSolution(status, x, y, value, basis, slacks, int(iters))


def check_optimality(lp: LinearProgram, sol: LpSolution, tol: float = FEAS_TOL) -> dict:
    """Measure KKT residuals of an optimal solution (max / <= form).

    Returns a dict of non-negative violation magnitudes; each should be ``<= tol``.
    """
    c, A, b, free, row_sign, obj_sign = lp.normalized()
    x = sol.primal[free]
    y = sol.dual * row_sign * obj_sign
    primal_val = float(c @ x)
    reduced = A.T @ y - c
    slack = b - A @ x
    return {
        "primal_infeasibility": float(np.max(np.maximum(-slack, 0.0), initial=0.0)),
        "negative_primal": float(np.max(np.maximum(-x, 0.0), initial=0.0)),
        "dual_infeasibility": float(np.max(np.maximum(-reduced, 0.0), initial=0.0)),
        "negative_dual": float(np.max(np.maximum(-y, 0.0), initial=0.0)),
        "duality_gap": abs(primal_val - float(b @ y)) / (1.0 + abs(primal_val)),
        "complementarity": float(
            max(np.max(np.abs(x * reduced), initial=0.0), np.max(np.abs(y * slack), initial=0.0))
        ),
    }


def _best_vertex(c, A, b, tol):
    """Exhaustively search the vertices of {A x <= b, x >= 0}; max c.x."""
    k, n = A.shape
    G = np.vstack([A, -np.eye(n)])
    h = np.concatenate([b, np.zeros(n)])
    scale = 1.0 + np.max(np.abs(h), initial=0.0)
    best_x, best_val = None, -np.inf
    for active in itertools.combinations(range(k + n), n):
        M = G[list(active)]
        if n and np.linalg.matrix_rank(M) < n:
            continue
        x = np.linalg.solve(M, h[list(active)]) if n else np.zeros(0)
        if np.all(G @ x <= h + tol * scale):
            val = float(c @ x)
            if val > best_val + tol * scale:
                best_x, best_val = x, val
    return best_x, best_val


def enumerate_vertices_oracle(lp: LinearProgram, tol: float = 1e-9) -> LpSolution:
    """Brute-force reference solver for small LPs.

    Enumerates every basic solution of the primal and of the dual and keeps
    the best feasible one of each. Since both feasible regions are pointed, an
    empty vertex set means an empty region; a feasible primal with an empty
    dual is unbounded.

    Raises:
        RejectedInputError: if ``n + k`` exceeds 16.
    """
    if lp.n + lp.k > ORACLE_MAX_SIZE:
        raise RejectedInputError(f"oracle limited to n + k <= {ORACLE_MAX_SIZE}, got {lp.n + lp.k}")
    free = [i for i in range(lp.n) if i not in lp.fixed_to_zero]
    row_sign = np.array([1.0 if s == "<=" else -1.0 for s in lp.sense])
    obj_sign = 1.0 if lp.maximize else -1.0
    A = lp.constraint_matrix[:, free] * row_sign[:, None]
    b = lp.rhs * row_sign
    c = obj_sign * lp.objective[free]

    xf, _ = _best_vertex(c, A, b, tol)
    # dual: min b.y s.t. A^T y >= c, y >= 0  <=>  max -b.y s.t. -A^T y <= -c
    yv, _ = _best_vertex(-b, -A.T, -c, tol)
    n = lp.n
    if xf is None:
        return LpSolution(Status.INFEASIBLE, np.zeros(n), np.full(lp.k, np.nan), np.nan)
    if yv is None:
        value = np.inf if lp.maximize else -np.inf
        return LpSolution(Status.UNBOUNDED, np.zeros(n), np.full(lp.k, np.nan), value)
    x = np.zeros(n)
    x[free] = xf
    slacks = lp.rhs - lp.constraint_matrix @ x
    basis = frozenset([i for i in range(n) if x[i] > tol] + [n + j for j in range(lp.k) if abs(slacks[j]) > tol])
    value = float(lp.objective @ x) + lp.offset
    return LpSolution(Status.OPTIMAL, x, yv * row_sign * obj_sign, value, basis, slacks)


def primal_lp(objective: Sequence[float], matrix, rhs: Sequence[float], fixed_to_zero=()) -> LinearProgram:
    """Shorthand for ``max objective.x s.t. matrix x <= rhs, x >= 0``."""
    return LinearProgram(
        np.asarray(objective, dtype=float),
        np.asarray(matrix, dtype=float),
        np.asarray(rhs, dtype=float),
        fixed_to_zero=frozenset(fixed_to_zero),
    )


__all__ = [
    "LinearProgram",
    "LpSolution",
    "Status",
    "solve_lp",
    "solve_dense",
    "check_optimality",
    "enumerate_vertices_oracle",
    "primal_lp",
    "PIVOT_TOL",
    "FEAS_TOL",
]
