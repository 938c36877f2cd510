"""Empirical means, projected confidence intervals, and the confidence-bound LPs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .environment import Outcome
from .errors import RejectedInputError
from .lp_core import Status, solve_dense


class Bounds(NamedTuple):
    mu_L: np.ndarray
    mu_U: np.ndarray
    C_L: np.ndarray
    C_U: np.ndarray

    @classmethod
    def exact(cls, mu, C) -> "Bounds":
        """Zero-width intervals at the given means (the infinite-sample limit)."""
        mu = np.asarray(mu, dtype=float)
        C = np.asarray(C, dtype=float)
        return cls(mu, mu, C, C)


@dataclass
class ConfidenceState:
    """Per-arm counts, running means and the current intervals.

    Intervals are refreshed for the played arm on every :func:`update`; with
    ``monotone`` on, each refresh is intersected with the previous interval so
    upper bounds never rise and lower bounds never fall.
    """

    m: int
    d: int
    T: int
    monotone: bool = False
    n: np.ndarray = field(init=False)
    mean_reward: np.ndarray = field(init=False)
    mean_consumption: np.ndarray = field(init=False)
    mu_L: np.ndarray = field(init=False)
    mu_U: np.ndarray = field(init=False)
    C_L: np.ndarray = field(init=False)
    C_U: np.ndarray = field(init=False)

    def __post_init__(self):
        self.n = np.zeros(self.m, dtype=np.int64)
        self.mean_reward = np.zeros(self.m)
        self.mean_consumption = np.zeros((self.d, self.m))
        self.mu_L = np.zeros(self.m)
        self.mu_U = np.ones(self.m)
        self.C_L = np.zeros((self.d, self.m))
        self.C_U = np.ones((self.d, self.m))
        self._log_T = math.log(self.T)

    def radius(self, arm: int) -> float:
        n = self.n[arm]
        return math.inf if n == 0 else math.sqrt(2.0 * self._log_T / n)

    def bounds(self) -> Bounds:
        return Bounds(self.mu_L, self.mu_U, self.C_L, self.C_U)


def update(conf: ConfidenceState, arm: int, outcome: Outcome) -> ConfidenceState:
    """Fold one observation of ``arm`` into ``conf`` (in place) and return it."""
    if not 0 <= arm < conf.m:
        raise RejectedInputError(f"arm {arm} out of range({conf.m})")
    conf.n[arm] += 1
    n = conf.n[arm]
    conf.mean_reward[arm] += (outcome.reward - conf.mean_reward[arm]) / n
    col = conf.mean_consumption[:, arm]
    col += (outcome.consumption - col) / n
    r = math.sqrt(2.0 * conf._log_T / n)
    mr = conf.mean_reward[arm]
    lo, hi = min(max(mr - r, 0.0), 1.0), min(max(mr + r, 0.0), 1.0)
    c_lo = np.clip(col - r, 0.0, 1.0)
    c_hi = np.clip(col + r, 0.0, 1.0)
    if conf.monotone:
        lo, hi = max(lo, conf.mu_L[arm]), min(hi, conf.mu_U[arm])
        if lo > hi:
            lo = hi = 0.5 * (lo + hi)
        c_lo = np.maximum(c_lo, conf.C_L[:, arm])
        c_hi = np.minimum(c_hi, conf.C_U[:, arm])
        crossed = c_lo > c_hi
        if crossed.any():
            mid = 0.5 * (c_lo + c_hi)
            c_lo = np.where(crossed, mid, c_lo)
            c_hi = np.where(crossed, mid, c_hi)
    conf.mu_L[arm], conf.mu_U[arm] = lo, hi
    conf.C_L[:, arm] = c_lo
    conf.C_U[:, arm] = c_hi
    return conf


def bounds(conf: ConfidenceState) -> Bounds:
    """Current ``(mu_L, mu_U, C_L, C_U)``; unplayed arms carry ``(0, 1)``."""
    return conf.bounds()


def _as_bounds(source) -> Bounds:
    return source if isinstance(source, Bounds) else source.bounds()


def _value(c, A, rhs) -> float:
    status, _, _, value = solve_dense(np.ascontiguousarray(c), np.ascontiguousarray(A), rhs)
    return value if status is Status.OPTIMAL else math.inf


def lcb_lp_value(source, b: float, T: float) -> float:
    """max mu_L.x  s.t.  C_U x <= T b 1."""
    bd = _as_bounds(source)
    return _value(bd.mu_L, bd.C_U, np.full(bd.C_U.shape[0], T * b))


def ucb_lp_value(source, b: float, T: float) -> float:
    """max mu_U.x  s.t.  C_L x <= T b 1; ``+inf`` when unbounded."""
    bd = _as_bounds(source)
    return _value(bd.mu_U, bd.C_L, np.full(bd.C_L.shape[0], T * b))


def arm_removal_ucb(source, b: float, T: float, i: int) -> float:
    """Upper confidence value of the LP with arm ``i`` removed; ``+inf`` when unbounded."""
    bd = _as_bounds(source)
    m = bd.mu_U.size
    if not 0 <= i < m:
        raise RejectedInputError(f"arm {i} out of range({m})")
    keep = [k for k in range(m) if k != i]
    return _value(bd.mu_U[keep], bd.C_L[:, keep], np.full(bd.C_L.shape[0], T * b))


def constraint_ucb(source, b: float, T: float, j: int) -> float:
    """min B.y - B  s.t.  C_L^T y >= mu_U + C_U[j], y >= 0; ``+inf`` when infeasible.

    Solved in max form: ``-max(-B.y)`` with rows ``-C_L^T y <= -(mu_U + C_U[j])``.
    """
    bd = _as_bounds(source)
    d = bd.C_L.shape[0]
    if not 0 <= j < d:
        raise RejectedInputError(f"constraint {j} out of range({d})")
    B = T * b
    status, _, _, value = solve_dense(
        np.full(d, -B),
        np.ascontiguousarray(-bd.C_L.T),
        np.ascontiguousarray(-(bd.mu_U + bd.C_U[j])),
    )
    if status is Status.INFEASIBLE:
        return math.inf
    if status is Status.UNBOUNDED:
        # min of a non-negative objective over y >= 0 cannot be unbounded below
        raise AssertionError("dual-form confidence LP reported unbounded")
    return -value - B


def opt_values(source, b: float, T: float, arms=None, constraints=None) -> dict:
    """Convenience bundle of every confidence value used by one elimination sweep."""
    m = _as_bounds(source).mu_U.size
    d = _as_bounds(source).C_L.shape[0]
    arms = range(m) if arms is None else arms
    constraints = range(d) if constraints is None else constraints
    return {
        "lcb": lcb_lp_value(source, b, T),
        "arm": {i: arm_removal_ucb(source, b, T, i) for i in arms},
        "constraint": {j: constraint_ucb(source, b, T, j) for j in constraints},
    }


__all__ = [
    "Bounds",
    "ConfidenceState",
    "update",
    "bounds",
    "lcb_lp_value",
    "ucb_lp_value",
    "arm_removal_ucb",
    "constraint_ucb",
    "opt_values",
]

