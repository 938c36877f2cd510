"""Decision policies: two-phase identify/exhaust, one-phase adaptive, and baselines.

Every policy is driven through :func:`select_arm` and :func:`observe`. Policies
never look at the true means; they see only the confidence state, the remaining
budget and their own random stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .environment import Outcome, policy_rng
from .errors import ContractViolation, RejectedInputError
from .estimators import (
    Bounds,
    ConfidenceState,
    arm_removal_ucb,
    constraint_ucb,
    lcb_lp_value,
    update,
)
from .lp_core import Status, solve_dense

POLICIES = ("two_phase", "one_phase", "static_lp", "uniform")
IDENTIFY, EXHAUST = "identify", "exhaust"

# default monotone tightening per policy
_MONOTONE_DEFAULT = {"two_phase": False, "one_phase": True, "static_lp": False, "uniform": False}

MASS_TOL = 1e-9
# relative margin on the strict elimination test; guards against LP round-off
ELIM_MARGIN = 1e-9


@dataclass
class PolicyState:
    kind: str
    conf: ConfidenceState
    b: float
    T: int
    rng: np.random.Generator
    phase: str = IDENTIFY
    I_hat: set = field(default_factory=set)
    J_hat: set = field(default_factory=set)
    round_cursor: int = 0
    phase1_end: Optional[int] = None
    plays: int = 0

    @property
    def m(self) -> int:
        return self.conf.m

    @property
    def d(self) -> int:
        return self.conf.d

    @property
    def null_arm(self) -> int:
        return self.conf.m - 1


def make_policy(kind: str, m: int, d: int, b: float, T: int, seed: int,
                monotone: Optional[bool] = None) -> PolicyState:
    if kind not in POLICIES:
        raise RejectedInputError(f"unknown policy {kind!r}; choose from {POLICIES}")
    if monotone is None:
        monotone = _MONOTONE_DEFAULT[kind]
    conf = ConfidenceState(m, d, T, monotone=monotone)
    phase = IDENTIFY if kind == "two_phase" else EXHAUST
    return PolicyState(kind, conf, float(b), int(T), policy_rng(seed), phase=phase)


# -- Phase I ------------------------------------------------------------------

def phase1_select(ps: PolicyState) -> int:
    """Next arm of the round-robin sweep."""
    if ps.phase != IDENTIFY:
        raise ContractViolation("phase1_select called after Phase I ended")
    return ps.round_cursor


def phase1_update(ps: PolicyState, b: Optional[float] = None, T: Optional[float] = None,
                  bounds: Optional[Bounds] = None) -> PolicyState:
    """Run the elimination tests of one completed sweep and maybe switch to Exhaust.

    ``bounds`` overrides the confidence state (used to feed exact means).
    """
    if ps.phase != IDENTIFY:
        raise ContractViolation("phase1_update called after Phase I ended")
    b = ps.b if b is None else b
    T = ps.T if T is None else T
    source = ps.conf if bounds is None else bounds
    lcb = lcb_lp_value(source, b, T)
    margin = ELIM_MARGIN * max(1.0, T)
    for i in range(ps.m):
        if i not in ps.I_hat and lcb > arm_removal_ucb(source, b, T, i) + margin:
            ps.I_hat.add(i)
    for j in range(ps.d):
        if j not in ps.J_hat and lcb > constraint_ucb(source, b, T, j) + margin:
            ps.J_hat.add(j)
    if len(ps.I_hat) + len(ps.J_hat) >= ps.d:
        ps.phase = EXHAUST
        ps.phase1_end = ps.plays
    return ps


# -- LP-driven sampling -------------------------------------------------------

def sampling_distribution(mu_U, C_L, remaining, allowed=None, horizon_left=None,
                          tol: float = MASS_TOL) -> np.ndarray:
    """Probability vector from ``max mu_U.x  s.t.  C_L x <= remaining, x_i = 0 off allowed``.

    If some allowed arm has positive ``mu_U`` and an all-zero ``C_L`` column
    the LP is unbounded along that arm, so play uniformly over such arms.
    Otherwise the bounded LP also carries ``1.x <= horizon_left``. A zero
    solution puts all mass on the null arm.
    """
    mu_U = np.asarray(mu_U, dtype=float)
    C_L = np.asarray(C_L, dtype=float)
    m = mu_U.size
    mask = np.ones(m, dtype=bool) if allowed is None else np.zeros(m, dtype=bool)
    if allowed is not None:
        mask[list(allowed)] = True
    remaining = np.maximum(np.asarray(remaining, dtype=float), 0.0)

    rays = mask & (mu_U > tol) & np.all(C_L <= tol, axis=0)
    p = np.zeros(m)
    if rays.any():
        p[rays] = 1.0 / rays.sum()
        return p

    cols = np.flatnonzero(mask)
    if cols.size:
        A = C_L[:, cols]
        rhs = remaining
        if horizon_left is not None:
            A = np.vstack([A, np.ones(cols.size)])
            rhs = np.append(rhs, max(float(horizon_left), 0.0))
        status, x, _, _ = solve_dense(np.ascontiguousarray(mu_U[cols]), np.ascontiguousarray(A),
                                      np.ascontiguousarray(rhs))
        if status is Status.OPTIMAL:
            x = np.where(x > tol, x, 0.0)
            total = x.sum()
            if total > tol:
                p[cols] = x / total
                return p
        elif status is Status.UNBOUNDED:
            # only reachable without the horizon row; fall back like a ray
            p[cols] = 1.0 / cols.size
            return p
    p[m - 1] = 1.0
    return p


def _sample(ps: PolicyState, p: np.ndarray) -> int:
    u = ps.rng.random()
    arm = int(np.searchsorted(np.cumsum(p), u, side="right"))
    return min(arm, p.size - 1)


def _horizon_left(ps: PolicyState, remaining) -> float:
    # the time row is deterministic, so B_0 / b periods are left
    return float(remaining[0]) / ps.b


def phase2_distribution(ps: PolicyState, remaining, bounds: Optional[Bounds] = None) -> np.ndarray:
    bd = ps.conf.bounds() if bounds is None else bounds
    return sampling_distribution(bd.mu_U, bd.C_L, remaining, ps.I_hat, _horizon_left(ps, remaining))


def phase2_select(ps: PolicyState, remaining, bounds: Optional[Bounds] = None) -> int:
    """Sample from the re-solved LP restricted to the identified arms."""
    if ps.phase != EXHAUST or ps.kind != "two_phase":
        raise ContractViolation("phase2_select requires a two_phase policy in Exhaust")
    return _sample(ps, phase2_distribution(ps, remaining, bounds))


def one_phase_distribution(ps: PolicyState, remaining, bounds: Optional[Bounds] = None) -> np.ndarray:
    bd = ps.conf.bounds() if bounds is None else bounds
    return sampling_distribution(bd.mu_U, bd.C_L, remaining, None, _horizon_left(ps, remaining))


def one_phase_select(ps: PolicyState, remaining, bounds: Optional[Bounds] = None) -> int:
    return _sample(ps, one_phase_distribution(ps, remaining, bounds))


def static_distribution(ps: PolicyState, bounds: Optional[Bounds] = None) -> np.ndarray:
    """UCB LP on the full budget ``T b``, scaled by ``T``; spare mass goes to the null arm."""
    bd = ps.conf.bounds() if bounds is None else bounds
    m = bd.mu_U.size
    rays = (bd.mu_U > MASS_TOL) & np.all(bd.C_L <= MASS_TOL, axis=0)
    if rays.any():
        p = np.zeros(m)
        p[rays] = 1.0 / rays.sum()
        return p
    A = np.vstack([bd.C_L, np.ones(m)])
    rhs = np.append(np.full(bd.C_L.shape[0], ps.T * ps.b), float(ps.T))
    status, x, _, _ = solve_dense(np.ascontiguousarray(bd.mu_U), A, rhs)
    p = np.zeros(m)
    if status is Status.OPTIMAL:
        p = np.clip(x / ps.T, 0.0, None)
        s = p.sum()
        if s > 1.0:
            p /= s
    p[m - 1] += max(0.0, 1.0 - p.sum())
    return p


def baseline_static_select(ps: PolicyState, bounds: Optional[Bounds] = None) -> int:
    return _sample(ps, static_distribution(ps, bounds))


def uniform_select(ps: PolicyState) -> int:
    return int(ps.rng.integers(ps.m))


# -- common interface ---------------------------------------------------------

def select_arm(ps: PolicyState, remaining) -> int:
    if ps.kind == "two_phase":
        if ps.phase == IDENTIFY:
            return phase1_select(ps)
        return phase2_select(ps, remaining)
    if ps.kind == "one_phase":
        return one_phase_select(ps, remaining)
    if ps.kind == "static_lp":
        return baseline_static_select(ps)
    return uniform_select(ps)


def observe(ps: PolicyState, arm: int, outcome: Outcome) -> PolicyState:
    """Record a completed round; ends a Phase-I sweep when the cursor wraps."""
    update(ps.conf, arm, outcome)
    ps.plays += 1
    if ps.kind == "two_phase" and ps.phase == IDENTIFY:
        ps.round_cursor += 1
        if ps.round_cursor == ps.m:
            ps.round_cursor = 0
            phase1_update(ps)
    return ps


def phase1_play_bound(b: float, T: float, delta: float) -> int:
    """Per-arm Phase-I play budget ``ceil((2 + 1/b)^2 * 72 log T / delta^2)``."""
    return math.ceil((2.0 + 1.0 / b) ** 2 * 72.0 * math.log(T) / delta ** 2)


__all__ = [
    "POLICIES",
    "IDENTIFY",
    "EXHAUST",
    "PolicyState",
    "make_policy",
    "phase1_select",
    "phase1_update",
    "phase2_select",
    "phase2_distribution",
    "one_phase_select",
    "one_phase_distribution",
    "baseline_static_select",
    "static_distribution",
    "uniform_select",
    "sampling_distribution",
    "select_arm",
    "observe",
    "phase1_play_bound",
]
