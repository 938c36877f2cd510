"""Problem instances, the LP family built from them, and instance diagnostics.

Indices are 0-based throughout: row 0 is the time resource and arm ``m - 1``
is the null arm.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List

import numpy as np

from .errors import GenerationFailure, RejectedInputError, StructuralError, ValidationError
from .lp_core import LinearProgram, LpSolution, Status, solve_lp

DISTRIBUTIONS = ("bernoulli", "deterministic")
CLASSIFY_TOL = 1e-6


@dataclass(frozen=True)
class ProblemInstance:
    """A BwK instance with the null arm and the time row already in place."""

    mu: np.ndarray
    C: np.ndarray
    b: float
    dist: str = "bernoulli"
    label: str = ""

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).reshape(-1)
        C = np.asarray(self.C, dtype=float)
        if C.ndim != 2 or C.shape[1] != mu.size:
            raise StructuralError(f"C has shape {C.shape}, expected (d, {mu.size})")
        if mu.size < 1 or C.shape[0] < 1:
            raise StructuralError("an instance needs at least the null arm and the time row")
        if not 0.0 < self.b <= 1.0:
            raise ValidationError(f"b must lie in (0, 1], got {self.b}")
        if np.any((mu < 0) | (mu > 1)) or np.any((C < 0) | (C > 1)):
            raise ValidationError("all means must lie in [0, 1]")
        if self.dist not in DISTRIBUTIONS:
            raise ValidationError(f"unknown distribution {self.dist!r}")
        if not np.allclose(C[0], self.b, atol=1e-12):
            raise ValidationError("row 0 (time) must equal b for every arm")
        if mu[-1] != 0.0 or np.any(C[1:, -1] != 0.0):
            raise ValidationError("last arm must be the null arm: zero reward, time-only consumption")
        mu.setflags(write=False)
        C.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "b", float(self.b))

    @property
    def m(self) -> int:
        return self.mu.size

    @property
    def d(self) -> int:
        return self.C.shape[0]

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "m": self.m,
            "d": self.d,
            "b": self.b,
            "mu": self.mu.tolist(),
            "C": self.C.tolist(),
            "dist": self.dist,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ProblemInstance":
        inst = cls(np.array(data["mu"], dtype=float), np.array(data["C"], dtype=float).reshape(-1, len(data["mu"])),
                   float(data["b"]), data.get("dist", "bernoulli"), data.get("label", ""))
        if "m" in data and data["m"] != inst.m or "d" in data and data["d"] != inst.d:
            raise StructuralError(f"declared (m, d) = ({data.get('m')}, {data.get('d')}) "
                                  f"disagrees with arrays ({inst.m}, {inst.d})")
        return inst

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "ProblemInstance":
        return cls.from_dict(json.loads(Path(path).read_text()))


def augment_with_null_arm(raw_mu, raw_C, b: float, dist: str = "bernoulli", label: str = "") -> ProblemInstance:
    """Add the time row and the null arm to raw arm data.

    Args:
        raw_mu: mean rewards of the factual arms, length ``m_raw``.
        raw_C: consumption means of the factual resources, shape ``(d_raw, m_raw)``.
        b: per-period budget rate shared by every resource.
    """
    raw_mu = np.asarray(raw_mu, dtype=float).reshape(-1)
    m_raw = raw_mu.size
    raw_C = np.asarray(raw_C, dtype=float)
    if raw_C.size == 0:
        raw_C = raw_C.reshape(0, m_raw)
    if raw_C.ndim != 2 or raw_C.shape[1] != m_raw:
        raise StructuralError(f"raw_C has shape {raw_C.shape}, expected (d_raw, {m_raw})")
    if np.any((raw_mu < 0) | (raw_mu > 1)) or np.any((raw_C < 0) | (raw_C > 1)):
        raise ValidationError("raw means must lie in [0, 1]")
    if not 0.0 < b <= 1.0:
        raise ValidationError(f"b must lie in (0, 1], got {b}")
    d_raw = raw_C.shape[0]
    C = np.zeros((d_raw + 1, m_raw + 1))
    C[0, :] = b
    C[1:, :m_raw] = raw_C
    mu = np.append(raw_mu, 0.0)
    return ProblemInstance(mu, C, b, dist, label)


def fixture_f1(dist: str = "bernoulli") -> ProblemInstance:
    """Two factual arms, one factual resource; both binding at the optimum."""
    return augment_with_null_arm([0.8, 0.5], [[0.8, 0.2]], 0.5, dist, "F1")


def fixture_f2(dist: str = "bernoulli") -> ProblemInstance:
    """F1 plus a third, non-binding resource row (0.1, 0.1)."""
    return augment_with_null_arm([0.8, 0.5], [[0.8, 0.2], [0.1, 0.1]], 0.5, dist, "F2")


def _check_T(T) -> None:
    if T < 1:
        raise ValidationError(f"T must be >= 1, got {T}")


def build_primal_lp(inst: ProblemInstance, T: float) -> LinearProgram:
    _check_T(T)
    return LinearProgram(inst.mu, inst.C, np.full(inst.d, T * inst.b))


def build_arm_removal_lp(inst: ProblemInstance, T: float, i: int) -> LinearProgram:
    """The primal LP with arm ``i`` forced to zero."""
    _check_T(T)
    if not 0 <= i < inst.m:
        raise RejectedInputError(f"arm index {i} out of range({inst.m})")
    return LinearProgram(inst.mu, inst.C, np.full(inst.d, T * inst.b), fixed_to_zero=frozenset([i]))


def build_binding_penalty_lp(inst: ProblemInstance, T: float, j: int) -> LinearProgram:
    """Primal LP penalizing the left-over of resource ``j``.

    Objective ``mu.x - (B - C_j.x)`` is encoded as ``(mu + C_j).x`` with a
    constant offset ``-B``.
    """
    _check_T(T)
    if not 0 <= j < inst.d:
        raise RejectedInputError(f"constraint index {j} out of range({inst.d})")
    B = T * inst.b
    return LinearProgram(inst.mu + inst.C[j], inst.C, np.full(inst.d, B), offset=-B)


def classify_sets(sol: LpSolution, T: float, tol: float = CLASSIFY_TOL):
    """Split arms into (I*, I') and constraints into (J*, J') from an optimal solution.

    Thresholds scale with ``T`` so the split is invariant to homogeneous scaling.
    """
    if sol.status is not Status.OPTIMAL:
        raise RejectedInputError(f"cannot classify a {sol.status.value} solution")
    thr = tol * T
    I_star = frozenset(int(i) for i in np.flatnonzero(sol.primal > thr))
    I_prime = frozenset(range(sol.primal.size)) - I_star
    J_star = frozenset(int(j) for j in np.flatnonzero(sol.slacks < thr))
    J_prime = frozenset(range(sol.slacks.size)) - J_star
    return I_star, I_prime, J_star, J_prime


@dataclass
class InstanceDiagnostics:
    """Problem-dependent quantities of an instance, normalized by ``T`` where noted."""

    T: float
    opt_lp_per_t: float
    x_star_per_t: np.ndarray
    y_star: np.ndarray
    I_star: frozenset
    I_prime: frozenset
    J_star: frozenset
    J_prime: frozenset
    delta_i: np.ndarray
    delta: float
    sigma: float
    chi: float
    theta: float
    nondegenerate: bool
    opt_i_per_t: np.ndarray
    opt_j_per_t: np.ndarray
    warnings: List[str] = field(default_factory=list)

    @property
    def opt_lp(self) -> float:
        return self.opt_lp_per_t * self.T

    def to_dict(self) -> dict:
        def fin(v):
            return None if v is None or not math.isfinite(v) else float(v)

        return {
            "T": self.T,
            "opt_lp_per_t": self.opt_lp_per_t,
            "x_star_per_t": self.x_star_per_t.tolist(),
            "y_star": self.y_star.tolist(),
            "I_star": sorted(self.I_star),
            "I_prime": sorted(self.I_prime),
            "J_star": sorted(self.J_star),
            "J_prime": sorted(self.J_prime),
            "delta_i": self.delta_i.tolist(),
            "delta": fin(self.delta),
            "sigma": fin(self.sigma),
            "chi": fin(self.chi),
            "theta": fin(self.theta),
            "nondegenerate": self.nondegenerate,
            "opt_i_per_t": self.opt_i_per_t.tolist(),
            "opt_j_per_t": self.opt_j_per_t.tolist(),
            "warnings": list(self.warnings),
        }


def theta_threshold(sigma: float, chi: float, delta: float, m: int, d: int, b: float) -> float:
    """Estimation threshold used by the warm-start condition of the Phase II analysis."""
    first = min(1.0, sigma ** 2) * min(chi, delta) / (12 * min(m * m, d * d))
    second = (2 + 1 / b) ** -2 * delta / 5
    return min(first, second)


def sub_optimality_gap(opt_lp: float, opt_i, opt_j, I_star, J_prime, T: float) -> float:
    """``delta``: an empty family contributes ``-inf``; both empty gives ``nan``."""
    candidates = [opt_i[i] for i in I_star] + [opt_j[j] for j in J_prime]
    if not candidates:
        return math.nan
    return (opt_lp - max(candidates)) / T


def diagnostics(inst: ProblemInstance, T: float = 1, tol: float = CLASSIFY_TOL) -> InstanceDiagnostics:
    """Solve the primal LP and its m + d variants and derive every diagnostic.

    A degenerate instance is not an error: ``nondegenerate`` is set to False
    and ``warnings`` explains why.
    """
    _check_T(T)
    warns: List[str] = []
    sol = solve_lp(build_primal_lp(inst, T))
    I_star, I_prime, J_star, J_prime = classify_sets(sol, T, tol)
    y = sol.dual + 0.0  # clears -0.0
    delta_i = inst.C.T @ y - inst.mu
    opt = sol.objective_value
    opt_i = np.array([solve_lp(build_arm_removal_lp(inst, T, i)).objective_value for i in range(inst.m)])
    opt_j = np.array([solve_lp(build_binding_penalty_lp(inst, T, j)).objective_value for j in range(inst.d)])

    delta = sub_optimality_gap(opt, opt_i, opt_j, I_star, J_prime, T)
    if math.isnan(delta):
        warns.append("delta undefined: both I* and J' are empty")
    elif not J_prime:
        warns.append("J' is empty: delta uses the arm family only")
    elif not I_star:
        warns.append("I* is empty: delta uses the constraint family only")

    if I_star and J_star:
        sub = inst.C[np.ix_(sorted(J_star), sorted(I_star))]
        sigma = float(np.linalg.svd(sub, compute_uv=False).min())
    else:
        sigma = math.nan
    positive = sol.primal[sol.primal > tol * T]
    chi = float(positive.min() / T) if positive.size else math.nan

    nondegenerate = True
    if len(I_star) != len(J_star):
        nondegenerate = False
        warns.append(f"|I*| = {len(I_star)} differs from |J*| = {len(J_star)}")
    tied = sorted(i for i in I_prime if delta_i[i] < tol)
    if tied:
        nondegenerate = False
        warns.append(f"non-basic arms {tied} have zero reduced cost (alternative optima)")
    values = np.concatenate([sol.primal, sol.slacks])
    flat = sorted(v for v in sol.basis if values[v] < tol * T)
    if flat:
        nondegenerate = False
        warns.append(f"basic variables {flat} sit at zero (primal degeneracy)")
    if math.isnan(delta) or delta <= 0:
        nondegenerate = False
    if not sigma > 0:
        nondegenerate = False

    theta = theta_threshold(sigma, chi, delta, inst.m, inst.d, inst.b) if nondegenerate else math.nan
    return InstanceDiagnostics(
        T=T,
        opt_lp_per_t=opt / T,
        x_star_per_t=sol.primal / T,
        y_star=y,
        I_star=I_star,
        I_prime=I_prime,
        J_star=J_star,
        J_prime=J_prime,
        delta_i=delta_i,
        delta=delta,
        sigma=sigma,
        chi=chi,
        theta=theta,
        nondegenerate=nondegenerate,
        opt_i_per_t=opt_i / T,
        opt_j_per_t=opt_j / T,
        warnings=warns,
    )


def generate_random_instance(m_raw: int, d_raw: int, b: float, seed: int,
                             dist: str = "bernoulli", min_delta: float = 0.02,
                             max_attempts: int = 100) -> ProblemInstance:
    """Draw means uniformly from [0.05, 0.95] until the instance is non-degenerate.

    Raises:
        GenerationFailure: after ``max_attempts`` rejections.
    """
    if m_raw < 1 or d_raw < 1:
        raise ValidationError("m_raw and d_raw must be >= 1")
    if not 0.0 < b <= 1.0:
        raise ValidationError(f"b must lie in (0, 1], got {b}")
    rng = np.random.default_rng(seed)
    last: List[str] = []
    for attempt in range(max_attempts):
        mu = rng.uniform(0.05, 0.95, size=m_raw)
        C = rng.uniform(0.05, 0.95, size=(d_raw, m_raw))
        inst = augment_with_null_arm(mu, C, b, dist, f"random-{m_raw}x{d_raw}-b{b}-s{seed}")
        diag = diagnostics(inst)
        if diag.nondegenerate and diag.delta >= min_delta:
            return inst
        last = diag.warnings or [f"delta = {diag.delta:.4g} < {min_delta}"]
    raise GenerationFailure(f"no admissible instance after {max_attempts} attempts", last)


def describe(diag: InstanceDiagnostics) -> str:
    """Human-readable table of the diagnostics."""
    def arr(v):
        return "(" + ", ".join(f"{x:.6g}" for x in v) + ")"

    def idx(s):
        return "{" + ", ".join(str(i) for i in sorted(s)) + "}"

    rows = [
        ("OPT_LP / T", f"{diag.opt_lp_per_t:.6g}"),
        ("x* / T", arr(diag.x_star_per_t)),
        ("y*", arr(diag.y_star)),
        ("I* / I'", f"{idx(diag.I_star)} / {idx(diag.I_prime)}"),
        ("J* / J'", f"{idx(diag.J_star)} / {idx(diag.J_prime)}"),
        ("reduced costs", arr(diag.delta_i)),
        ("OPT_i / T", arr(diag.opt_i_per_t)),
        ("OPT_j / T", arr(diag.opt_j_per_t)),
        ("delta", f"{diag.delta:.6g}"),
        ("sigma", f"{diag.sigma:.6g}"),
        ("chi", f"{diag.chi:.6g}"),
        ("theta", f"{diag.theta:.6g}"),
        ("non-degenerate", str(diag.nondegenerate)),
    ]
    width = max(len(k) for k, _ in rows)
    lines = [f"{k:<{width}}  {v}" for k, v in rows]
    if diag.warnings:
        lines.append("warnings:")
        lines.extend(f"  - {w}" for w in diag.warnings)
    return "\n".join(lines)
