"""Seeded episodes, replication sweeps, regret accounting and scaling fits.

Regret is always measured against ``OPT_LP``, which upper-bounds the value of
the best dynamic policy; reported regret is therefore itself an upper bound.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import stats

from . import algorithms as alg
from .environment import KnapsackState, OutcomeStream, step
from .errors import BwKError, RejectedInputError
from .estimators import lcb_lp_value, ucb_lp_value
from .instance import InstanceDiagnostics, ProblemInstance

BENCHMARK_NOTE = "regret measured against OPT_LP (an upper bound on the optimal dynamic policy)"
B_RATIO_POINTS = 200
SANDWICH_TOL = 1e-7


@dataclass
class CoverageStats:
    """Per-episode record of how often the confidence objects held."""

    checks: int = 0
    interval_hits: int = 0
    sandwich_hits: int = 0

    @property
    def all_intervals(self) -> bool:
        return self.interval_hits == self.checks

    @property
    def all_sandwich(self) -> bool:
        return self.sandwich_hits == self.checks


@dataclass
class RunTrace:
    seed: int
    policy: str
    T: int
    tau: int
    total_reward: float
    counts: np.ndarray
    final_remaining: np.ndarray
    phase1_end: Optional[int] = None
    I_hat: frozenset = frozenset()
    J_hat: frozenset = frozenset()
    b_ratio_samples: List[tuple] = field(default_factory=list)
    steps: Optional[List[tuple]] = None
    coverage: Optional[CoverageStats] = None
    monotone: bool = False
    label: str = ""

    def summary(self) -> dict:
        """JSON-ready record holding everything the regret report needs."""
        return {
            "type": "summary",
            "seed": self.seed,
            "policy": self.policy,
            "T": self.T,
            "label": self.label,
            "monotone": self.monotone,
            "tau": self.tau,
            "total_reward": self.total_reward,
            "counts": [int(c) for c in self.counts],
            "final_remaining": [float(r) for r in self.final_remaining],
            "phase1_end": self.phase1_end,
            "I_hat": sorted(self.I_hat),
            "J_hat": sorted(self.J_hat),
            "b_ratio_samples": [[t, list(map(float, r))] for t, r in self.b_ratio_samples],
        }

    @classmethod
    def from_summary(cls, rec: dict) -> "RunTrace":
        return cls(
            seed=rec["seed"],
            policy=rec["policy"],
            T=rec["T"],
            tau=rec["tau"],
            total_reward=rec["total_reward"],
            counts=np.array(rec["counts"], dtype=np.int64),
            final_remaining=np.array(rec["final_remaining"], dtype=float),
            phase1_end=rec["phase1_end"],
            I_hat=frozenset(rec["I_hat"]),
            J_hat=frozenset(rec["J_hat"]),
            b_ratio_samples=[(t, np.array(r)) for t, r in rec["b_ratio_samples"]],
            monotone=rec.get("monotone", False),
            label=rec.get("label", ""),
        )

    def to_jsonl(self, inst: Optional[ProblemInstance] = None) -> str:
        """Header line, one line per step (if recorded), then the summary line."""
        header = {"type": "header", "policy": self.policy, "T": self.T, "seed": self.seed,
                  "benchmark": BENCHMARK_NOTE}
        if inst is not None:
            header["instance"] = inst.to_dict()
        lines = [json.dumps(header, sort_keys=True)]
        for t, arm, reward, cons, rem in self.steps or ():
            lines.append(json.dumps({"type": "step", "t": t, "arm": arm, "reward": reward,
                                     "consumption": cons, "remaining": rem}, sort_keys=True))
        lines.append(json.dumps(self.summary(), sort_keys=True))
        return "\n".join(lines) + "\n"


def _check_coverage(cov: CoverageStats, ps: alg.PolicyState, inst: ProblemInstance,
                    opt_lp: float, T: int) -> None:
    bd = ps.conf.bounds()
    ok = (np.all(bd.mu_L <= inst.mu) and np.all(inst.mu <= bd.mu_U)
          and np.all(bd.C_L <= inst.C) and np.all(inst.C <= bd.C_U))
    tol = SANDWICH_TOL * T
    sandwich = lcb_lp_value(bd, inst.b, T) <= opt_lp + tol and opt_lp <= ucb_lp_value(bd, inst.b, T) + tol
    cov.checks += 1
    cov.interval_hits += bool(ok)
    cov.sandwich_hits += bool(sandwich)


def run_episode(inst: ProblemInstance, policy_kind: str, T: int, seed: int,
                record_steps: bool = True, track_coverage: bool = False,
                monotone: Optional[bool] = None, opt_lp: Optional[float] = None,
                coverage_stride: Optional[int] = None) -> RunTrace:
    """Play one episode until the stopping time and return its trace.

    With ``track_coverage`` the confidence intervals and the LP sandwich
    ``OPT^L <= OPT_LP <= OPT^U`` are checked every ``coverage_stride`` rounds
    (default: once per sweep of the arms); ``opt_lp`` must then be given.
    """
    T = int(T)
    if T < inst.m:
        raise RejectedInputError(f"T = {T} must be at least m = {inst.m}")
    if track_coverage and opt_lp is None:
        raise RejectedInputError("coverage tracking needs opt_lp")
    ps = alg.make_policy(policy_kind, inst.m, inst.d, inst.b, T, seed, monotone)
    stream = OutcomeStream(inst, seed)
    state = KnapsackState.initial(inst, T)
    stride = max(1, math.ceil(T / B_RATIO_POINTS))
    cov_stride = coverage_stride or inst.m
    cov = CoverageStats() if track_coverage else None
    steps = [] if record_steps else None
    samples = []
    counts = np.zeros(inst.m, dtype=np.int64)

    while state.stopped is None:
        t = state.t
        if t % stride == 0:
            samples.append((t, state.remaining / (T - t)))
        if cov is not None and t > 0 and t % cov_stride == 0:
            _check_coverage(cov, ps, inst, opt_lp, T)
        try:
            arm = alg.select_arm(ps, state.remaining)
        except BwKError as exc:
            raise type(exc)(f"policy {policy_kind} failed at t = {t}, remaining = "
                            f"{state.remaining.tolist()}: {exc}") from exc
        out = stream.outcome(t, arm)
        step(state, out)
        if state.t == t:  # overdraw: round not executed
            break
        counts[arm] += 1
        alg.observe(ps, arm, out)
        if steps is not None:
            steps.append((t, arm, out.reward, out.consumption.tolist(), state.remaining.tolist()))

    return RunTrace(
        seed=int(seed),
        policy=policy_kind,
        T=T,
        tau=int(state.stopped),
        total_reward=float(state.cumulative_reward),
        counts=counts,
        final_remaining=state.remaining.copy(),
        phase1_end=ps.phase1_end,
        I_hat=frozenset(ps.I_hat),
        J_hat=frozenset(ps.J_hat),
        b_ratio_samples=samples,
        steps=steps,
        coverage=cov,
        monotone=ps.conf.monotone,
        label=inst.label,
    )


# -- aggregation --------------------------------------------------------------

def _mean_se(x: np.ndarray):
    n = x.size
    mean = float(x.mean()) if n else math.nan
    se = float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan
    return mean, se


@dataclass
class RegretReport:
    policy: str
    T: int
    reps: int
    mean_regret: float
    regret_stderr: float
    subopt_term: float
    leftover_term: float
    bound: float
    bound_stderr: float
    mean_leftover: np.ndarray
    binding: tuple
    identification_accuracy: float
    phase1_mean_length: float
    phase1_completion: float
    mean_tau: float
    stderr_defined: bool = True

    @property
    def combined_stderr(self) -> float:
        return math.hypot(self.regret_stderr, self.bound_stderr)

    @property
    def mean_leftover_binding(self) -> np.ndarray:
        return self.mean_leftover[list(self.binding)]

    def decomposition_holds(self) -> bool:
        slack = self.combined_stderr if self.stderr_defined else 0.0
        return self.mean_regret <= self.bound + 2.0 * slack + 1e-9 * self.T


def regret_report(traces: Sequence[RunTrace], diag: InstanceDiagnostics, T: int) -> RegretReport:
    """Aggregate regret and its decomposition over replicated traces."""
    if not traces:
        raise RejectedInputError("no traces to report on")
    keys = {(tr.policy, tr.T, tr.label, tr.monotone) for tr in traces}
    if len(keys) != 1 or traces[0].T != T:
        raise RejectedInputError(f"traces mix configurations: {sorted(keys, key=str)}")
    opt_lp = diag.opt_lp_per_t * T
    y = diag.y_star
    I_prime = sorted(diag.I_prime)
    regret = np.array([opt_lp - tr.total_reward for tr in traces])
    subopt = np.array([float(np.dot(tr.counts[I_prime], diag.delta_i[I_prime])) for tr in traces])
    leftover_val = np.array([float(np.dot(tr.final_remaining, y)) for tr in traces])
    bound = subopt + leftover_val
    leftovers = np.array([tr.final_remaining for tr in traces])
    mean_r, se_r = _mean_se(regret)
    mean_b, se_b = _mean_se(bound)

    policy = traces[0].policy
    if policy == "two_phase":
        hits = [tr.I_hat == diag.I_star and tr.J_hat == diag.J_prime for tr in traces]
        ident = float(np.mean(hits))
        ends = np.array([tr.tau if tr.phase1_end is None else tr.phase1_end for tr in traces], float)
        p1_len = float(ends.mean())
        p1_done = float(np.mean([tr.phase1_end is not None for tr in traces]))
    else:
        ident = p1_len = p1_done = math.nan
    return RegretReport(
        policy=policy,
        T=T,
        reps=len(traces),
        mean_regret=mean_r,
        regret_stderr=se_r,
        subopt_term=float(subopt.mean()),
        leftover_term=float(leftover_val.mean()),
        bound=mean_b,
        bound_stderr=se_b,
        mean_leftover=leftovers.mean(axis=0),
        binding=tuple(sorted(diag.J_star)),
        identification_accuracy=ident,
        phase1_mean_length=p1_len,
        phase1_completion=p1_done,
        mean_tau=float(np.mean([tr.tau for tr in traces])),
        stderr_defined=len(traces) > 1,
    )


def episode_seed(master_seed: int, T: int, rep: int) -> int:
    return int(np.random.SeedSequence([int(master_seed), int(T), int(rep)]).generate_state(1)[0])


def _episode_job(args):
    inst, policy, T, seed, monotone = args
    return run_episode(inst, policy, T, seed, record_steps=False, monotone=monotone)


def run_replications(inst: ProblemInstance, policy: str, T: int, reps: int, master_seed: int,
                     monotone: Optional[bool] = None, workers: int = 1) -> List[RunTrace]:
    """``reps`` episodes with seeds derived from ``(master_seed, T, rep)``; order is by rep."""
    jobs = [(inst, policy, T, episode_seed(master_seed, T, r), monotone) for r in range(reps)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_episode_job, jobs, chunksize=max(1, reps // (4 * workers))))
    return [_episode_job(j) for j in jobs]


@dataclass
class Fit:
    slope: float
    intercept: float
    r2: float


@dataclass
class ScalingReport:
    policy: str
    T_grid: tuple
    reports: List[RegretReport]
    log_fit: Fit
    sqrt_fit: Fit
    ratio: float
    stderr_defined: bool
    traces: Dict[int, List[RunTrace]] = field(default_factory=dict, repr=False)


def _fit(x, y) -> Fit:
    res = stats.linregress(x, y)
    return Fit(float(res.slope), float(res.intercept), float(res.rvalue ** 2))


def fit_scaling(reports: Sequence[RegretReport]) -> tuple:
    """Least-squares fits of mean regret against ``log T`` and ``sqrt T``."""
    T = np.array([r.T for r in reports], dtype=float)
    y = np.array([r.mean_regret for r in reports])
    ratio = y[-1] / y[0] if y[0] != 0 else math.inf
    return _fit(np.log(T), y), _fit(np.sqrt(T), y), float(ratio)


def sweep_and_fit(inst: ProblemInstance, policy_kind: str, T_grid: Sequence[int], reps: int,
                  master_seed: int, diag_for=None, monotone: Optional[bool] = None,
                  workers: int = 1, keep_traces: bool = False) -> ScalingReport:
    """Run ``reps`` episodes per horizon and fit the regret curve.

    ``diag_for`` maps ``T`` to :class:`InstanceDiagnostics`; by default the
    instance is diagnosed at each horizon.
    """
    from .instance import diagnostics

    grid = tuple(int(t) for t in T_grid)
    if len(grid) < 3 or list(grid) != sorted(set(grid)):
        raise RejectedInputError(f"T_grid must be strictly ascending with >= 3 points, got {grid}")
    if reps < 1:
        raise RejectedInputError("reps must be positive")
    diag_for = diag_for or (lambda T: diagnostics(inst, T))
    reports, kept = [], {}
    for T in grid:
        traces = run_replications(inst, policy_kind, T, reps, master_seed, monotone, workers)
        reports.append(regret_report(traces, diag_for(T), T))
        if keep_traces:
            kept[T] = traces
    log_fit, sqrt_fit, ratio = fit_scaling(reports)
    return ScalingReport(policy_kind, grid, reports, log_fit, sqrt_fit, ratio, reps > 1, kept)


# -- file formats -------------------------------------------------------------

def report_columns(d: int) -> List[str]:
    return (["policy", "T", "reps", "mean_regret", "stderr", "subopt_term", "leftover_term", "bound",
             "identification_accuracy", "phase1_mean_length"]
            + [f"leftover_j{j}_mean" for j in range(d)])


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "nan" if math.isnan(v) else repr(v)


def reports_to_csv(reports: Sequence[RegretReport]) -> str:
    """CSV text for a list of report cells; byte-stable for equal inputs."""
    d = len(reports[0].mean_leftover) if reports else 0
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(report_columns(d))
    for r in reports:
        w.writerow([r.policy, r.T, r.reps] + [_fmt(v) for v in (
            r.mean_regret, r.regret_stderr, r.subopt_term, r.leftover_term, r.bound,
            r.identification_accuracy, r.phase1_mean_length)] + [_fmt(v) for v in r.mean_leftover])
    return buf.getvalue()


def plot_points_csv(scaling: Sequence[ScalingReport]) -> str:
    """Regret-versus-log-T points, one row per (policy, T)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["policy", "T", "log_T", "sqrt_T", "mean_regret", "stderr"])
    for s in scaling:
        for r in s.reports:
            w.writerow([r.policy, r.T, _fmt(math.log(r.T)), _fmt(math.sqrt(r.T)),
                        _fmt(r.mean_regret), _fmt(r.regret_stderr)])
    return buf.getvalue()


def write_cell_traces(path, traces: Sequence[RunTrace], inst: ProblemInstance) -> None:
    """One JSONL file per (policy, T) cell: a header then one summary per episode."""
    tr0 = traces[0]
    header = {"type": "header", "policy": tr0.policy, "T": tr0.T, "reps": len(traces),
              "benchmark": BENCHMARK_NOTE, "instance": inst.to_dict()}
    lines = [json.dumps(header, sort_keys=True)]
    lines += [json.dumps(tr.summary(), sort_keys=True) for tr in traces]
    Path(path).write_text("\n".join(lines) + "\n")


def read_traces(path) -> tuple:
    """Return ``(header, [RunTrace])`` from a JSONL trace file."""
    header, traces = None, []
    for line in Path(path).read_text().splitlines():
        rec = json.loads(line)
        if rec["type"] == "header":
            header = rec
        elif rec["type"] == "summary":
            traces.append(RunTrace.from_summary(rec))
    if header is None:
        raise RejectedInputError(f"{path}: missing header record")
    return header, traces


__all__ = [
    "BENCHMARK_NOTE",
    "CoverageStats",
    "RunTrace",
    "run_episode",
    "RegretReport",
    "regret_report",
    "episode_seed",
    "run_replications",
    "Fit",
    "ScalingReport",
    "fit_scaling",
    "sweep_and_fit",
    "report_columns",
    "reports_to_csv",
    "plot_points_csv",
    "write_cell_traces",
    "read_traces",
]
