"""Command-line entry point: ``pdbwk generate | diagnose | run | sweep | report``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Optional

from . import harness
from .algorithms import POLICIES
from .errors import (
    BwKError,
    GenerationFailure,
    RejectedInputError,
    SolverFailure,
    StructuralError,
    ValidationError,
)
from .instance import (
    CLASSIFY_TOL,
    DISTRIBUTIONS,
    ProblemInstance,
    describe,
    diagnostics,
    fixture_f1,
    fixture_f2,
    generate_random_instance,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_INVALID = 3
EXIT_IO = 4
EXIT_SOLVER = 5
EXIT_GENERATION = 6

FIXTURES = {"F1": fixture_f1, "F2": fixture_f2}


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce a run or a sweep."""

    policies: List[str]
    T_grid: List[int]
    reps: int = 1
    master_seed: int = 0
    out_dir: str = "out"
    instance_path: Optional[str] = None
    fixture: Optional[str] = None
    generator: Optional[dict] = None
    dist: str = "bernoulli"
    tol: float = CLASSIFY_TOL
    monotone: Optional[bool] = None
    workers: int = 1

    def validate(self) -> "ExperimentConfig":
        sources = [s for s in (self.instance_path, self.fixture, self.generator) if s is not None]
        if len(sources) != 1:
            raise ValidationError("give exactly one of --instance, --fixture, --generate")
        if self.fixture is not None and self.fixture not in FIXTURES:
            raise ValidationError(f"unknown fixture {self.fixture!r}")
        if self.generator is not None:
            missing = {"m_raw", "d_raw", "b", "seed"} - set(self.generator)
            if missing:
                raise ValidationError(f"generator spec lacks {sorted(missing)}")
        if not self.policies:
            raise ValidationError("at least one policy is required")
        bad = [p for p in self.policies if p not in POLICIES]
        if bad:
            raise ValidationError(f"unknown policies {bad}; choose from {list(POLICIES)}")
        if not self.T_grid:
            raise ValidationError("T_grid is empty")
        if any(T < 1 for T in self.T_grid) or list(self.T_grid) != sorted(set(self.T_grid)):
            raise ValidationError(f"T_grid must be positive and strictly ascending, got {self.T_grid}")
        if self.reps < 1:
            raise ValidationError("reps must be >= 1")
        if self.dist not in DISTRIBUTIONS:
            raise ValidationError(f"unknown distribution {self.dist!r}")
        if not self.tol > 0:
            raise ValidationError("tol must be positive")
        if self.workers < 1:
            raise ValidationError("workers must be >= 1")
        return self

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls(**json.loads(text)).validate()

    def load_instance(self) -> ProblemInstance:
        if self.instance_path is not None:
            return ProblemInstance.load(self.instance_path)
        if self.fixture is not None:
            return FIXTURES[self.fixture](self.dist)
        g = self.generator
        return generate_random_instance(int(g["m_raw"]), int(g["d_raw"]), float(g["b"]),
                                        int(g["seed"]), self.dist)


def _parse_generator(text: Optional[str]) -> Optional[dict]:
    """``m_raw,d_raw,b,seed`` -> dict."""
    if text is None:
        return None
    parts = text.split(",")
    if len(parts) != 4:
        raise ValidationError(f"--generate expects m_raw,d_raw,b,seed, got {text!r}")
    try:
        return {"m_raw": int(parts[0]), "d_raw": int(parts[1]), "b": float(parts[2]), "seed": int(parts[3])}
    except ValueError as exc:
        raise ValidationError(f"--generate: {exc}") from exc


def _monotone_flag(text: str) -> Optional[bool]:
    return {"default": None, "on": True, "off": False}[text]


def _add_source(p: argparse.ArgumentParser) -> None:
    p.add_argument("--instance", help="instance JSON file")
    p.add_argument("--fixture", choices=sorted(FIXTURES))
    p.add_argument("--generate", metavar="M,D,B,SEED", help="random instance spec")
    p.add_argument("--dist", default="bernoulli", choices=DISTRIBUTIONS)


def _add_experiment(p: argparse.ArgumentParser) -> None:
    _add_source(p)
    p.add_argument("--tol", type=float, default=CLASSIFY_TOL, help="classification tolerance")
    p.add_argument("--monotone", choices=("default", "on", "off"), default="default")
    p.add_argument("--out", required=True, help="output directory")


def _config(args, policies, T_grid, reps, seed) -> ExperimentConfig:
    return ExperimentConfig(
        policies=list(policies),
        T_grid=list(T_grid),
        reps=reps,
        master_seed=seed,
        out_dir=args.out,
        instance_path=args.instance,
        fixture=args.fixture,
        generator=_parse_generator(args.generate),
        dist=args.dist,
        tol=args.tol,
        monotone=_monotone_flag(args.monotone),
        workers=getattr(args, "workers", 1),
    ).validate()


def _prepare_dir(cfg: ExperimentConfig, inst: ProblemInstance) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.to_json())
    inst.save(out / "instance.json")
    return out


def cmd_generate(args) -> int:
    if args.fixture:
        inst = FIXTURES[args.fixture](args.dist)
    elif args.generate:
        g = _parse_generator(args.generate)
        inst = generate_random_instance(g["m_raw"], g["d_raw"], g["b"], g["seed"], args.dist)
    else:
        raise ValidationError("give --fixture or --generate")
    inst.save(args.out)
    print(describe(diagnostics(inst)))
    return EXIT_OK


def cmd_diagnose(args) -> int:
    inst = ProblemInstance.load(args.instance)
    diag = diagnostics(inst, args.T, args.tol)
    print(describe(diag))
    dump = json.dumps(diag.to_dict(), indent=2, sort_keys=True) + "\n"
    if args.json:
        Path(args.json).write_text(dump)
    else:
        print(dump, end="")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _config(args, [args.policy], [args.T], 1, args.seed)
    inst = cfg.load_instance()
    out = _prepare_dir(cfg, inst)
    trace = harness.run_episode(inst, args.policy, args.T, args.seed, monotone=cfg.monotone)
    (out / "trace.jsonl").write_text(trace.to_jsonl(inst))
    diag = diagnostics(inst, args.T, cfg.tol)
    rep = harness.regret_report([trace], diag, args.T)
    (out / "report.csv").write_text(harness.reports_to_csv([rep]))
    print(f"tau = {trace.tau}, reward = {trace.total_reward:g}, "
          f"regret = {rep.mean_regret:g} ({harness.BENCHMARK_NOTE})")
    return EXIT_OK


def _cell_path(out: Path, policy: str, T: int) -> Path:
    return out / "traces" / f"{policy}_T{T}.jsonl"


def _fits_json(scaling) -> str:
    data = {s.policy: {"log_fit": asdict(s.log_fit), "sqrt_fit": asdict(s.sqrt_fit), "ratio": s.ratio,
                       "stderr_defined": s.stderr_defined} for s in scaling}
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def _write_reports(out: Path, scaling) -> None:
    reports = [r for s in scaling for r in s.reports]
    (out / "report.csv").write_text(harness.reports_to_csv(reports))
    (out / "plot_points.csv").write_text(harness.plot_points_csv(scaling))
    if all(len(s.T_grid) >= 3 for s in scaling):
        (out / "fits.json").write_text(_fits_json(scaling))


def _scaling(policy, grid, reports):
    if len(grid) >= 3:
        log_fit, sqrt_fit, ratio = harness.fit_scaling(reports)
    else:
        nan = harness.Fit(float("nan"), float("nan"), float("nan"))
        log_fit = sqrt_fit = nan
        ratio = float("nan")
    return harness.ScalingReport(policy, tuple(grid), reports, log_fit, sqrt_fit, ratio,
                                 all(r.reps > 1 for r in reports))


def cmd_sweep(args) -> int:
    grid = [int(t) for t in args.T_grid.split(",") if t.strip()] if args.T_grid.strip() else []
    cfg = _config(args, args.policies.split(","), grid, args.reps, args.master_seed)
    inst = cfg.load_instance()
    out = _prepare_dir(cfg, inst)
    (out / "traces").mkdir(exist_ok=True)
    diags = {T: diagnostics(inst, T, cfg.tol) for T in cfg.T_grid}
    scaling = []
    for policy in cfg.policies:
        reports = []
        for T in cfg.T_grid:
            traces = harness.run_replications(inst, policy, T, cfg.reps, cfg.master_seed,
                                              cfg.monotone, cfg.workers)
            harness.write_cell_traces(_cell_path(out, policy, T), traces, inst)
            reports.append(harness.regret_report(traces, diags[T], T))
        scaling.append(_scaling(policy, cfg.T_grid, reports))
    _write_reports(out, scaling)
    print(harness.reports_to_csv([r for s in scaling for r in s.reports]), end="")
    return EXIT_OK


def cmd_report(args) -> int:
    """Rebuild report artifacts of a sweep directory from its traces alone."""
    src = Path(args.dir)
    cfg = ExperimentConfig.from_json((src / "config.json").read_text())
    inst = ProblemInstance.load(src / "instance.json")
    scaling = []
    for policy in cfg.policies:
        reports = []
        for T in cfg.T_grid:
            _, traces = harness.read_traces(_cell_path(src, policy, T))
            reports.append(harness.regret_report(traces, diagnostics(inst, T, cfg.tol), T))
        scaling.append(_scaling(policy, cfg.T_grid, reports))
    dest = Path(args.out) if args.out else src
    dest.mkdir(parents=True, exist_ok=True)
    _write_reports(dest, scaling)
    print(harness.reports_to_csv([r for s in scaling for r in s.reports]), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pdbwk", description="Primal-dual bandits with knapsacks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write an instance file and print its diagnostics")
    p.add_argument("--fixture", choices=sorted(FIXTURES))
    p.add_argument("--generate", metavar="M,D,B,SEED")
    p.add_argument("--dist", default="bernoulli", choices=DISTRIBUTIONS)
    p.add_argument("--out", required=True, help="instance JSON path")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("diagnose", help="print LP diagnostics of an instance")
    p.add_argument("instance")
    p.add_argument("--T", type=int, default=1)
    p.add_argument("--tol", type=float, default=CLASSIFY_TOL)
    p.add_argument("--json", help="write the JSON dump here instead of stdout")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("run", help="run one episode and write its step trace")
    _add_experiment(p)
    p.add_argument("--policy", required=True, choices=POLICIES)
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="replicated runs over a horizon grid")
    _add_experiment(p)
    p.add_argument("--policies", default="two_phase,static_lp,uniform")
    p.add_argument("--T-grid", dest="T_grid", required=True, help="comma-separated horizons")
    p.add_argument("--reps", type=int, default=30)
    p.add_argument("--master-seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="regenerate report files from a sweep directory")
    p.add_argument("dir")
    p.add_argument("--out", help="write here instead of overwriting the sweep directory")
    p.set_defaults(func=cmd_report)
    return parser


def _exit_code(exc: BaseException) -> tuple:
    if isinstance(exc, (ValidationError, StructuralError, RejectedInputError)):
        return EXIT_INVALID, "invalid input"
    if isinstance(exc, GenerationFailure):
        return EXIT_GENERATION, "generation failed"
    if isinstance(exc, SolverFailure):
        return EXIT_SOLVER, "solver failure"
    if isinstance(exc, OSError):
        return EXIT_IO, "I/O error"
    return EXIT_ERROR, "error"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (BwKError, OSError, json.JSONDecodeError, KeyError) as exc:
        code, kind = _exit_code(exc)
        msg = f"error: {kind}: {exc}"
        if isinstance(exc, GenerationFailure) and exc.warnings:
            msg += "\n" + "\n".join(f"  - {w}" for w in exc.warnings)
        print(msg, file=sys.stderr)
        return code

if __name__ == "__main__":
    sys.exit(main())
