"""Experiment harness: ``priorlsqr run <config>`` and ``priorlsqr compare <a> <b>``.

A config is a JSON object with three sections (unknown keys are rejected)::

    {
      "problem": {"kind": "deconv1d", "n": 512, "sigma_f": 0.03, "sigma_n": 0.01,
                  "seed": 0, "phantom": {"jumps": [[0.12, 0.5], ...], "base": 0.0}},
      "solver":  {"method": "mlsqr", "tau": 0.0, "prior": "ideal",
                  "penalty": {"kind": "pm_log", "T": 0.005},
                  "stopping": {"criteria": ["S4"], "delta": 0.01, "eta": 1.1,
                               "atol": 1e-8, "btol": 1e-8, "conlim": 1e8, "max_iters": 100},
                  "inner_cap": 20, "threshold": 0.15, "max_outer": 25,
                  "epsilon": null, "spd_mode": "direct", "k_inner": 30},
      "output":  {"directory": "out", "basis_vectors": 0, "snapshots": false}
    }

Outputs per run: ``trace.csv``, ``solution.csv``, optional ``basis_###.csv``
and ``snapshot_###.csv``, and ``meta.json``. Everything except ``meta.json``
is byte-identical across reruns with the same config and seed.

Exit codes: 0 success, 2 invalid config, 3 missing file, 4 solver breakdown,
5 ``compare`` on configs with different problem sections.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import platform
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import metadata, resources
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import numpy as np
import scipy
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .diffusion import Grid, assemble_m, penalty_functional
from .krylov import Criterion, SolverBreakdown, StoppingConfig, cg_normal, krylov_basis, lsqr, mlsqr
from .outer import OuterConfig, solve_nonlinear
from .penalty import PenaltyKind, PenaltySpec
from .problems import ExperimentBundle, Phantom1D, Shape2D, error_norm, make_deblur2d, make_deconv1d
from .spdsolve import DEFAULT_K_INNER, FactorizationError, IdentitySolver, SpdMode, make_solver

__all__ = ["ExperimentConfig", "load_config", "run_experiment", "main", "EXIT_CODES"]

logger = logging.getLogger("priorlsqr")

EXIT_CODES = {"ok": 0, "config": 2, "missing": 3, "breakdown": 4, "mismatch": 5}
TRACE_COLUMNS = ("outer_k", "inner_i", "res_data", "res_damped", "s2_estimate", "anorm_est",
                 "cond_est", "penalty_R", "error_norm_if_truth_known")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class PhantomConfig(_Strict):
    jumps: list[tuple[float, float]]
    base: float = 0.0


class ShapeConfig(_Strict):
    kind: Literal["rect", "disk"]
    params: list[float]
    level: float


class Deconv1DConfig(_Strict):
    kind: Literal["deconv1d"]
    n: int = Field(512, ge=2)
    sigma_f: float = Field(0.03, gt=0)
    sigma_n: float = Field(0.01, ge=0)
    domain_length: float = Field(1.0, gt=0)
    phantom: Optional[PhantomConfig] = None
    seed: int = Field(0, ge=0)


class Deblur2DConfig(_Strict):
    kind: Literal["deblur2d"]
    nx: int = Field(64, ge=2)
    ny: int = Field(64, ge=2)
    sigma_f: float = Field(0.02, gt=0)
    sigma_n: Optional[float] = Field(None, ge=0)
    shapes: Optional[list[ShapeConfig]] = None
    seed: int = Field(0, ge=0)


class PenaltyConfig(_Strict):
    kind: PenaltyKind = PenaltyKind.PM_LOG
    T: float = Field(0.005, gt=0)


class StoppingSection(_Strict):
    criteria: list[Literal["S1", "S2", "S3", "S4"]] = ["S4"]
    delta: Optional[float] = Field(None, ge=0)
    eta: float = Field(1.1, gt=1)
    atol: float = Field(1e-8, ge=0)
    btol: float = Field(1e-8, ge=0)
    conlim: float = Field(1e8, gt=0)
    max_iters: int = Field(100, ge=1)


class SolverConfig(_Strict):
    method: Literal["lsqr", "mlsqr", "cg_normal", "lagged_diffusivity"]
    tau: float = Field(0.0, ge=0)
    penalty: PenaltyConfig = PenaltyConfig()
    # fixed prior for mlsqr / cg_normal: assembled at f_true, at f = 0, or M = I
    prior: Literal["ideal", "homogeneous", "identity"] = "ideal"
    stopping: StoppingSection = StoppingSection()
    inner_cap: int = Field(20, ge=1)
    threshold: float = Field(0.15, gt=0, lt=1)
    max_outer: int = Field(25, ge=1)
    epsilon: Optional[float] = Field(None, ge=0)
    spd_mode: SpdMode = SpdMode.DIRECT
    k_inner: int = Field(DEFAULT_K_INNER, ge=1)


class OutputConfig(_Strict):
    directory: str = "out"
    traces: bool = True
    solutions: bool = True
    basis_vectors: int = Field(0, ge=0)
    snapshots: bool = False


class ExperimentConfig(_Strict):
    problem: Annotated[Union[Deconv1DConfig, Deblur2DConfig], Field(discriminator="kind")]
    solver: SolverConfig
    output: OutputConfig = OutputConfig()

    @model_validator(mode="after")
    def _check_combination(self):
        if self.output.basis_vectors and self.solver.method == "lagged_diffusivity":
            raise ValueError("output.basis_vectors needs a single-solve method, "
                             "not lagged_diffusivity")
        if self.output.snapshots and self.solver.method != "lagged_diffusivity":
            raise ValueError("output.snapshots is only meaningful for lagged_diffusivity")
        return self


class ConfigError(Exception):
    pass


class MissingFile(Exception):
    pass


def _shipped(name: str) -> Optional[Path]:
    stem = name[:-5] if name.endswith(".json") else name
    res = resources.files("priorlsqr") / "configs" / f"{stem}.json"
    return Path(str(res)) if res.is_file() else None


def resolve_config_path(name) -> Path:
    """A filesystem path, or the name of a shipped config."""
    path = Path(name)
    if path.is_file():
        return path
    shipped = _shipped(str(name)) if path.parent == Path(".") else None
    if shipped is None:
        raise MissingFile(f"config file not found: {name}")
    return shipped


def _describe(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{loc}: {e['msg']}")
    return "; ".join(lines)


def load_config(path, seed: Optional[int] = None) -> ExperimentConfig:
    path = resolve_config_path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if seed is not None and isinstance(raw, dict) and isinstance(raw.get("problem"), dict):
        raw["problem"]["seed"] = seed
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"{path}: {_describe(exc)}") from exc


def build_problem(cfg: Union[Deconv1DConfig, Deblur2DConfig]) -> ExperimentBundle:
    try:
        if cfg.kind == "deconv1d":
            phantom = None if cfg.phantom is None else Phantom1D(
                tuple(map(tuple, cfg.phantom.jumps)), cfg.phantom.base)
            return make_deconv1d(cfg.n, cfg.sigma_f, cfg.sigma_n, phantom, cfg.seed,
                                 cfg.domain_length)
        shapes = None if cfg.shapes is None else [
            Shape2D(s.kind, tuple(s.params), s.level) for s in cfg.shapes]
        return make_deblur2d(cfg.nx, cfg.ny, cfg.sigma_f, cfg.sigma_n, shapes, cfg.seed)
    except ValueError as exc:
        raise ConfigError(f"problem: {exc}") from exc


@dataclass
class RunOutcome:
    bundle: ExperimentBundle
    rows: list
    solution: np.ndarray
    returned_k: int
    stop_reasons: list
    discrepancy_level: float
    basis: Optional[np.ndarray] = None
    snapshots: list = field(default_factory=list)
    outer_stop: Optional[str] = None

    @property
    def summary(self) -> dict:
        return summarize(self.rows, self.returned_k, self.discrepancy_level)


def summarize(rows, returned_k: int, level: float) -> dict:
    """Iterations to reach ``level`` and final error / penalty, all read off
    the trace rows of outer step ``returned_k``."""
    own = [r for r in rows if r["outer_k"] == returned_k]
    hit = next((r["inner_i"] for r in own if r["res_data"] <= level), None)
    last = own[-1] if own else None
    return {
        "iterations_to_discrepancy": hit,
        "total_inner_iterations": len(rows),
        "final_error": None if last is None else last["error_norm_if_truth_known"],
        "final_penalty": None if last is None else last["penalty_R"],
    }


def _stopping(sec: StoppingSection, delta: float) -> StoppingConfig:
    return StoppingConfig(atol=sec.atol, btol=sec.btol, conlim=sec.conlim, delta=delta,
                          eta=sec.eta, max_iters=sec.max_iters,
                          enabled=frozenset(Criterion(c) for c in sec.criteria))


def _rows(outer_k, trace, grid, spec, f_true):
    rows = []
    for i, f in enumerate(trace.iterates, start=1):
        rows.append({
            "outer_k": outer_k, "inner_i": i,
            "res_data": trace.res_data[i - 1], "res_damped": trace.res_damped[i - 1],
            "s2_estimate": trace.s2_estimate[i - 1], "anorm_est": trace.anorm_est[i - 1],
            "cond_est": trace.cond_est[i - 1],
            "penalty_R": penalty_functional(grid, f, spec),
            "error_norm_if_truth_known": error_norm(f, f_true),
        })
    return rows


def run_experiment(cfg: ExperimentConfig) -> RunOutcome:
    b = build_problem(cfg.problem)
    s = cfg.solver
    delta = b.noise_level if s.stopping.delta is None else s.stopping.delta
    level = s.stopping.eta * delta
    stop = _stopping(s.stopping, delta)
    spec = PenaltySpec(s.penalty.kind, T=s.penalty.T, tau=s.tau)
    n = b.grid.size

    if s.method == "lagged_diffusivity":
        outer = OuterConfig(spec, stop, inner_cap=s.inner_cap, rel_decrease_threshold=s.threshold,
                            max_outer=s.max_outer, spd_mode=s.spd_mode, k_inner=s.k_inner,
                            epsilon=s.epsilon, store_iterates=True)
        rep = solve_nonlinear(b.operator, b.g, b.grid, outer)
        rows = []
        for step in rep.steps:
            rows += _rows(step.k, step.inner.trace, b.grid, spec, b.f_true)
        snaps = [step.solution for step in rep.steps] if cfg.output.snapshots else []
        return RunOutcome(b, rows, rep.solution, rep.returned_k,
                          [st.inner.stop_reason.value for st in rep.steps], level,
                          snapshots=snaps, outer_stop=rep.stop_reason)

    m = None
    if s.prior == "ideal":
        m = assemble_m(b.grid, b.f_true, spec, s.epsilon)
    elif s.prior == "homogeneous":
        m = assemble_m(b.grid, np.zeros(n), spec, s.epsilon)
    msolver = None
    if s.method == "lsqr":
        res = lsqr(b.operator, b.g, s.tau, stop, store_iterates=True)
    elif s.method == "cg_normal":
        res = cg_normal(b.operator, m, s.tau, b.g, stop, store_iterates=True)
    else:
        msolver = IdentitySolver(n) if m is None else make_solver(m, s.spd_mode, s.k_inner)
        res = mlsqr(b.operator, msolver, b.g, s.tau, stop, store_iterates=True)
    basis = None
    if cfg.output.basis_vectors:
        kw = {"msolver": msolver} if s.method == "mlsqr" else (
            {"m": m} if s.method == "cg_normal" and m is not None else {})
        basis, _ = krylov_basis(b.operator, b.g, cfg.output.basis_vectors, tau=s.tau, **kw)
    rows = _rows(1, res.trace, b.grid, spec, b.f_true)
    return RunOutcome(b, rows, res.solution, 1, [res.stop_reason.value], level, basis=basis)


# --- output ----------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return format(float(v), ".17g")


def _coordinate_columns(grid: Grid):
    coords = grid.coordinates()
    if grid.ndim == 1:
        return ["x"], [coords[0]]
    x, y = np.meshgrid(*coords, indexing="ij")
    return ["x", "y"], [x.ravel(), y.ravel()]


def _write_field(path: Path, grid: Grid, values, truth=None):
    names, cols = _coordinate_columns(grid)
    header = names + ["value"] + ([] if truth is None else ["true_value"])
    data = cols + [np.asarray(values)] + ([] if truth is None else [np.asarray(truth)])
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*data):
            w.writerow([_fmt(v) for v in row])


def write_outputs(outcome: RunOutcome, cfg: ExperimentConfig, out_dir: Path,
                  wall_time: float) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    grid = outcome.bundle.grid
    if cfg.output.traces:
        with (out_dir / "trace.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for r in outcome.rows:
                w.writerow([_fmt(r[c]) for c in TRACE_COLUMNS])
    if cfg.output.solutions:
        _write_field(out_dir / "solution.csv", grid, outcome.solution, outcome.bundle.f_true)
    if outcome.basis is not None:
        for j in range(outcome.basis.shape[1]):
            _write_field(out_dir / f"basis_{j + 1:03d}.csv", grid, outcome.basis[:, j])
    for k, snap in enumerate(outcome.snapshots, start=1):
        _write_field(out_dir / f"snapshot_{k:03d}.csv", grid, snap)
    meta = {
        "config": cfg.model_dump(mode="json"),
        "versions": {
            "priorlsqr": _package_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "stop_reasons": outcome.stop_reasons,
        "outer_stop_reason": outcome.outer_stop,
        "returned_outer_step": outcome.returned_k,
        "noise_level": outcome.bundle.noise_level,
        "discrepancy_level": outcome.discrepancy_level,
        "final_error_weighted": error_norm(outcome.solution, outcome.bundle.f_true,
                                           grid.cell_volume),
        "summary": outcome.summary,
        "wall_time_s": wall_time,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    (out_dir / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")


def _package_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


# --- commands --------------------------------------------------------------

SUMMARY_COLUMNS = ("run", "method", "iterations_to_discrepancy", "total_inner_iterations",
                   "final_error", "final_penalty")


def _table(rows) -> str:
    def cell(v):
        if v is None:
            return "-"
        if isinstance(v, float):
            return f"{v:.6g}"
        return str(v)
    cells = [list(SUMMARY_COLUMNS)] + [[cell(r[c]) for c in SUMMARY_COLUMNS] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(SUMMARY_COLUMNS))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in cells)


def _execute(cfg: ExperimentConfig, out_dir: Path) -> RunOutcome:
    t0 = time.perf_counter()
    outcome = run_experiment(cfg)
    write_outputs(outcome, cfg, out_dir, time.perf_counter() - t0)
    logger.info("wrote %s (stop: %s)", out_dir, ", ".join(outcome.stop_reasons))
    return outcome


def cmd_run(args) -> int:
    cfg = load_config(args.config, args.seed)
    out_dir = Path(args.out or cfg.output.directory)
    outcome = _execute(cfg, out_dir)
    if not args.quiet:
        row = {"run": Path(args.config).stem, "method": cfg.solver.method, **outcome.summary}
        print(_table([row]))
    return EXIT_CODES["ok"]


def cmd_compare(args) -> int:
    cfg_a = load_config(args.a, args.seed)
    cfg_b = load_config(args.b, args.seed)
    pa, pb = cfg_a.problem.model_dump(), cfg_b.problem.model_dump()
    if pa != pb:
        keys = sorted(k for k in set(pa) | set(pb) if pa.get(k) != pb.get(k))
        print(f"error: problem sections differ in: {', '.join(keys)}", file=sys.stderr)
        return EXIT_CODES["mismatch"]
    base = Path(args.out or "out")
    name_a, name_b = Path(args.a).stem, Path(args.b).stem
    if name_a == name_b:
        name_a, name_b = name_a + "_a", name_b + "_b"
    rows = []
    for name, cfg in ((name_a, cfg_a), (name_b, cfg_b)):
        outcome = _execute(cfg, base / name)
        rows.append({"run": name, "method": cfg.solver.method, **outcome.summary})
    base.mkdir(parents=True, exist_ok=True)
    with (base / "compare.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in rows:
            w.writerow(["" if r[c] is None else (_fmt(r[c]) if isinstance(r[c], float) else r[c])
                        for c in SUMMARY_COLUMNS])
    if not args.quiet:
        print(_table(rows))
    return EXIT_CODES["ok"]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output directory (overrides output.directory)")
    common.add_argument("--seed", type=int, help="noise seed (overrides problem.seed)")
    common.add_argument("--quiet", action="store_true", help="suppress progress and tables")
    parser = argparse.ArgumentParser(prog="priorlsqr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", parents=[common], help="run one experiment")
    run.add_argument("config", help="JSON config path or shipped config name")
    run.set_defaults(func=cmd_run)
    cmp = sub.add_parser("compare", parents=[common], help="run two experiments side by side")
    cmp.add_argument("a")
    cmp.add_argument("b")
    cmp.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr, force=True)
    try:
        return args.func(args)
    except MissingFile as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CODES["missing"]
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CODES["config"]
    except (SolverBreakdown, FactorizationError) as exc:
        print(f"error: solver failed: {exc}", file=sys.stderr)
        return EXIT_CODES["breakdown"]


if __name__ == "__main__":
    sys.exit(main())
