"""Command-line entry point: ``bresse <experiment> --config run.ini``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure (including
a verification check that does not hold).
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.linalg import LinAlgError, cholesky_banded

from . import lab
from .config import EXPERIMENTS, ConfigError, RunConfig, emit_config, parse_config
from .discretization import (State, assemble, elastic_form, make_grid, norm_equivalence_violations,
                             norm_Hl_sq, to_banded)
from .equilibria import (NonConvergenceError, SingularJacobianError, check_equilibrium_bound,
                         enumerate_equilibria)
from .integrator import ConfigurationError, StepFailure, StepperConfig, simulate
from .model import RegimeError, SamplingSpec, analytic_constants, validate_hypotheses

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class NumericalFailure(RuntimeError):
    """Experiment ran but a numerical claim failed; carries the partial summary."""

    def __init__(self, message: str, summary: dict):
        super().__init__(message)
        self.summary = summary


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def dump_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for r in rows:
            wr.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


# ---------------------------------------------------------------------------
# shared setup


def initial_state(cfg: RunConfig, grid, params, rng) -> State:
    e = cfg.experiment
    if e.initial == "zero":
        return State.zeros(grid)
    if e.initial == "random":
        return lab.random_state(grid, params, e.initial_energy, rng)
    s1, s2 = grid.sine_mode(1), grid.sine_mode(2)
    z = np.zeros(grid.n)
    y = State(grid, s1, 0.5 * s2, 0.5 * s1, z, z, z)
    E = 0.5 * norm_Hl_sq(params, y)
    c = math.sqrt(e.initial_energy / E) if e.initial_energy > 0 else 0.0
    return State(grid, c * s1, 0.5 * c * s2, 0.5 * c * s1, z, z, z)


def stepper_config(cfg: RunConfig, params, grid) -> StepperConfig:
    s = cfg.stepper
    if s.dt > 0:
        return StepperConfig(s.dt, s.newton_tol, s.newton_max_iters)
    return StepperConfig.default_for(params, grid, newton_tol=s.newton_tol,
                                     newton_max_iters=s.newton_max_iters)


class Context:
    def __init__(self, cfg: RunConfig, out: Path, workers: int):
        self.cfg = cfg
        self.out = out
        self.workers = workers
        self.params = cfg.params()
        self.forcing = cfg.forcing()
        self.damping = cfg.damping()
        self.grid = make_grid(self.params.L, cfg.grid.n)
        self.stepper = stepper_config(cfg, self.params, self.grid)
        self.rng = np.random.default_rng(cfg.experiment.seed)
        self.csv = "csv" in cfg.output.formats


# ---------------------------------------------------------------------------
# experiments; each returns the summary dict


def run_simulate(ctx: Context) -> dict:
    y0 = initial_state(ctx.cfg, ctx.grid, ctx.params, ctx.rng)
    tr = simulate(y0, ctx.cfg.experiment.T, assemble(ctx.params, ctx.grid), ctx.forcing,
                  ctx.damping, ctx.stepper, stride=ctx.cfg.output.stride)
    if ctx.csv:
        tr.to_csv(ctx.out / "trajectory.csv")
    res = tr.series("identity_residual")
    E0 = tr.reports[0].Etotal
    summary = {"steps": tr.steps, "samples": len(tr.reports), "failed": tr.failed,
               "error": tr.error, "E0": E0, "E_final": tr.reports[-1].E,
               "Etotal_final": tr.reports[-1].Etotal, "dissipated": tr.reports[-1].dissipated,
               "max_identity_residual": float(np.max(np.abs(res))),
               "dt": ctx.stepper.dt}
    if tr.failed:
        raise NumericalFailure(tr.error or "step failure", summary)
    return summary


def run_equilibria(ctx: Context) -> dict:
    e = ctx.cfg.experiment
    consts = analytic_constants(ctx.params, ctx.cfg.ell0(), ctx.forcing.beta)
    eqs, failures = enumerate_equilibria(ctx.params, ctx.forcing, ctx.grid, tol=e.tol,
                                         workers=ctx.workers, seed=e.seed)
    ops = assemble(ctx.params, ctx.grid)
    rows, records = [], []
    for i, eq in enumerate(eqs):
        bound = check_equilibrium_bound(eq, ctx.params, ctx.forcing, consts)
        tr = simulate(eq.as_state(), 100 * ctx.stepper.dt, ops, ctx.forcing, ctx.damping,
                      ctx.stepper, stride=100)
        end = tr.final_state
        drift = float(max(np.max(np.abs(end.q - eq.q)), np.max(np.abs(end.v))))
        rows.append([i, eq.residual_norm, eq.h1_seminorm_sq, bound.lhs, bound.rhs,
                     int(bound.passed), drift, eq.condition])
        records.append({"residual_norm": eq.residual_norm, "h1_seminorm_sq": eq.h1_seminorm_sq,
                        "bound": bound.to_dict(), "fixed_point_drift": drift,
                        "condition": eq.condition})
    if ctx.csv:
        _write_csv(ctx.out / "equilibria.csv",
                   ["index", "residual_norm", "h1_seminorm_sq", "bound_lhs", "bound_rhs",
                    "bound_passed", "fixed_point_drift", "condition"], rows)
    summary = {"count": len(eqs), "failed_starts": failures, "equilibria": records,
               "constants": vars(consts),
               "all_bounds_pass": all(r["bound"]["passed"] for r in records),
               "all_fixed_points": all(r["fixed_point_drift"] <= 1e-8 for r in records)}
    if not (summary["all_bounds_pass"] and summary["all_fixed_points"]):
        raise NumericalFailure("equilibrium bound or fixed-point check failed", summary)
    return summary


def run_decay_fit(ctx: Context) -> dict:
    e = ctx.cfg.experiment
    ensemble = lab.initial_ensemble(ctx.grid, ctx.params.with_ell(0.0), list(e.energies),
                                    e.n_initial, e.seed)
    rep = lab.absorbing_radius(ctx.params, ctx.forcing, ctx.damping, ctx.cfg.ell_values(),
                               ensemble, e.T, ctx.stepper, stride=ctx.cfg.output.stride,
                               workers=ctx.workers)
    if ctx.csv:
        _write_csv(ctx.out / "absorbing.csv", ["ell", "radius", "alpha", "absorbing_level", "stationary"],
                   zip(rep.ells, rep.radii, rep.alphas, rep.absorbing_levels,
                       [int(s) for s in rep.stationary]))
    summary = rep.to_dict()
    summary["all_alpha_positive"] = all(a > 0 for a in rep.alphas)
    return summary


def run_singular_limit(ctx: Context) -> dict:
    e = ctx.cfg.experiment
    y0 = initial_state(ctx.cfg, ctx.grid, ctx.params, ctx.rng)
    tab = lab.singular_limit_experiment(ctx.params, ctx.forcing, ctx.damping, ctx.cfg.ell_values(),
                                        y0, e.T, ctx.stepper, workers=ctx.workers)
    if ctx.csv:
        _write_csv(ctx.out / "singular_limit.csv", ["ell", "error", "w_max"],
                   zip(tab.ells, tab.errors, tab.w_max))
    return tab.to_dict()


def run_semicontinuity(ctx: Context) -> dict:
    e = ctx.cfg.experiment
    proto = lab.HarvestProtocol(n_initial=e.n_initial, energy=e.initial_energy,
                                t_transient=e.t_transient or None, t_harvest=e.t_harvest or None,
                                stride_time=e.stride_time or None, seed=e.seed,
                                harvest_tol_rel=e.harvest_tol_rel)
    tab = lab.upper_semicontinuity_experiment(ctx.params, ctx.forcing, ctx.damping,
                                              ctx.cfg.ell_values(), ctx.grid, proto, ctx.stepper,
                                              workers=ctx.workers)
    if ctx.csv:
        _write_csv(ctx.out / "semicontinuity.csv", ["ell", "semidistance"],
                   zip(tab.ells, tab.semidistances))
    return tab.to_dict()


def run_quasistability(ctx: Context) -> dict:
    e = ctx.cfg.experiment
    base = lab.initial_ensemble(ctx.grid, ctx.params, list(e.energies), e.n_pairs, e.seed)
    pairs = lab.perturbed_pairs(base, e.eps, ctx.rng, kind=e.pair_kind)
    rep = lab.quasistability_probe(ctx.params, ctx.forcing, ctx.damping, pairs, e.T, ctx.stepper,
                                   stride=ctx.cfg.output.stride, workers=ctx.workers)
    if ctx.csv:
        _write_csv(ctx.out / "quasistability.csv", ["pair", "alpha"],
                   ((i, a) for i, a in enumerate(rep.pair_alphas)))
    summary = rep.to_dict()
    if not rep.feasible:
        raise NumericalFailure("quasi-stability inequality infeasible", summary)
    return summary


def run_verify(ctx: Context) -> dict:
    e = ctx.cfg.experiment
    ell0 = ctx.cfg.ell0()
    report = validate_hypotheses(ctx.params, ctx.forcing, ctx.damping,
                                 SamplingSpec(n_samples=e.samples, seed=e.seed), ell0=ell0)
    ops = assemble(ctx.params, ctx.grid)
    K = ops.stiffness
    sym = float(abs(K - K.T).max()) if K.nnz else 0.0
    try:
        cholesky_banded(to_banded(K, 5)[:6], lower=False)
        posdef = True
    except LinAlgError:
        posdef = False
    form_err = 0.0
    states = [lab.random_state(ctx.grid, ctx.params, 1.0, ctx.rng) for _ in range(200)]
    for s in states:
        a = ops.quadratic_form(s.phi, s.psi, s.w)
        b = elastic_form(ctx.params, ctx.grid, s.phi, s.psi, s.w)
        form_err = max(form_err, abs(a - b) / max(abs(b), 1e-300))
    norms = {}
    for ell in (0.0, ell0 / 2, ell0):
        p = ctx.params.with_ell(ell)
        norms[repr(ell)] = norm_equivalence_violations(p, analytic_constants(p, ell0), states)
    checks = {c.name: c.passed for c in report.checks}
    checks["stiffness_symmetric"] = sym == 0.0
    checks["stiffness_positive_definite"] = posdef
    checks["quadratic_form_matches"] = form_err <= 1e-12
    checks["norm_equivalence"] = all(v["gamma1"] + v["gamma2"] + v["gamma3"] == 0
                                     for v in norms.values())
    summary = {"hypotheses": report.to_dict(), "checks": checks, "quadratic_form_rel_error": form_err,
               "norm_equivalence": norms, "passed": all(checks.values())}
    if not summary["passed"]:
        failed = sorted(k for k, v in checks.items() if not v)
        raise NumericalFailure(f"verification failed: {', '.join(failed)}", summary)
    return summary


RUNNERS = {"simulate": run_simulate, "equilibria": run_equilibria, "decay-fit": run_decay_fit,
           "singular-limit": run_singular_limit, "semicontinuity": run_semicontinuity,
           "quasistability": run_quasistability, "verify": run_verify}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bresse", description="Damped Bresse beam experiments")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--output", type=Path, default=None,
                       help="output directory (overrides [output] directory)")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--seed", type=int, default=None, help="overrides [experiment] seed")
    return ap


def _fail(out: Optional[Path], code: int, kind: str, message: str, extra=None) -> int:
    payload = {"status": "error", "kind": kind, "exit_code": code, "message": message}
    if isinstance(extra, list):
        payload["errors"] = extra
    elif extra is not None:
        payload["summary"] = extra
    text = dump_json(payload)
    sys.stderr.write(text)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "error.json").write_text(text)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = args.config.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        return _fail(args.output, EXIT_CONFIG, "config", f"cannot read config: {exc}")
    try:
        cfg = parse_config(text, experiment=args.command)
        if args.seed is not None:
            if args.seed < 0 or args.seed >= 2**64:
                raise ConfigError(["--seed must be an unsigned 64-bit integer"])
            cfg = cfg.with_seed(args.seed)
        if args.workers < 1:
            raise ConfigError(["--workers must be >= 1"])
    except ConfigError as exc:
        return _fail(args.output, EXIT_CONFIG, "config", str(exc), exc.errors)
    out = args.output if args.output is not None else Path(cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    try:
        ctx = Context(cfg, out, args.workers)
    except (ValueError, RegimeError) as exc:
        return _fail(out, EXIT_CONFIG, "config", str(exc), [str(exc)])
    manifest = {"experiment": args.command, "seed": cfg.experiment.seed, "workers": args.workers,
                "grid": {"L": ctx.grid.L, "n": ctx.grid.n, "h": ctx.grid.h},
                "dt": ctx.stepper.dt, "newton_tol": ctx.stepper.newton_tol,
                "config": emit_config(cfg), "outputs": []}
    try:
        summary = RUNNERS[args.command](ctx)
        status, code = "ok", EXIT_OK
    except (ConfigurationError, RegimeError, lab.PreconditionError) as exc:
        return _fail(out, EXIT_CONFIG, "precondition", str(exc), [str(exc)])
    except NumericalFailure as exc:
        summary, status, code = exc.summary, "failed", EXIT_NUMERIC
        summary["failure"] = str(exc)
    except (StepFailure, SingularJacobianError, NonConvergenceError, ArithmeticError,
            FloatingPointError) as exc:
        return _fail(out, EXIT_NUMERIC, "numerical", f"{type(exc).__name__}: {exc}")
    summary = {"experiment": args.command, "status": status, "result": summary}
    # summary.json is always written; formats only gate the CSV tables
    (out / "summary.json").write_text(dump_json(summary))
    manifest["outputs"] = sorted(p.name for p in out.iterdir() if p.name != "manifest.json")
    (out / "manifest.json").write_text(dump_json(manifest))
    if code != EXIT_OK:
        sys.stderr.write(dump_json({"status": "error", "kind": "numerical", "exit_code": code,
                                    "message": summary["result"].get("failure", "")}))
    return code


if __name__ == "__main__":
    raise SystemExit(main())
