"""Sectioned key-value run configuration (INI syntax) with exhaustive validation."""
from __future__ import annotations

import configparser
import difflib
import math
from dataclasses import dataclass, field, fields, replace
from typing import Optional

from .model import (BeamParams, DampingModel, ForcingModel, builtin_forcing, coupled_forcing,
                    cubic_damping, linear_damping, quadratic_forcing, zero_forcing)

EXPERIMENTS = ("simulate", "equilibria", "decay-fit", "singular-limit", "semicontinuity",
               "quasistability", "verify")
# experiments whose constants or claims need ell strictly inside the uniform regime
UNIFORM_REGIME = ("equilibria", "decay-fit", "singular-limit", "semicontinuity",
                  "quasistability", "verify")
# curvature sweeps stay at most this fraction of the cap
SWEEP_FRACTION = 0.9
FORCINGS = ("builtin", "zero", "quadratic", "coupled")
DAMPINGS = ("linear", "cubic", "none")
INITIAL = ("sine", "random", "zero")


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


@dataclass(frozen=True)
class ModelSection:
    """Beam coefficients plus forcing and damping selectors."""

    rho1: float = 1.0
    rho2: float = 1.0
    b: float = 1.0
    k: float = 1.0
    k0: float = 1.0
    L: float = 1.0
    ell: float = 0.0
    forcing: str = "builtin"
    alpha1: float = 0.0
    alpha2: float = 0.0
    beta: float = 0.0          # quadratic forcing only
    coupling: float = 1.0      # coupled forcing only
    damping: str = "linear"
    damping_a: float = 1.0     # linear coefficient
    damping_c: float = 0.0     # cubic coefficient
    damping_clip: float = 0.0  # 0 = unclipped


@dataclass(frozen=True)
class GridSection:
    n: int = 64


@dataclass(frozen=True)
class StepperSection:
    dt: float = 0.0  # 0 = h / (2 c_max)
    newton_tol: float = 1e-10
    newton_max_iters: int = 25


@dataclass(frozen=True)
class ExperimentSection:
    name: str = "simulate"
    seed: int = 0
    T: float = 10.0
    initial: str = "sine"
    initial_energy: float = 1.0
    ells: tuple = ()            # fractions of the uniform-regime cap pi/(2L)
    ell0_fraction: float = 0.45
    n_initial: int = 8
    energies: tuple = (1.0,)
    t_transient: float = 0.0    # 0 = 10 / alpha from a pilot fit
    t_harvest: float = 0.0
    stride_time: float = 0.0
    harvest_tol_rel: float = 0.02
    n_pairs: int = 10
    eps: float = 1e-2
    pair_kind: str = "velocity"
    tol: float = 1e-10
    samples: int = 10000


@dataclass(frozen=True)
class OutputSection:
    directory: str = "out"
    stride: int = 1
    formats: tuple = ("csv", "json")


@dataclass(frozen=True)
class RunConfig:
    model: ModelSection = field(default_factory=ModelSection)
    grid: GridSection = field(default_factory=GridSection)
    stepper: StepperSection = field(default_factory=StepperSection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    output: OutputSection = field(default_factory=OutputSection)

    # --- factories -------------------------------------------------------

    def params(self) -> BeamParams:
        m = self.model
        return BeamParams(m.rho1, m.rho2, m.b, m.k, m.k0, m.L, m.ell)

    def forcing(self) -> ForcingModel:
        m = self.model
        if m.forcing == "builtin":
            return builtin_forcing(m.alpha1, m.alpha2)
        if m.forcing == "zero":
            return zero_forcing()
        if m.forcing == "quadratic":
            return quadratic_forcing(m.beta)
        return coupled_forcing(m.coupling)

    def damping(self) -> Optional[DampingModel]:
        m = self.model
        if m.damping == "none":
            return None
        if m.damping == "linear":
            return linear_damping(m.damping_a)
        return cubic_damping(m.damping_a, m.damping_c, m.damping_clip or None)

    def ell_values(self) -> list[float]:
        cap = math.pi / (2.0 * self.model.L)
        return [f * cap for f in self.experiment.ells]

    def ell0(self) -> float:
        return self.experiment.ell0_fraction * math.pi / (2.0 * self.model.L)

    def with_experiment(self, name: str) -> "RunConfig":
        return replace(self, experiment=replace(self.experiment, name=name))

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, experiment=replace(self.experiment, seed=int(seed)))


SECTIONS = {"model": ModelSection, "grid": GridSection, "stepper": StepperSection,
            "experiment": ExperimentSection, "output": OutputSection}


def _fmt(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_config(cfg: RunConfig) -> str:
    """Every field of every section, in declaration order."""
    lines = []
    for sec in SECTIONS:
        lines.append(f"[{sec}]")
        obj = getattr(cfg, sec)
        for f in fields(obj):
            lines.append(f"{f.name} = {_fmt(getattr(obj, f.name))}")
        lines.append("")
    return "\n".join(lines)


def _convert(raw: str, default):
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        v = float(raw)
        if not math.isfinite(v):
            raise ValueError(f"expected a finite number, got {raw!r}")
        return v
    return raw.strip()


# element type of tuple fields whose default is empty
_TUPLE_KIND = {("experiment", "ells"): float, ("experiment", "energies"): float,
               ("output", "formats"): str}


def _nearest(word: str, options: list[str], cutoff: float = 0.5) -> Optional[str]:
    # ties go to the earliest declared option
    scored = [(difflib.SequenceMatcher(None, word, o).ratio(), -i, o) for i, o in enumerate(options)]
    best = max(scored)
    return best[2] if best[0] >= cutoff else None


def parse_config(text: str, experiment: Optional[str] = None) -> RunConfig:
    """Parse and validate; raises ConfigError listing every problem found.

    ``experiment`` overrides ``[experiment] name`` (the CLI subcommand).
    """
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str
    errors: list[str] = []
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"syntax error: {exc}"])
    values: dict[str, dict] = {s: {} for s in SECTIONS}
    for sec in cp.sections():
        if sec not in SECTIONS:
            near = _nearest(sec, list(SECTIONS))
            hint = f" (did you mean [{near}]?)" if near else ""
            errors.append(f"unknown section [{sec}]{hint}")
            continue
        cls = SECTIONS[sec]
        defaults = {f.name: f.default for f in fields(cls)}
        for key, raw in cp.items(sec):
            if key not in defaults:
                near = _nearest(key, list(defaults))
                hint = f"; nearest valid key is '{near}'" if near else ""
                errors.append(f"unknown key '{key}' in [{sec}]{hint}")
                continue
            try:
                kind = _TUPLE_KIND.get((sec, key))
                if kind is not None:
                    items = [s.strip() for s in raw.split(",") if s.strip()]
                    values[sec][key] = tuple(kind(s) for s in items)
                else:
                    values[sec][key] = _convert(raw, defaults[key])
            except ValueError:
                kind_name = type(defaults[key]).__name__
                errors.append(f"[{sec}] {key}: cannot read {raw!r} as {kind_name}")
    if experiment is not None:
        values["experiment"]["name"] = experiment
    sections = {}
    for sec, cls in SECTIONS.items():
        try:
            sections[sec] = cls(**values[sec])
        except (TypeError, ValueError) as exc:
            errors.append(f"[{sec}] {exc}")
            sections[sec] = cls()
    cfg = RunConfig(**sections)
    errors.extend(validate(cfg))
    if errors:
        raise ConfigError(errors)
    return cfg


def validate(cfg: RunConfig) -> list[str]:
    """Semantic checks; returns all problems rather than stopping at the first."""
    errs = []
    m, g, s, e, o = cfg.model, cfg.grid, cfg.stepper, cfg.experiment, cfg.output
    for name in ("rho1", "rho2", "b", "k", "k0", "L"):
        if not getattr(m, name) > 0:
            errs.append(f"[model] {name} must be > 0")
    if m.ell < 0:
        errs.append("[model] ell must be >= 0")
    if m.forcing not in FORCINGS:
        errs.append(f"[model] forcing must be one of {', '.join(FORCINGS)}")
    if m.damping not in DAMPINGS:
        errs.append(f"[model] damping must be one of {', '.join(DAMPINGS)}")
    if m.alpha1 < 0 or m.alpha2 < 0:
        errs.append("[model] alpha1 and alpha2 must be >= 0")
    if m.damping != "none" and not m.damping_a > 0:
        errs.append("[model] damping_a must be > 0")
    if m.damping_c < 0 or m.damping_clip < 0:
        errs.append("[model] damping_c and damping_clip must be >= 0")
    if g.n < 2:
        errs.append("[grid] n must be >= 2")
    if s.dt < 0:
        errs.append("[stepper] dt must be >= 0 (0 selects the default)")
    if not s.newton_tol > 0:
        errs.append("[stepper] newton_tol must be > 0")
    if s.newton_max_iters < 1:
        errs.append("[stepper] newton_max_iters must be >= 1")
    if e.name not in EXPERIMENTS:
        errs.append(f"[experiment] name must be one of {', '.join(EXPERIMENTS)}")
    if e.T < 0:
        errs.append("[experiment] T must be >= 0")
    if e.initial not in INITIAL:
        errs.append(f"[experiment] initial must be one of {', '.join(INITIAL)}")
    if e.pair_kind not in ("velocity", "full"):
        errs.append("[experiment] pair_kind must be velocity or full")
    for name in ("n_initial", "n_pairs", "samples"):
        if getattr(e, name) < 1:
            errs.append(f"[experiment] {name} must be >= 1")
    if any(x < 0 for x in e.energies) or not e.energies:
        errs.append("[experiment] energies must be a nonempty list of values >= 0")
    if o.stride < 1:
        errs.append("[output] stride must be >= 1")
    unknown_fmt = set(o.formats) - {"csv", "json"}
    if unknown_fmt:
        errs.append(f"[output] unknown formats {sorted(unknown_fmt)}")

    if e.name in UNIFORM_REGIME and m.L > 0:
        cap = math.pi / (2.0 * m.L)
        frac_ok = 0 <= e.ell0_fraction < 1
        if not frac_ok:
            errs.append("[experiment] ell0_fraction must lie in [0, 1) of the uniform-regime cap pi/(2L)")
        if m.ell >= cap:
            errs.append(f"[model] ell={m.ell!r} is outside the uniform-regime cap "
                        f"pi/(2L)={cap:.6g} required by experiment '{e.name}'")
        elif frac_ok and m.ell > e.ell0_fraction * cap:
            errs.append(f"[model] ell={m.ell!r} exceeds ell0 = ell0_fraction * pi/(2L) = "
                        f"{e.ell0_fraction * cap:.6g}")
        bad = [f for f in e.ells if not 0 <= f <= SWEEP_FRACTION]
        if bad:
            errs.append(f"[experiment] ells {bad} must be fractions in [0, {SWEEP_FRACTION}] "
                        "of the uniform-regime cap pi/(2L)")
    if e.name in ("singular-limit", "semicontinuity", "decay-fit") and not e.ells:
        errs.append(f"[experiment] ells must be nonempty for '{e.name}'")
    if e.name in ("singular-limit", "semicontinuity") and m.forcing == "coupled":
        errs.append("compatibility condition violated: f1 and f2 must not depend on w "
                    f"for experiment '{e.name}'")
    if e.name == "verify" and m.damping == "none":
        errs.append("[model] experiment 'verify' screens a damping law; damping = none has none")
    if e.name in ("semicontinuity", "quasistability"):
        if m.damping == "none" or (m.damping == "cubic" and m.damping_c > 0 and m.damping_clip == 0):
            errs.append(f"[model] experiment '{e.name}' needs globally Lipschitz damping "
                        "(linear, or cubic with damping_clip > 0)")
    return errs
