"""Numerical experiments on the long-time dynamics and the zero-curvature limit.

Attractors are not computable; every experiment here works with finite
samples of post-transient trajectory states and with constants fitted to
simulated series. Fitted constants carry no claim about their analytic
counterparts.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar, nnls
from scipy.spatial.distance import cdist

from .discretization import (Grid, State, TimoshenkoState, assemble, embed, l2_sq, make_grid,
                             midpoint_diff, norm_H0_sq, norm_Hl_sq, project)
from .integrator import (ConfigurationError, StepperConfig, Trajectory, acceleration, simulate,
                         timoshenko_simulate)
from .model import BeamParams, DampingModel, ForcingModel, analytic_constants


class PreconditionError(ValueError):
    pass


def _map(fn, items, workers: int):
    items = list(items)
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


# ---------------------------------------------------------------------------
# decay fits


@dataclass(frozen=True)
class DecayFit:
    """y(t) ~ gamma * y(0) * exp(-alpha (t - t0)) + floor."""

    gamma: float
    alpha: float
    floor: float
    rmse: float
    amplitude: float = 0.0
    degenerate: bool = False

    def predict(self, t, t0: float = 0.0) -> np.ndarray:
        return self.amplitude * np.exp(-self.alpha * (np.asarray(t) - t0)) + self.floor

    def to_dict(self) -> dict:
        return {"gamma": self.gamma, "alpha": self.alpha, "floor": self.floor,
                "rmse": self.rmse, "amplitude": self.amplitude, "degenerate": self.degenerate}


def _linear_part(alpha, tt, y):
    """Nonnegative (amplitude, floor) for a fixed rate, and the residual norm."""
    X = np.column_stack([np.exp(-alpha * tt), np.ones_like(tt)])
    coef, rnorm = nnls(X, y)
    return coef[0], coef[1], rnorm


def fit_decay(t, y, min_samples: int = 20) -> DecayFit:
    """Fit y(t) ~ A exp(-alpha (t - t0)) + floor with A, alpha, floor >= 0.

    Variable projection: for a trial rate the amplitude and floor are a
    nonnegative linear least-squares solve, so only the rate is searched,
    by a log-spaced scan refined with a bounded Brent step. A fit no better
    than the best constant is reported as the constant with alpha = 0.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise ValueError("t and y must be 1-d arrays of equal length")
    if len(t) < min_samples:
        raise ValueError(f"need at least {min_samples} samples, got {len(t)}")
    if np.any(np.diff(t) <= 0):
        raise ValueError("t must be strictly increasing")
    scale = float(np.max(np.abs(y)))
    if scale == 0.0:
        return DecayFit(0.0, 0.0, 0.0, 0.0, 0.0, degenerate=True)
    tt = t - t[0]

    c = max(float(np.mean(y)), 0.0)
    const_rmse = float(np.sqrt(np.mean((y - c) ** 2)))
    constant = DecayFit(0.0, 0.0, c, const_rmse)
    if np.ptp(y) <= 1e-9 * scale:
        return constant

    def cost(log_a):
        return _linear_part(math.exp(log_a), tt, y)[2]

    lo = math.log(1e-6 / tt[-1])
    hi = math.log(50.0 / float(np.min(np.diff(tt))))
    grid = np.linspace(lo, hi, 400)
    vals = np.array([cost(s) for s in grid])
    i = int(np.argmin(vals))
    res = minimize_scalar(cost, bounds=(grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]),
                          method="bounded", options={"xatol": 1e-12, "maxiter": 500})
    alpha = math.exp(res.x if res.fun <= vals[i] else grid[i])
    amp, floor, _ = _linear_part(alpha, tt, y)
    if amp <= 0:
        return constant

    rmse = float(np.sqrt(np.mean((amp * np.exp(-alpha * tt) + floor - y) ** 2)))
    if rmse >= const_rmse:
        return constant
    gamma = amp / y[0] if y[0] > 0 else math.inf
    return DecayFit(float(gamma), float(alpha), float(floor), rmse, float(amp))


def fit_is_stationary(t, y, rtol: float = 0.2) -> bool:
    """Refitting on the tail half changes the rate by at most ``rtol``."""
    t, y = np.asarray(t), np.asarray(y)
    full = fit_decay(t, y)
    half = len(t) // 2
    tail = fit_decay(t[half:], y[half:], min_samples=min(20, len(t) - half))
    if full.alpha == 0:
        return tail.alpha == 0
    return abs(tail.alpha - full.alpha) <= rtol * full.alpha


# ---------------------------------------------------------------------------
# initial data


def random_state(grid: Grid, params: BeamParams, energy: float, rng: np.random.Generator,
                 modes: int = 4) -> State:
    """Smooth random state (few sine modes per field) with linear energy ``energy``."""
    decay = 1.0 / np.arange(1, modes + 1)
    shapes = np.array([grid.sine_mode(m) for m in range(1, modes + 1)])
    fields = [(rng.normal(size=modes) * decay) @ shapes for _ in range(6)]
    s = State(grid, *fields)
    E = 0.5 * norm_Hl_sq(params, s)
    c = math.sqrt(energy / E) if energy > 0 else 0.0
    return State(grid, *(c * f for f in fields))


def initial_ensemble(grid: Grid, params: BeamParams, energies: Sequence[float], size: int,
                     seed: int = 0) -> list[State]:
    """``size`` random states, cycling through the given energy levels."""
    rng = np.random.default_rng(seed)
    return [random_state(grid, params, energies[i % len(energies)], rng) for i in range(size)]


# ---------------------------------------------------------------------------
# absorbing radius


@dataclass
class AbsorbingReport:
    ells: list[float]
    radii: list[float]
    alphas: list[float]
    absorbing_levels: list[float]
    uniform_radius: float
    spread: float
    uniform: bool
    excluded: list[tuple[float, int, str]] = field(default_factory=list)
    member_radii: list[list[float]] = field(default_factory=list)
    # per ell: every member's rate survives refitting on the tail half
    stationary: list[bool] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"ells": self.ells, "radii": self.radii, "alphas": self.alphas,
                "stationary": self.stationary,
                "absorbing_levels": self.absorbing_levels, "uniform_radius": self.uniform_radius,
                "spread": self.spread, "uniform": self.uniform,
                "excluded": [list(e) for e in self.excluded], "member_radii": self.member_radii}


def _shifted_energy(traj: Trajectory, params: BeamParams, forcing: ForcingModel) -> np.ndarray:
    # nonnegative up to the coercivity constant: Etotal + L m_F >= beta0 E
    return traj.series("Etotal") + params.L * forcing.mF


def absorbing_radius(params: BeamParams, forcing: ForcingModel, damping: DampingModel,
                     ells: Sequence[float], ensemble: Sequence[State], T: float,
                     cfg: Optional[StepperConfig] = None, tail: float = 0.2,
                     uniform_rtol: float = 0.25, stride: int = 1, workers: int = 1,
                     observer: Optional[Callable] = None) -> AbsorbingReport:
    """Empirical eventual bound of the ell-norm per curvature and across curvatures.

    The per-member eventual value is the maximum norm over the last ``tail``
    fraction of the run; the radius for one curvature is the maximum over the
    ensemble. Diverging or failed members are excluded and listed.
    ``observer(params, trajectory)`` sees every simulated trajectory.
    """
    if not ensemble:
        raise ValueError("empty ensemble")
    grid = ensemble[0].grid
    for ell in ells:
        if not 0 <= ell < params.ell_cap:
            raise PreconditionError(f"ell={ell} outside the uniform regime [0, pi/(2L))")
    radii, alphas, levels, excluded, members, stationary = [], [], [], [], [], []
    for ell in ells:
        p = params.with_ell(ell)
        ops = assemble(p, grid)
        c = cfg or StepperConfig.default_for(p, grid)

        def run(y0, ops=ops, c=c):
            return simulate(y0, T, ops, forcing, damping, c, stride=stride)

        trajs = _map(run, ensemble, workers)
        r_ell, a_ell, lev_ell, st_ell = [], [], [], []
        for idx, tr in enumerate(trajs):
            if observer is not None:
                observer(p, tr)
            norms = np.array([math.sqrt(norm_Hl_sq(p, s)) for s in tr.states])
            if tr.failed or not np.all(np.isfinite(norms)):
                excluded.append((float(ell), idx, tr.error or "non-finite state"))
                continue
            t = tr.t
            cut = t[0] + (1.0 - tail) * (t[-1] - t[0])
            in_tail = t >= cut
            r_ell.append(float(norms[in_tail].max()))
            lev_ell.append(float(tr.series("Etotal")[in_tail].max()))
            shifted = _shifted_energy(tr, p, forcing)
            a_ell.append(fit_decay(t, shifted).alpha)
            st_ell.append(len(t) >= 40 and fit_is_stationary(t, shifted))
        members.append(r_ell)
        radii.append(max(r_ell) if r_ell else math.nan)
        alphas.append(min(a_ell) if a_ell else math.nan)
        levels.append(max(lev_ell) if lev_ell else math.nan)
        stationary.append(bool(st_ell) and all(st_ell))
    R = max(radii)
    spread = (max(radii) - min(radii)) / R if R > 0 else 0.0
    return AbsorbingReport(list(map(float, ells)), radii, alphas, levels, R, spread,
                           bool(spread <= uniform_rtol), excluded, members, stationary)


# ---------------------------------------------------------------------------
# quasi-stability


def lp_norm_sq(u: np.ndarray, h: float, q: float) -> float:
    """|u|_q^2 with the q-th power integrated by the trapezoidal rule (zero ends)."""
    return float((h * np.sum(np.abs(u) ** q)) ** (2.0 / q))


@dataclass
class QuasiStabilityReport:
    gamma_B: float
    alpha_B: float
    C_B: float
    feasible: bool
    max_violation: float
    pair_alphas: list[float]
    series: list[dict] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {"gamma_B": self.gamma_B, "alpha_B": self.alpha_B, "C_B": self.C_B,
                "feasible": self.feasible, "max_violation": self.max_violation,
                "pair_alphas": self.pair_alphas}


def perturbed_pairs(base: Sequence[State], eps: float, rng: np.random.Generator,
                    kind: str = "velocity") -> list[tuple[State, State]]:
    """Pairs (y, y + eps * unit direction); ``kind`` is "velocity" or "full"."""
    pairs = []
    for y in base:
        g = y.grid
        d = random_state(g, BeamParams(L=g.L), 1.0, rng)
        dq = d.q if kind == "full" else np.zeros_like(d.q)
        dv = d.v
        scale = eps / math.sqrt(l2_sq(np.concatenate([dq.ravel(), dv.ravel()]), g.h)
                                + sum(l2_sq(midpoint_diff(dq[:, c], g.h), g.h) for c in range(3)))
        other = State.from_arrays(g, y.q + scale * dq, y.v + scale * dv, y.t)
        pairs.append((y, other))
    return pairs


def quasistability_probe(params: BeamParams, forcing: ForcingModel, damping: DampingModel,
                         pairs: Sequence[tuple[State, State]], T: float,
                         cfg: Optional[StepperConfig] = None, stride: int = 1,
                         workers: int = 1, slack: float = 1e-12,
                         observer: Optional[Callable] = None) -> QuasiStabilityReport:
    """Fit (gamma_B, alpha_B, C_B) so that, for every pair and sample time,

        E(t) <= gamma_B E(0) exp(-alpha_B t) + C_B sup_{s<=t} (|phi|_2p^2 + |psi|_2p^2 + |w|_2p^2)

    where E and the compensator are computed on the difference of the two
    trajectories. alpha_B is the median decay rate fitted to the
    normalised difference energies, gamma_B the smallest value >= 1
    consistent with samples whose compensator vanishes, and C_B the smallest
    constant covering the rest. ``observer`` may be called from worker threads.
    """
    if not damping.globally_lipschitz:
        raise PreconditionError("quasi-stability probe needs globally Lipschitz damping")
    if not pairs:
        raise ValueError("empty pair ensemble")
    grid = pairs[0][0].grid
    h = grid.h
    ops = assemble(params, grid)
    cfg = cfg or StepperConfig.default_for(params, grid)
    q2p = 2.0 * forcing.p

    def run(pair):
        a, b = pair
        ta = simulate(a, T, ops, forcing, damping, cfg, stride=stride)
        tb = simulate(b, T, ops, forcing, damping, cfg, stride=stride)
        if ta.failed or tb.failed:
            raise ArithmeticError(ta.error or tb.error)
        if observer is not None:
            observer(params, ta)
            observer(params, tb)
        t = ta.t
        E = np.empty(len(t))
        comp = np.empty(len(t))
        for i, (sa, sb) in enumerate(zip(ta.states, tb.states)):
            d = State.from_arrays(grid, sa.q - sb.q, sa.v - sb.v)
            E[i] = 0.5 * norm_Hl_sq(params, d)
            comp[i] = sum(lp_norm_sq(d.q[:, c], h, q2p) for c in range(3))
        return {"t": t, "E": E, "compensator": np.maximum.accumulate(comp)}

    series = _map(run, pairs, workers)
    pair_alphas = []
    for s in series:
        if s["E"][0] > 0 and np.max(s["E"]) > 0:
            pair_alphas.append(fit_decay(s["t"], s["E"] / s["E"][0]).alpha)
    positive = [a for a in pair_alphas if a > 0]
    # pairs settling on different equilibria never decay; the compensator covers them
    alpha_B = float(np.median(positive)) if positive else 0.0

    gamma_B = 1.0
    for s in series:
        zero = s["compensator"] <= 0
        E0 = s["E"][0]
        if E0 > 0 and zero.any():
            gamma_B = max(gamma_B, float(np.max(s["E"][zero] * np.exp(alpha_B * s["t"][zero]) / E0)))
    C_B = 0.0
    for s in series:
        excess = s["E"] - gamma_B * s["E"][0] * np.exp(-alpha_B * s["t"])
        pos = s["compensator"] > 0
        if pos.any():
            C_B = max(C_B, float(np.max(np.maximum(excess[pos], 0.0) / s["compensator"][pos])))
    worst = -math.inf
    for s in series:
        bound = gamma_B * s["E"][0] * np.exp(-alpha_B * s["t"]) + C_B * s["compensator"]
        tol = slack * max(1.0, float(np.max(s["E"])))
        worst = max(worst, float(np.max(s["E"] - bound - tol)))
    feasible = worst <= 0 and alpha_B > 0 and math.isfinite(C_B)
    return QuasiStabilityReport(gamma_B, alpha_B, C_B, bool(feasible), max(worst, 0.0),
                                pair_alphas, series)


def compensated_decay_rates(report: QuasiStabilityReport) -> list[float]:
    """Decay rate of max(E - C_B * compensator, 0) for pairs where it starts positive."""
    rates = []
    for s in report.series:
        y = np.maximum(s["E"] - report.C_B * s["compensator"], 0.0)
        if y[0] > 0 and len(y) >= 20:
            rates.append(fit_decay(s["t"], y / y[0]).alpha)
    return rates


# ---------------------------------------------------------------------------
# singular limit


@dataclass
class SingularLimitTable:
    ells: list[float]
    errors: list[float]
    w_max: list[float]

    @property
    def strictly_decreasing(self) -> bool:
        order = np.argsort(self.ells)[::-1]
        e = np.array(self.errors)[order]
        ells = np.array(self.ells)[order]
        e = e[ells > 0]
        return bool(np.all(np.diff(e) < 0))

    def to_dict(self) -> dict:
        return {"ells": self.ells, "errors": self.errors, "w_max": self.w_max,
                "strictly_decreasing": self.strictly_decreasing}


def singular_limit_experiment(params: BeamParams, forcing: ForcingModel,
                              damping: Optional[DampingModel], ells: Sequence[float],
                              initial: State, T: float, cfg: Optional[StepperConfig] = None,
                              workers: int = 1, observer: Optional[Callable] = None) -> SingularLimitTable:
    """sup over t <= T of the H0 distance between the projected Bresse state and Timoshenko.

    Both systems share grid, step and the projected initial data.
    """
    if not forcing.compatible_with_timoshenko:
        raise ConfigurationError("compatibility condition violated: f1 and f2 must not depend on w")
    grid = initial.grid
    cfg = cfg or StepperConfig.default_for(params, grid)
    ref = timoshenko_simulate(project(initial), T, assemble(params.with_ell(0.0), grid),
                              forcing, damping, cfg)
    if ref.failed:
        raise ArithmeticError(ref.error)
    if observer is not None:
        observer(params.with_ell(0.0), ref)

    def run(ell):
        p = params.with_ell(ell)
        tr = simulate(initial, T, assemble(p, grid), forcing, damping, cfg)
        if tr.failed:
            raise ArithmeticError(tr.error)
        if observer is not None:
            observer(p, tr)
        err = 0.0
        wmax = 0.0
        for sb, st in zip(tr.states, ref.states):
            diff = TimoshenkoState(grid, sb.phi - st.phi, sb.psi - st.psi,
                                   sb.phit - st.phit, sb.psit - st.psit)
            err = max(err, math.sqrt(norm_H0_sq(diff)))
            wmax = max(wmax, float(np.max(np.abs(sb.w))))
        return err, wmax

    out = _map(run, ells, workers)
    return SingularLimitTable([float(e) for e in ells], [o[0] for o in out], [o[1] for o in out])


# ---------------------------------------------------------------------------
# Hausdorff semidistance and attractor samples


def _as_points(X, norm: str, params: Optional[BeamParams]) -> np.ndarray:
    if isinstance(X, np.ndarray):
        return np.atleast_2d(np.asarray(X, dtype=float))
    return np.array([embed(s, norm, params) for s in X])


def hausdorff_semidistance(A, B, norm: str = "H0", params: Optional[BeamParams] = None,
                           chunk: int = 512) -> float:
    """sup_{a in A} inf_{b in B} |a - b| over finite sets.

    ``A`` and ``B`` are sequences of states (measured in the discrete norm
    ``norm``) or 2-d arrays whose rows are already embedded points.
    """
    X = _as_points(A, norm, params)
    Y = _as_points(B, norm, params)
    if X.size == 0 or Y.size == 0 or len(X) == 0 or len(Y) == 0:
        raise ValueError("semidistance of an empty set is undefined")
    if X.shape[1] != Y.shape[1]:
        raise ValueError("point sets live in different spaces")
    worst = 0.0
    for i in range(0, len(X), chunk):
        d = cdist(X[i:i + chunk], Y)
        worst = max(worst, float(d.min(axis=1).max()))
    return worst


@dataclass(frozen=True)
class HarvestProtocol:
    n_initial: int = 16
    energy: float = 2.0
    t_transient: Optional[float] = None
    t_harvest: Optional[float] = None
    stride_time: Optional[float] = None
    seed: int = 0
    harvest_tol_rel: float = 0.02
    pilot_time: float = 30.0

    def resolved(self, alpha: float) -> "HarvestProtocol":
        """Fill unset times from a decay rate: 10/alpha, 10/alpha, 0.1/alpha."""
        a = max(alpha, 1e-3)
        return HarvestProtocol(self.n_initial, self.energy,
                               self.t_transient if self.t_transient is not None else 10.0 / a,
                               self.t_harvest if self.t_harvest is not None else 10.0 / a,
                               self.stride_time if self.stride_time is not None else 0.1 / a,
                               self.seed, self.harvest_tol_rel, self.pilot_time)


@dataclass
class AttractorSample:
    states: list
    params: BeamParams
    t_transient: float
    t_harvest: float
    stride: float
    timoshenko: bool = False

    def points(self, norm: str = "H0") -> np.ndarray:
        return np.array([embed(s, norm, self.params) for s in self.states])

    @property
    def radius(self) -> float:
        return float(np.max(np.linalg.norm(self.points("H0"), axis=1)))


def pilot_decay_rate(params: BeamParams, forcing: ForcingModel, damping: DampingModel,
                     initial: State, T: float, cfg: Optional[StepperConfig] = None,
                     observer: Optional[Callable] = None) -> float:
    ops = assemble(params, initial.grid)
    tr = simulate(initial, T, ops, forcing, damping, cfg, stride=5, keep_states=False)
    if observer is not None:
        observer(params, tr)
    return fit_decay(tr.t, _shifted_energy(tr, params, forcing)).alpha


def harvest_attractor(params: BeamParams, forcing: ForcingModel, damping: DampingModel,
                      ensemble: Sequence[State], protocol: HarvestProtocol,
                      cfg: Optional[StepperConfig] = None, timoshenko: bool = False,
                      workers: int = 1, observer: Optional[Callable] = None) -> AttractorSample:
    """Post-transient occupation set of the ensemble; protocol times must be resolved.

    ``observer(params, trajectory)`` sees every simulated trajectory, with
    zero curvature for the Timoshenko runs.
    """
    if protocol.t_transient is None or protocol.t_harvest is None or protocol.stride_time is None:
        raise ValueError("protocol times are unresolved; call HarvestProtocol.resolved first")
    grid = ensemble[0].grid
    cfg = cfg or StepperConfig.default_for(params, grid)
    stride = max(1, int(round(protocol.stride_time / cfg.dt)))
    T = protocol.t_transient + protocol.t_harvest
    run_params = params.with_ell(0.0) if timoshenko else params
    ops = assemble(run_params, grid)

    def run(y0):
        if timoshenko:
            tr = timoshenko_simulate(project(y0), T, ops, forcing, damping, cfg, stride=stride)
        else:
            tr = simulate(y0, T, ops, forcing, damping, cfg, stride=stride)
        if tr.failed:
            raise ArithmeticError(tr.error)
        return tr

    trajs = _map(run, ensemble, workers)
    if observer is not None:
        for tr in trajs:
            observer(run_params, tr)
    harvested = [s for tr in trajs for s in tr.states if s.t >= protocol.t_transient - 1e-12]
    return AttractorSample(harvested, params, protocol.t_transient, protocol.t_harvest,
                           stride * cfg.dt, timoshenko)


@dataclass
class SemicontinuityTable:
    ells: list[float]
    semidistances: list[float]
    harvest_tol: float
    noise_rtol: float
    protocol: HarvestProtocol

    @property
    def nonincreasing(self) -> bool:
        order = np.argsort(self.ells)[::-1]
        d = np.array(self.semidistances)[order]
        return bool(np.all(d[1:] <= (1.0 + self.noise_rtol) * d[:-1]))

    @property
    def collapsed(self) -> bool:
        return bool(all(d <= self.harvest_tol for d in self.semidistances))

    def to_dict(self) -> dict:
        p = self.protocol
        return {"ells": self.ells, "semidistances": self.semidistances,
                "harvest_tol": self.harvest_tol, "nonincreasing": self.nonincreasing,
                "collapsed": self.collapsed,
                "protocol": {"n_initial": p.n_initial, "energy": p.energy,
                             "t_transient": p.t_transient, "t_harvest": p.t_harvest,
                             "stride_time": p.stride_time, "seed": p.seed}}


def upper_semicontinuity_experiment(params: BeamParams, forcing: ForcingModel,
                                    damping: DampingModel, ells: Sequence[float], grid: Grid,
                                    protocol: HarvestProtocol = HarvestProtocol(),
                                    cfg: Optional[StepperConfig] = None, noise_rtol: float = 0.2,
                                    workers: int = 1,
                                    observer: Optional[Callable] = None) -> SemicontinuityTable:
    """Semidistance from each projected Bresse sample to the Timoshenko sample.

    All samples start from the same seeded ensemble (projected for the
    Timoshenko system). Unset protocol times are derived from a pilot decay
    fit at zero curvature.
    """
    if not forcing.compatible_with_timoshenko:
        raise ConfigurationError("compatibility condition violated: f1 and f2 must not depend on w")
    if not damping.globally_lipschitz:
        raise PreconditionError("upper semicontinuity experiment needs globally Lipschitz damping")
    p0 = params.with_ell(0.0)
    ensemble = initial_ensemble(grid, p0, [protocol.energy], protocol.n_initial, protocol.seed)
    if None in (protocol.t_transient, protocol.t_harvest, protocol.stride_time):
        alpha = pilot_decay_rate(p0, forcing, damping, ensemble[0], protocol.pilot_time, cfg,
                                 observer)
        protocol = protocol.resolved(alpha)
    ref = harvest_attractor(p0, forcing, damping, ensemble, protocol, cfg, timoshenko=True,
                            workers=workers, observer=observer)
    ref_points = ref.points("H0")
    dists = []
    for ell in ells:
        sample = harvest_attractor(params.with_ell(ell), forcing, damping, ensemble, protocol, cfg,
                                   workers=workers, observer=observer)
        dists.append(hausdorff_semidistance(sample.points("H0"), ref_points))
    r0 = max(math.sqrt(norm_H0_sq(project(y))) for y in ensemble)
    return SemicontinuityTable([float(e) for e in ells], dists, protocol.harvest_tol_rel * r0,
                               noise_rtol, protocol)


def regularity_proxies(states: Iterable, params: BeamParams, forcing: ForcingModel,
                       damping: Optional[DampingModel]) -> dict:
    """Sup over states of |q_tt|, |grad q_t| and |Dxx q| in discrete L^2.

    Bounded values along harvested trajectories are the numerical stand-in
    for the extra regularity of trajectories on the attractor; the
    discrete-to-continuum gap is not addressed.
    """
    out = {"acceleration": 0.0, "velocity_gradient": 0.0, "second_derivative": 0.0}
    ops = None
    for s in states:
        if ops is None:
            ops = assemble(params, s.grid)
        h = s.grid.h
        a = acceleration(s, ops, forcing, damping)
        out["acceleration"] = max(out["acceleration"], math.sqrt(l2_sq(a.ravel(), h)))
        gv = sum(l2_sq(midpoint_diff(s.v[:, c], h), h) for c in range(s.v.shape[1]))
        out["velocity_gradient"] = max(out["velocity_gradient"], math.sqrt(gv))
        d2 = sum(l2_sq(ops.Dxx @ s.q[:, c], h) for c in range(s.q.shape[1]))
        out["second_derivative"] = max(out["second_derivative"], math.sqrt(d2))
    return out
