"""Physical parameters, constitutive laws and analytic constants for the damped Bresse beam.

Forcing potentials and damping laws are plain vectorised callables so that
they can be evaluated on whole nodal arrays at once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import qmc

Array = np.ndarray


@dataclass(frozen=True)
class BeamParams:
    rho1: float = 1.0
    rho2: float = 1.0
    b: float = 1.0
    k: float = 1.0
    k0: float = 1.0
    L: float = 1.0
    ell: float = 0.0

    def __post_init__(self):
        for name in ("rho1", "rho2", "b", "k", "k0", "L"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and > 0, got {value!r}")
        if not (np.isfinite(self.ell) and self.ell >= 0):
            raise ValueError(f"ell must be finite and >= 0, got {self.ell!r}")

    @property
    def ell_cap(self) -> float:
        """Curvature cap pi/(2L) of the uniform regime."""
        return math.pi / (2.0 * self.L)

    @property
    def uniform_regime(self) -> bool:
        return self.ell < self.ell_cap

    @property
    def wave_speeds(self) -> tuple[float, float, float]:
        return (math.sqrt(self.k / self.rho1), math.sqrt(self.b / self.rho2),
                math.sqrt(self.k0 / self.rho1))

    def with_ell(self, ell: float) -> "BeamParams":
        return replace(self, ell=float(ell))


@dataclass(frozen=True)
class ForcingModel:
    """Gradient-type nonlinear forcing ``(f1, f2, f3) = grad F``.

    ``gradient`` returns the tuple ``(f1, f2, f3)``; ``hessian`` (optional)
    returns an array of shape ``(..., 3, 3)``. Without a hessian, Newton
    solvers fall back to central differences of the gradient.
    """

    potential: Callable[[Array, Array, Array], Array]
    gradient: Callable[[Array, Array, Array], tuple]
    beta: float = 0.0
    mF: float = 0.0
    p: float = 1.0
    depends_on_w: tuple[bool, bool] = (False, False)
    hessian: Optional[Callable[[Array, Array, Array], Array]] = None
    name: str = "custom"

    def __post_init__(self):
        if self.beta < 0 or self.mF < 0:
            raise ValueError("beta and mF must be >= 0")
        if self.p < 1:
            raise ValueError("growth exponent p must be >= 1")

    @property
    def compatible_with_timoshenko(self) -> bool:
        return not any(self.depends_on_w)

    def grad_array(self, u, v, w) -> Array:
        f1, f2, f3 = self.gradient(u, v, w)
        shape = np.broadcast(np.asarray(u), np.asarray(v), np.asarray(w)).shape
        return np.stack([np.broadcast_to(f, shape) for f in (f1, f2, f3)], axis=-1).astype(float)

    def hess_array(self, u, v, w, eps: float = 1e-6) -> Array:
        if self.hessian is not None:
            return np.asarray(self.hessian(u, v, w), dtype=float)
        u, v, w = (np.asarray(a, dtype=float) for a in (u, v, w))
        cols = []
        for i in range(3):
            shift = [np.zeros_like(u), np.zeros_like(u), np.zeros_like(u)]
            shift[i] = np.full_like(u, eps)
            plus = self.grad_array(u + shift[0], v + shift[1], w + shift[2])
            minus = self.grad_array(u - shift[0], v - shift[1], w - shift[2])
            cols.append((plus - minus) / (2 * eps))
        H = np.stack(cols, axis=-1)
        return 0.5 * (H + np.swapaxes(H, -1, -2))


def builtin_forcing(alpha1: float = 0.0, alpha2: float = 0.0) -> ForcingModel:
    """F(u,v,w) = |u+v|^4 - |u+v|^2 + alpha1 |uv|^2 + alpha2 |w|^3."""
    if alpha1 < 0 or alpha2 < 0:
        raise ValueError("alpha1 and alpha2 must be >= 0")
    a1, a2 = float(alpha1), float(alpha2)

    def potential(u, v, w):
        z = u + v
        return z**4 - z**2 + a1 * (u * v) ** 2 + a2 * np.abs(w) ** 3

    def gradient(u, v, w):
        z = u + v
        common = 4 * z**3 - 2 * z
        return (common + 2 * a1 * u * v**2,
                common + 2 * a1 * u**2 * v,
                3 * a2 * np.abs(w) * w)

    def hessian(u, v, w):
        u, v, w = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (u, v, w)))
        c = 12 * (u + v) ** 2 - 2
        H = np.zeros(u.shape + (3, 3))
        H[..., 0, 0] = c + 2 * a1 * v**2
        H[..., 1, 1] = c + 2 * a1 * u**2
        H[..., 0, 1] = H[..., 1, 0] = c + 4 * a1 * u * v
        H[..., 2, 2] = 6 * a2 * np.abs(w)
        return H

    return ForcingModel(potential, gradient, beta=0.0, mF=0.25, p=3.0,
                        depends_on_w=(False, False), hessian=hessian,
                        name=f"builtin(alpha1={a1:g}, alpha2={a2:g})")


def zero_forcing() -> ForcingModel:
    def potential(u, v, w):
        return np.zeros(np.broadcast(np.asarray(u), np.asarray(v), np.asarray(w)).shape)

    def gradient(u, v, w):
        z = potential(u, v, w)
        return (z, z, z)

    def hessian(u, v, w):
        return np.zeros(np.broadcast(np.asarray(u), np.asarray(v), np.asarray(w)).shape + (3, 3))

    return ForcingModel(potential, gradient, hessian=hessian, name="zero")


def quadratic_forcing(beta: float) -> ForcingModel:
    """F = -beta (u^2 + v^2 + w^2): the extreme case of the lower bound with m_F = 0."""
    if beta < 0:
        raise ValueError("beta must be >= 0")
    bt = float(beta)

    def potential(u, v, w):
        return -bt * (u**2 + v**2 + w**2)

    def gradient(u, v, w):
        return (-2 * bt * u, -2 * bt * v, -2 * bt * w)

    def hessian(u, v, w):
        shape = np.broadcast(np.asarray(u), np.asarray(v), np.asarray(w)).shape
        return np.broadcast_to(-2 * bt * np.eye(3), shape + (3, 3)).copy()

    return ForcingModel(potential, gradient, beta=bt, mF=0.0, p=1.0, hessian=hessian,
                        name=f"quadratic(beta={bt:g})")


def coupled_forcing(c: float = 1.0) -> ForcingModel:
    """Built-in double well plus c u^2 w^2; f1 depends on w."""
    base = builtin_forcing(0.0, 0.0)
    cc = float(c)

    def potential(u, v, w):
        return base.potential(u, v, w) + cc * u**2 * w**2

    def gradient(u, v, w):
        f1, f2, _ = base.gradient(u, v, w)
        return (f1 + 2 * cc * u * w**2, f2, 2 * cc * u**2 * w)

    return ForcingModel(potential, gradient, beta=0.0, mF=0.25, p=3.0,
                        depends_on_w=(True, False), name=f"coupled(c={cc:g})")


@dataclass(frozen=True)
class DampingModel:
    """Three monotone scalar damping laws with sector constants."""

    g: tuple[Callable[[Array], Array], Callable[[Array], Array], Callable[[Array], Array]]
    m: tuple[float, float, float]
    M: tuple[float, float, float]
    globally_lipschitz: bool = False
    dg: Optional[tuple] = None
    name: str = "custom"

    def __post_init__(self):
        if len(self.g) != 3 or len(self.m) != 3 or len(self.M) != 3:
            raise ValueError("damping needs exactly three laws and sector constants")
        if any(not (mi > 0) for mi in self.m) or any(not (Mi > 0) for Mi in self.M):
            raise ValueError("sector constants m_i, M_i must be > 0")

    def __call__(self, i: int, s: Array) -> Array:
        return np.asarray(self.g[i](np.asarray(s, dtype=float)), dtype=float)

    def derivative(self, i: int, s: Array, eps: float = 1e-6) -> Array:
        s = np.asarray(s, dtype=float)
        if self.dg is not None and self.dg[i] is not None:
            return np.asarray(self.dg[i](s), dtype=float) * np.ones_like(s)
        return (self.g[i](s + eps) - self.g[i](s - eps)) / (2 * eps)


def _triple(c) -> tuple[float, float, float]:
    if np.ndim(c) == 0:
        return (float(c),) * 3
    c = tuple(float(x) for x in c)
    if len(c) != 3:
        raise ValueError("expected a scalar or three coefficients")
    return c


def linear_damping(c: float | Sequence[float] = 1.0) -> DampingModel:
    cs = _triple(c)
    g = tuple((lambda s, ci=ci: ci * s) for ci in cs)
    dg = tuple((lambda s, ci=ci: np.full_like(s, ci)) for ci in cs)
    return DampingModel(g, cs, cs, globally_lipschitz=True, dg=dg,
                        name="linear(" + ",".join(f"{ci:g}" for ci in cs) + ")")


def cubic_damping(a: float = 1.0, c: float = 1.0, clip: Optional[float] = None) -> DampingModel:
    """g(s) = a s + c s^3, optionally continued linearly beyond |s| = clip.

    The clipped law is C^1 and globally Lipschitz with a <= g' <= a + 3 c clip^2.
    Without a clip the upper sector constant is infinite.
    """
    if a <= 0 or c < 0:
        raise ValueError("need a > 0 and c >= 0")
    if clip is None:
        def g(s):
            return a * s + c * s**3

        def dg(s):
            return a + 3 * c * s**2

        return DampingModel((g,) * 3, (a,) * 3, (math.inf,) * 3, globally_lipschitz=False,
                            dg=(dg,) * 3, name=f"cubic(a={a:g}, c={c:g})")
    if clip <= 0:
        raise ValueError("clip must be > 0")

    def g(s):
        inner = np.clip(s, -clip, clip)
        return a * s + c * (inner**3 + 3 * clip**2 * (s - inner))

    def dg(s):
        return a + 3 * c * np.minimum(s**2, clip**2)

    top = a + 3 * c * clip**2
    return DampingModel((g,) * 3, (a,) * 3, (top,) * 3, globally_lipschitz=True,
                        dg=(dg,) * 3, name=f"cubic(a={a:g}, c={c:g}, clip={clip:g})")


@dataclass(frozen=True)
class AnalyticConstants:
    gamma1: float
    gamma2: float
    gamma3: float
    beta0: float
    ell0: float


def beta_cap(gamma3: float, L: float) -> float:
    """Largest admissible lower-bound coefficient pi^2 / (2 gamma3 L^2)."""
    return math.pi**2 / (2.0 * gamma3 * L**2)


class RegimeError(ValueError):
    """Curvature outside the uniform regime ell < pi/(2L)."""


def analytic_constants(params: BeamParams, ell0: float, beta: float = 0.0) -> AnalyticConstants:
    """Norm-equivalence and coercivity constants, uniform in ell on [0, ell0].

    gamma3 is the closed-form bound obtained from Poincare's inequality,
    divided by min(b, k, k0) when some stiffness is below one so that the
    weighted inequality holds for arbitrary coefficients.
    """
    L = params.L
    if not (0 <= ell0 < params.ell_cap):
        raise RegimeError(f"ell0={ell0!r} outside the uniform regime [0, pi/(2L)={params.ell_cap:.6g})")
    if params.ell > ell0:
        raise RegimeError(f"params.ell={params.ell!r} exceeds ell0={ell0!r}")
    c = L**2 / math.pi**2
    prefactor = 1.0 - 4.0 * ell0**2 * c
    gamma3 = max(1.0 + 4.0 * c, 2.0) / prefactor
    gamma3 /= min(1.0, params.b, params.k, params.k0)
    gamma2 = max(1.0 / min(params.rho1, params.rho2), gamma3)
    # |phi_x + psi + ell w|^2 <= 3(...), |w_x - ell phi|^2 <= 2(...), then Poincare
    gamma1 = max(params.rho1, params.rho2,
                 3 * params.k + 2 * params.k0 * ell0**2 * c,
                 params.b + 3 * params.k * c,
                 2 * params.k0 + 3 * params.k * ell0**2 * c)
    beta0 = 1.0 - 2.0 * beta * gamma3 * c
    return AnalyticConstants(gamma1=gamma1, gamma2=gamma2, gamma3=gamma3, beta0=beta0, ell0=float(ell0))


# ---------------------------------------------------------------------------
# hypothesis screening


@dataclass(frozen=True)
class SamplingSpec:
    box: float = 2.0
    n_samples: int = 10_000
    seed: int = 0
    fd_step: float = 1e-5
    fd_rtol: float = 1e-6

    def __post_init__(self):
        if self.n_samples < 1 or self.box <= 0:
            raise ValueError("sampling spec must be nonempty")


@dataclass
class HypothesisCheck:
    name: str
    passed: bool
    worst_value: float
    worst_point: Optional[tuple] = None
    note: str = ""


@dataclass
class ValidationReport:
    checks: list[HypothesisCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> HypothesisCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {c.name: {"passed": c.passed, "worst_value": c.worst_value,
                         "worst_point": list(c.worst_point) if c.worst_point is not None else None,
                         "note": c.note}
                for c in self.checks}


def _sobol_points(d: int, spec: SamplingSpec) -> Array:
    m = max(1, math.ceil(math.log2(spec.n_samples)))
    pts = qmc.Sobol(d=d, scramble=True, seed=spec.seed).random_base2(m)[: spec.n_samples]
    return spec.box * (2.0 * pts - 1.0)


def _worst(values: Array, points: Array) -> tuple[float, tuple]:
    i = int(np.argmin(values))
    return float(values[i]), tuple(float(x) for x in np.atleast_1d(points[i]))


def validate_hypotheses(params: BeamParams, forcing: ForcingModel, damping: DampingModel,
                        samples: SamplingSpec = SamplingSpec(),
                        ell0: Optional[float] = None) -> ValidationReport:
    """Screen the forcing and damping hypotheses on a low-discrepancy sample.

    Every check reports a margin (``worst_value``); a check passes when the
    worst margin is nonnegative. Passing is necessary, not sufficient.
    """
    report = ValidationReport()
    X = _sobol_points(3, samples)
    u, v, w = X[:, 0], X[:, 1], X[:, 2]
    r2 = u**2 + v**2 + w**2
    F = np.asarray(forcing.potential(u, v, w), dtype=float)
    G = forcing.grad_array(u, v, w)

    # gradient consistency by central differences
    eps = samples.fd_step
    margins = np.empty(len(u))
    fd = np.empty_like(G)
    for i in range(3):
        e = np.zeros(3)
        e[i] = eps
        fd[:, i] = (forcing.potential(u + e[0], v + e[1], w + e[2])
                    - forcing.potential(u - e[0], v - e[1], w - e[2])) / (2 * eps)
    rel = np.max(np.abs(fd - G) / np.maximum(1.0, np.abs(G)), axis=1)
    margins = samples.fd_rtol - rel
    val, pt = _worst(margins, X)
    report.checks.append(HypothesisCheck("gradient", val >= 0, val, pt, "relative FD error margin"))

    lower = F + forcing.beta * r2 + forcing.mF
    val, pt = _worst(lower, X)
    report.checks.append(HypothesisCheck("lower-bound", val >= 0, val, pt,
                                         "F + beta|x|^2 + mF"))

    ell0 = params.ell if ell0 is None else ell0
    try:
        consts = analytic_constants(params, ell0, forcing.beta)
        cap = beta_cap(consts.gamma3, params.L)
        margin = cap - forcing.beta
        report.checks.append(HypothesisCheck("beta-cap", margin > 0, margin, None,
                                             f"beta < {cap:.6g}"))
    except RegimeError as exc:
        report.checks.append(HypothesisCheck("beta-cap", False, -math.inf, None, str(exc)))

    H = forcing.hess_array(u, v, w)
    size = np.linalg.norm(H, axis=-1).max(axis=-1)
    scale = 1.0 + sum(np.abs(a) ** (forcing.p - 1) for a in (u, v, w))
    cf = float(np.max(size / scale))
    report.checks.append(HypothesisCheck("growth", bool(np.isfinite(cf)), cf, None,
                                         "estimated C_f (screened, not a tight constant)"))

    fF = np.einsum("ij,ij->i", G, X) - F + forcing.beta * r2 + forcing.mF
    val, pt = _worst(fF, X)
    report.checks.append(HypothesisCheck("gradient-minus-potential", val >= 0, val, pt,
                                         "grad F . x - F + beta|x|^2 + mF"))

    s = np.sort(np.concatenate([_sobol_points(1, samples)[:, 0], [0.0]]))
    big = np.abs(s) > 1
    hg1, hg2, hg3 = [], [], []
    for i in range(3):
        gs = damping(i, s)
        at_zero = abs(float(damping(i, np.array([0.0]))[0]))
        # margin: smallest increment, or minus |g(0)| when the origin is missed
        hg1.append(-at_zero if at_zero > 0 else float(np.min(np.diff(gs))))
        sb, prod = s[big], (gs * s)[big]
        sector = np.minimum(prod - damping.m[i] * sb**2, damping.M[i] * sb**2 - prod)
        hg2.append(float(np.min(sector)) if big.any() else 0.0)
        if damping.globally_lipschitz:
            d = damping.derivative(i, s)
            hg3.append(float(min(np.min(d - damping.m[i]), np.min(damping.M[i] - d))))
    v1 = min(hg1)
    report.checks.append(HypothesisCheck("HG1", v1 > 0, v1, None, "g(0)=0 and strictly increasing"))
    v2 = min(hg2)
    report.checks.append(HypothesisCheck("HG2", bool(np.isfinite(max(damping.M))) and v2 >= 0, v2,
                                         None, "m s^2 <= g(s) s <= M s^2 for |s|>1"))
    if damping.globally_lipschitz:
        v3 = min(hg3)
        report.checks.append(HypothesisCheck("HG3", v3 >= 0, v3, None, "m <= g'(s) <= M"))
    return report
