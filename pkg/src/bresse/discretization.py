"""Finite differences for the Bresse elastic operator with Dirichlet ends.

Unknowns live on the interior nodes ``x_j = j h``, ``j = 1..n``. Strains
(``psi_x``, ``phi_x + psi + ell w``, ``w_x - ell phi``) are evaluated on the
``n + 1`` cell midpoints: derivatives by forward differences, zeroth-order
terms by two-point averages. The stiffness matrix is the Hessian of the
resulting discrete strain energy, so it is symmetric by construction.

Nodal dofs are interleaved, ``dof = n_fields * j + c`` with ``c`` the field
index (0 = phi, 1 = psi, 2 = w).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .model import BeamParams, ForcingModel

FIELDS = ("phi", "psi", "w")


@dataclass(frozen=True)
class Grid:
    L: float
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"need at least 2 interior nodes, got n={self.n!r}")
        if not self.L > 0:
            raise ValueError("L must be > 0")

    @property
    def h(self) -> float:
        return self.L / (self.n + 1)

    @property
    def nodes(self) -> np.ndarray:
        return self.h * np.arange(1, self.n + 1)

    @property
    def all_nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.L, self.n + 2)

    def sine_mode(self, m: int = 1) -> np.ndarray:
        return np.sin(m * np.pi * self.nodes / self.L)


def make_grid(L: float, n: int) -> Grid:
    return Grid(float(L), int(n))


def _as_vec(a, n):
    a = np.array(a, dtype=float).reshape(-1)
    if a.shape != (n,):
        raise ValueError(f"expected a vector of length {n}, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("state entries must be finite")
    return a


@dataclass(frozen=True)
class State:
    """Point of the discrete phase space: three displacements and three velocities."""

    grid: Grid
    phi: np.ndarray
    psi: np.ndarray
    w: np.ndarray
    phit: np.ndarray
    psit: np.ndarray
    wt: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        n = self.grid.n
        for name in ("phi", "psi", "w", "phit", "psit", "wt"):
            object.__setattr__(self, name, _as_vec(getattr(self, name), n))
        if self.t < 0:
            raise ValueError("t must be >= 0")

    n_fields = 3

    @classmethod
    def zeros(cls, grid: Grid) -> "State":
        z = np.zeros(grid.n)
        return cls(grid, z, z, z, z, z, z)

    @classmethod
    def from_arrays(cls, grid: Grid, q: np.ndarray, v: np.ndarray, t: float = 0.0) -> "State":
        """Build from ``(n, 3)`` displacement and velocity arrays."""
        q = np.asarray(q).reshape(grid.n, 3)
        v = np.asarray(v).reshape(grid.n, 3)
        return cls(grid, q[:, 0], q[:, 1], q[:, 2], v[:, 0], v[:, 1], v[:, 2], t)

    @property
    def q(self) -> np.ndarray:
        return np.column_stack([self.phi, self.psi, self.w])

    @property
    def v(self) -> np.ndarray:
        return np.column_stack([self.phit, self.psit, self.wt])

    def with_time(self, t: float) -> "State":
        return replace(self, t=float(t))


@dataclass(frozen=True)
class TimoshenkoState:
    grid: Grid
    phi: np.ndarray
    psi: np.ndarray
    phit: np.ndarray
    psit: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        n = self.grid.n
        for name in ("phi", "psi", "phit", "psit"):
            object.__setattr__(self, name, _as_vec(getattr(self, name), n))

    n_fields = 2

    @classmethod
    def zeros(cls, grid: Grid) -> "TimoshenkoState":
        z = np.zeros(grid.n)
        return cls(grid, z, z, z, z)

    @classmethod
    def from_arrays(cls, grid, q, v, t=0.0) -> "TimoshenkoState":
        q = np.asarray(q).reshape(grid.n, 2)
        v = np.asarray(v).reshape(grid.n, 2)
        return cls(grid, q[:, 0], q[:, 1], v[:, 0], v[:, 1], t)

    @property
    def q(self) -> np.ndarray:
        return np.column_stack([self.phi, self.psi])

    @property
    def v(self) -> np.ndarray:
        return np.column_stack([self.phit, self.psit])


def project(state: State) -> TimoshenkoState:
    """Drop the longitudinal channel: (phi, psi, w, .., .., ..) -> (phi, psi, phi_t, psi_t)."""
    return TimoshenkoState(state.grid, state.phi, state.psi, state.phit, state.psit, state.t)


def lift(state: TimoshenkoState) -> State:
    z = np.zeros(state.grid.n)
    return State(state.grid, state.phi, state.psi, z, state.phit, state.psit, z, state.t)


# ---------------------------------------------------------------------------
# stencils on padded vectors


def midpoint_diff(u: np.ndarray, h: float) -> np.ndarray:
    """Forward differences of a Dirichlet vector: values at the n+1 midpoints."""
    p = np.concatenate([[0.0], u, [0.0]])
    return np.diff(p) / h


def midpoint_avg(u: np.ndarray) -> np.ndarray:
    p = np.concatenate([[0.0], u, [0.0]])
    return 0.5 * (p[1:] + p[:-1])


def strains(params: BeamParams, grid: Grid, phi, psi, w):
    """Bending, shear and axial strains at the midpoints."""
    h, ell = grid.h, params.ell
    bend = midpoint_diff(psi, h)
    shear = midpoint_diff(phi, h) + midpoint_avg(psi) + ell * midpoint_avg(w)
    axial = midpoint_diff(w, h) - ell * midpoint_avg(phi)
    return bend, shear, axial


def l2_sq(u: np.ndarray, h: float) -> float:
    """Discrete L^2 norm squared; trapezoidal at nodes (zero ends) and midpoint rule on cells coincide with h * sum."""
    return float(h * np.dot(u, u))


def elastic_form(params: BeamParams, grid: Grid, phi, psi, w) -> float:
    """b|psi_x|^2 + k|phi_x + psi + ell w|^2 + k0|w_x - ell phi|^2, discretely."""
    bend, shear, axial = strains(params, grid, phi, psi, w)
    h = grid.h
    return params.b * l2_sq(bend, h) + params.k * l2_sq(shear, h) + params.k0 * l2_sq(axial, h)


def h1_seminorm_sq(grid: Grid, *fields) -> float:
    return sum(l2_sq(midpoint_diff(u, grid.h), grid.h) for u in fields)


def norm_H_sq(state: State) -> float:
    g = state.grid
    return (h1_seminorm_sq(g, state.phi, state.psi, state.w)
            + l2_sq(state.phit, g.h) + l2_sq(state.psit, g.h) + l2_sq(state.wt, g.h))


def norm_Hl_sq(params: BeamParams, state: State) -> float:
    g = state.grid
    kinetic = (params.rho1 * l2_sq(state.phit, g.h) + params.rho2 * l2_sq(state.psit, g.h)
               + params.rho1 * l2_sq(state.wt, g.h))
    return kinetic + elastic_form(params, g, state.phi, state.psi, state.w)


def discrete_norm_H(state: State) -> float:
    return float(np.sqrt(norm_H_sq(state)))


def discrete_norm_Hl(params: BeamParams, state: State) -> float:
    return float(np.sqrt(norm_Hl_sq(params, state)))


def norm_H0_sq(state: TimoshenkoState) -> float:
    g = state.grid
    return h1_seminorm_sq(g, state.phi, state.psi) + l2_sq(state.phit, g.h) + l2_sq(state.psit, g.h)


def embed(state, norm: str = "H", params: BeamParams | None = None) -> np.ndarray:
    """Flat vector whose Euclidean length is the selected discrete norm of ``state``.

    ``norm`` is ``"H"`` or ``"Hl"`` for Bresse states and ``"H0"`` for
    Timoshenko states (Bresse states are projected first).
    """
    g = state.grid
    s = np.sqrt(g.h)
    if norm == "H0":
        if isinstance(state, State):
            state = project(state)
        parts = [midpoint_diff(state.phi, g.h), midpoint_diff(state.psi, g.h), state.phit, state.psit]
    elif norm == "H":
        parts = [midpoint_diff(u, g.h) for u in (state.phi, state.psi, state.w)]
        parts += [state.phit, state.psit, state.wt]
    elif norm == "Hl":
        if params is None:
            raise ValueError("the ell-dependent norm needs BeamParams")
        bend, shear, axial = strains(params, g, state.phi, state.psi, state.w)
        parts = [np.sqrt(params.rho1) * state.phit, np.sqrt(params.rho2) * state.psit,
                 np.sqrt(params.rho1) * state.wt, np.sqrt(params.b) * bend,
                 np.sqrt(params.k) * shear, np.sqrt(params.k0) * axial]
    else:
        raise ValueError(f"unknown norm {norm!r}")
    return s * np.concatenate(parts)


def quad_potential(forcing: ForcingModel, state) -> float:
    """Trapezoidal integral of F(phi, psi, w) over [0, L] with zero end values."""
    g = state.grid
    w = getattr(state, "w", np.zeros(g.n))
    interior = np.asarray(forcing.potential(state.phi, state.psi, w), dtype=float)
    ends = float(np.asarray(forcing.potential(0.0, 0.0, 0.0)))
    return float(g.h * (interior.sum() + ends))


# ---------------------------------------------------------------------------
# assembled operators


def _diff_matrix(n: int, h: float) -> sp.csr_matrix:
    return (sp.eye(n + 1, n, k=0) - sp.eye(n + 1, n, k=-1)).tocsr() / h


def _avg_matrix(n: int) -> sp.csr_matrix:
    return (0.5 * (sp.eye(n + 1, n, k=0) + sp.eye(n + 1, n, k=-1))).tocsr()


def _on_field(P, c: int, nf: int):
    e = np.zeros((1, nf))
    e[0, c] = 1.0
    return sp.kron(P, sp.csr_matrix(e), format="csr")


@dataclass(frozen=True)
class DiscreteOperators:
    params: BeamParams
    grid: Grid
    D: sp.csr_matrix = field(repr=False)
    A: sp.csr_matrix = field(repr=False)
    Dx: sp.csr_matrix = field(repr=False)
    Dxx: sp.csr_matrix = field(repr=False)
    stiffness: sp.csr_matrix = field(repr=False)

    n_fields = 3

    def apply(self, phi, psi, w):
        q = np.column_stack([phi, psi, w]).reshape(-1)
        r = (self.stiffness @ q).reshape(-1, 3)
        return r[:, 0], r[:, 1], r[:, 2]

    def quadratic_form(self, phi, psi, w) -> float:
        q = np.column_stack([phi, psi, w]).reshape(-1)
        return float(self.grid.h * q @ (self.stiffness @ q))

    @cached_property
    def timoshenko_stiffness(self) -> sp.csr_matrix:
        """(phi, psi) block of the stiffness at zero curvature, interleaved with 2 fields."""
        return _stiffness(self.params.with_ell(0.0), self.grid, self.D, self.A, nf=2)


def _stiffness(params: BeamParams, grid: Grid, D, A, nf: int = 3) -> sp.csr_matrix:
    ell = params.ell
    bend = _on_field(D, 1, nf)
    shear = _on_field(D, 0, nf) + _on_field(A, 1, nf)
    K = params.b * (bend.T @ bend)
    if nf == 3:
        shear = shear + ell * _on_field(A, 2, nf)
        axial = _on_field(D, 2, nf) - ell * _on_field(A, 0, nf)
        K = K + params.k0 * (axial.T @ axial)
    K = K + params.k * (shear.T @ shear)
    return K.tocsr()


def assemble(params: BeamParams, grid: Grid) -> DiscreteOperators:
    if abs(params.L - grid.L) > 1e-12 * params.L:
        raise ValueError("grid length differs from params.L")
    n, h = grid.n, grid.h
    D = _diff_matrix(n, h)
    A = _avg_matrix(n)
    Dx = ((sp.eye(n, k=1) - sp.eye(n, k=-1)) / (2 * h)).tocsr()
    Dxx = ((sp.eye(n, k=1) - 2 * sp.eye(n) + sp.eye(n, k=-1)) / h**2).tocsr()
    K = _stiffness(params, grid, D, A)
    return DiscreteOperators(params, grid, D, A, Dx, Dxx, K)


def to_banded(M: sp.spmatrix, bw: int) -> np.ndarray:
    """LAPACK banded storage with ``bw`` sub- and super-diagonals."""
    M = M.tocoo()
    N = M.shape[0]
    ab = np.zeros((2 * bw + 1, N))
    ab[bw + M.row - M.col, M.col] += M.data
    return ab


def norm_equivalence_violations(params: BeamParams, constants, states, rtol: float = 1e-12) -> dict:
    """Count states violating the three sampled norm inequalities.

    ``h1 <= gamma3 * elastic`` on displacements, ``Hl <= gamma1 * H`` and
    ``H <= gamma2 * Hl`` on full states. Worst ratios are reported too.
    """
    out = {"gamma3": 0, "gamma1": 0, "gamma2": 0,
           "worst_gamma3": 0.0, "worst_gamma1": 0.0, "worst_gamma2": 0.0}
    for s in states:
        h1 = h1_seminorm_sq(s.grid, s.phi, s.psi, s.w)
        el = elastic_form(params, s.grid, s.phi, s.psi, s.w)
        H, Hl = norm_H_sq(s), norm_Hl_sq(params, s)
        for key, lhs, rhs in (("gamma3", h1, constants.gamma3 * el),
                              ("gamma1", Hl, constants.gamma1 * H),
                              ("gamma2", H, constants.gamma2 * Hl)):
            if lhs > rhs * (1 + rtol):
                out[key] += 1
            if rhs > 0:
                out["worst_" + key] = max(out["worst_" + key], lhs / rhs)
    return out
