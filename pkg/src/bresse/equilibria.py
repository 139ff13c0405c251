"""Stationary solutions of the discrete Bresse system.

Solves ``K q + f(q) = 0`` by Newton's method with a halving line search, and
enumerates equilibria from a deterministic family of starting guesses.
"""
from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import LinAlgError
from scipy.linalg.lapack import dgbtrf, dgbtrs
from scipy.sparse.linalg import LinearOperator, onenormest

from .discretization import Grid, State, assemble, h1_seminorm_sq, l2_sq, to_banded
from .model import AnalyticConstants, BeamParams, ForcingModel


class SingularJacobianError(ArithmeticError):
    def __init__(self, message, condition: float):
        super().__init__(message)
        self.condition = condition


class NonConvergenceError(ArithmeticError):
    def __init__(self, message, residual: float):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class Equilibrium:
    grid: Grid
    phi: np.ndarray
    psi: np.ndarray
    w: np.ndarray
    residual_norm: float
    h1_seminorm_sq: float
    iterations: int = 0
    condition: float = math.nan

    @property
    def q(self) -> np.ndarray:
        return np.column_stack([self.phi, self.psi, self.w])

    def as_state(self) -> State:
        z = np.zeros(self.grid.n)
        return State(self.grid, self.phi, self.psi, self.w, z, z, z)

    def to_dict(self) -> dict:
        return {"phi": self.phi.tolist(), "psi": self.psi.tolist(), "w": self.w.tolist(),
                "residual_norm": self.residual_norm, "h1_seminorm_sq": self.h1_seminorm_sq,
                "iterations": self.iterations, "condition": self.condition}


def _residual(K, forcing, q):
    n = q.size // 3
    Q = q.reshape(n, 3)
    return K @ q + forcing.grad_array(Q[:, 0], Q[:, 1], Q[:, 2]).reshape(-1)


def _jacobian_banded(K_banded, forcing, q):
    n = q.size // 3
    Q = q.reshape(n, 3)
    H = forcing.hess_array(Q[:, 0], Q[:, 1], Q[:, 2])
    ab = K_banded.copy()
    bw = (ab.shape[0] - 1) // 2
    for a in range(3):
        for b in range(3):
            ab[bw + a - b, b::3] += H[:, a, b]
    return ab


class _BandedLU:
    """LU of a banded matrix with a 1-norm condition estimate."""

    def __init__(self, ab):
        self.bw = bw = (ab.shape[0] - 1) // 2
        self.N = N = ab.shape[1]
        work = np.zeros((3 * bw + 1, N))
        work[bw:] = ab
        self.lu, self.piv, info = dgbtrf(work, bw, bw)
        self.norm1 = float(np.abs(ab).sum(axis=0).max())
        self.singular = info > 0

    def solve(self, rhs, trans: int = 0):
        x, info = dgbtrs(self.lu, self.bw, self.bw, rhs, self.piv, trans=trans)
        if info != 0:
            raise LinAlgError("banded solve failed")
        return x

    def condition(self) -> float:
        if self.singular:
            return math.inf
        op = LinearOperator((self.N, self.N), matvec=self.solve,
                            rmatvec=lambda y: self.solve(y, trans=1), dtype=float)
        with np.errstate(all="ignore"):
            c = self.norm1 * onenormest(op)
        return float(c) if np.isfinite(c) else math.inf


def solve_equilibrium(params: BeamParams, forcing: ForcingModel, grid: Grid, guess,
                      tol: float = 1e-10, max_iters: int = 50,
                      cond_max: float = 1e12) -> Equilibrium:
    """Newton iteration on the stationary equations from ``guess = (phi, psi, w)``.

    Convergence is measured in the discrete L^2 norm of the residual. A
    Jacobian whose estimated 1-norm condition number exceeds ``cond_max``
    is treated as singular.
    """
    if not tol > 0:
        raise ValueError("tol must be > 0")
    guess = np.column_stack([np.asarray(g, dtype=float) for g in guess])
    if guess.shape != (grid.n, 3) or not np.all(np.isfinite(guess)):
        raise ValueError("guess must be three finite vectors of length n")
    ops = assemble(params, grid)
    K = ops.stiffness
    Kb = to_banded(K, 5)
    h = grid.h
    q = guess.reshape(-1).copy()
    R = _residual(K, forcing, q)
    res = math.sqrt(l2_sq(R, h))
    it = 0
    while res > tol:
        if it >= max_iters:
            raise NonConvergenceError(f"no convergence after {max_iters} iterations "
                                      f"(residual {res:.3e})", res)
        lu = _BandedLU(_jacobian_banded(Kb, forcing, q))
        cond = lu.condition()
        if cond > cond_max:
            raise SingularJacobianError(f"singular Jacobian (condition ~ {cond:.3e})", cond)
        dq = lu.solve(-R)
        if not np.all(np.isfinite(dq)):
            raise SingularJacobianError("non-finite Newton update", cond)
        lam = 1.0
        for _ in range(31):
            q_new = q + lam * dq
            R_new = _residual(K, forcing, q_new)
            res_new = math.sqrt(l2_sq(R_new, h))
            if res_new < (1.0 - 1e-4 * lam) * res or res_new <= tol:
                break
            lam *= 0.5
        else:
            raise NonConvergenceError(f"line search stalled at residual {res:.3e}", res)
        q, R, res = q_new, R_new, res_new
        it += 1
    Q = q.reshape(grid.n, 3)
    cond = _BandedLU(_jacobian_banded(Kb, forcing, q)).condition()
    return Equilibrium(grid, Q[:, 0].copy(), Q[:, 1].copy(), Q[:, 2].copy(), res,
                       h1_seminorm_sq(grid, Q[:, 0], Q[:, 1], Q[:, 2]), it, cond)


@dataclass(frozen=True)
class BoundReport:
    lhs: float
    rhs: float
    prefactor: float
    passed: bool
    degenerate: bool

    def to_dict(self) -> dict:
        return {"lhs": self.lhs, "rhs": self.rhs, "prefactor": self.prefactor,
                "passed": self.passed, "degenerate": self.degenerate}


def check_equilibrium_bound(eq: Equilibrium, params: BeamParams, forcing: ForcingModel,
                            constants: AnalyticConstants, degenerate_below: float = 1e-3) -> BoundReport:
    """(1 - 2 beta L^2 gamma3 / pi^2) |grad q|^2 <= 2 m_F L gamma3."""
    pref = 1.0 - 2.0 * forcing.beta * params.L**2 * constants.gamma3 / math.pi**2
    lhs = pref * eq.h1_seminorm_sq
    rhs = 2.0 * forcing.mF * params.L * constants.gamma3
    return BoundReport(lhs, rhs, pref, bool(lhs <= rhs), bool(pref < degenerate_below))


def multistart_guesses(grid: Grid, amplitudes: Sequence[float] = (0.25, 0.5, 1.0),
                       modes: int = 3, n_random: int = 8, seed: int = 0) -> list[np.ndarray]:
    """Zero, +/- sine modes 1..modes in each field at each amplitude, and seeded random states."""
    n = grid.n
    guesses = [np.zeros((n, 3))]
    for field_idx in range(3):
        for m in range(1, modes + 1):
            shape = grid.sine_mode(m)
            for amp in amplitudes:
                for sign in (1.0, -1.0):
                    g = np.zeros((n, 3))
                    g[:, field_idx] = sign * amp * shape
                    guesses.append(g)
    rng = np.random.default_rng(seed)
    for _ in range(n_random):
        coeffs = rng.normal(size=(modes, 3)) / np.arange(1, modes + 1)[:, None]
        g = sum(np.outer(grid.sine_mode(m + 1), coeffs[m]) for m in range(modes))
        guesses.append(g)
    return guesses


def _state_key(eq: Equilibrium) -> tuple:
    digest = hashlib.sha256(np.round(eq.q, 8).tobytes()).hexdigest()
    return (eq.residual_norm, digest)


def enumerate_equilibria(params: BeamParams, forcing: ForcingModel, grid: Grid,
                         guesses: Optional[list] = None, tol: float = 1e-10,
                         max_iters: int = 50, dedup: float = 1e-6, workers: int = 1,
                         seed: int = 0) -> tuple[list[Equilibrium], int]:
    """Multi-start Newton; returns (deduplicated equilibria, number of failed starts).

    Best effort: nothing guarantees every stationary point is found.
    """
    guesses = multistart_guesses(grid, seed=seed) if guesses is None else guesses

    def solve(g):
        try:
            return solve_equilibrium(params, forcing, grid, (g[:, 0], g[:, 1], g[:, 2]), tol, max_iters)
        except (SingularJacobianError, NonConvergenceError):
            return None

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(solve, guesses))
    else:
        results = [solve(g) for g in guesses]
    failures = sum(r is None for r in results)
    found = sorted((r for r in results if r is not None), key=_state_key)
    unique: list[Equilibrium] = []
    for eq in found:
        if all(math.sqrt(l2_sq((eq.q - u.q).reshape(-1), grid.h)) > dedup for u in unique):
            unique.append(eq)
    return unique, failures


def equilibria_to_json(params: BeamParams, forcing: ForcingModel, equilibria: list[Equilibrium],
                       bounds: list[BoundReport]) -> str:
    payload = {
        "params": {k: getattr(params, k) for k in ("rho1", "rho2", "b", "k", "k0", "L", "ell")},
        "forcing": forcing.name,
        "n": equilibria[0].grid.n if equilibria else None,
        "equilibria": [dict(eq.to_dict(), bound=b.to_dict()) for eq, b in zip(equilibria, bounds)],
    }
    return json.dumps(payload, indent=2, sort_keys=True)
