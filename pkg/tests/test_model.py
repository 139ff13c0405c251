import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from bresse.model import (BeamParams, RegimeError, SamplingSpec, analytic_constants, beta_cap,
                          builtin_forcing, coupled_forcing, cubic_damping, linear_damping,
                          quadratic_forcing, validate_hypotheses, zero_forcing, DampingModel)

box = st.floats(-2.0, 2.0, allow_nan=False)


def _sym_builtin(a1, a2):
    u, v, w = sp.symbols("u v w", real=True)
    F = (u + v) ** 4 - (u + v) ** 2 + a1 * u**2 * v**2 + a2 * sp.Abs(w) ** 3
    grad = [sp.diff(F, x) for x in (u, v, w)]
    hess = [[sp.diff(gi, x) for x in (u, v, w)] for gi in grad]
    # w^2 * DiracDelta(w) vanishes identically
    mod = [{"Abs": np.abs, "sign": np.sign, "DiracDelta": lambda x: 0.0 * x}, "numpy"]
    return (sp.lambdify((u, v, w), F, mod), sp.lambdify((u, v, w), grad, mod),
            sp.lambdify((u, v, w), hess, mod))


class TestBeamParams:
    def test_rejects_nonpositive(self):
        for name in ("rho1", "rho2", "b", "k", "k0", "L"):
            with pytest.raises(ValueError):
                BeamParams(**{name: 0.0})
        with pytest.raises(ValueError):
            BeamParams(ell=-0.1)

    def test_uniform_regime_flag(self):
        p = BeamParams(L=math.pi)
        assert p.ell_cap == pytest.approx(0.5)
        assert p.with_ell(0.49).uniform_regime
        assert not p.with_ell(0.5).uniform_regime


class TestBuiltinForcing:
    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            builtin_forcing(-1.0, 0.0)
        with pytest.raises(ValueError):
            builtin_forcing(0.0, -1.0)

    def test_constants(self):
        f = builtin_forcing(1.0, 2.0)
        assert (f.beta, f.mF, f.p) == (0.0, 0.25, 3)
        assert f.compatible_with_timoshenko

    def test_minimum_along_diagonal(self):
        # u = v = z/2, w = 0 gives z^4 - z^2 whose minimum is -1/4
        f = builtin_forcing(0.0, 0.0)
        z = np.linspace(-2, 2, 400001)
        assert np.min(f.potential(z / 2, z / 2, 0 * z)) == pytest.approx(-0.25, abs=1e-9)

    def test_gradient_at_origin_and_value(self):
        f = builtin_forcing(1.0, 1.0)
        assert np.allclose(f.grad_array(0.0, 0.0, 0.0), 0.0)
        assert f.potential(1.0, 0.0, 0.0) == 0.0

    @settings(max_examples=200, deadline=None)
    @given(box, box, box, st.sampled_from([(0, 0), (1, 1), (0.3, 2.5)]))
    def test_matches_symbolic_oracle(self, u, v, w, coeffs):
        f = builtin_forcing(*coeffs)
        F, G, H = _sym_builtin(*coeffs)
        assert f.potential(u, v, w) == pytest.approx(F(u, v, w), rel=1e-12, abs=1e-12)
        assert np.allclose(f.grad_array(u, v, w), G(u, v, w), rtol=1e-12, atol=1e-12)
        assert np.allclose(f.hess_array(u, v, w), np.array(H(u, v, w), dtype=float),
                           rtol=1e-12, atol=1e-12)

    def test_gradient_minus_potential_floor(self):
        # exact oracle: along z = u + v the quantity is 3 z^4 - z^2, minimised at z^2 = 1/6
        z = sp.symbols("z", real=True)
        expr = 3 * z**4 - z**2
        crit = [c for c in sp.solve(sp.diff(expr, z), z) if c != 0]
        exact = min(expr.subs(z, c) for c in crit)
        assert exact == sp.Rational(-1, 12)
        f = builtin_forcing(0.0, 0.0)
        g = np.linspace(-2, 2, 81)
        u, v, w = np.meshgrid(g, g, g, indexing="ij")
        X = np.stack([u, v, w], -1)
        val = np.einsum("...i,...i->...", f.grad_array(u, v, w), X) - f.potential(u, v, w)
        assert val.min() >= -1.0 / 12 - 1e-12
        assert val.min() >= -f.mF
        zz = 1 / math.sqrt(6)
        at_min = float(np.dot(f.grad_array(zz / 2, zz / 2, 0.0), [zz / 2, zz / 2, 0.0])
                       - f.potential(zz / 2, zz / 2, 0.0))
        assert at_min == pytest.approx(-1.0 / 12, abs=1e-14)

    def test_printed_sixteenth_floor_is_too_optimistic(self):
        # the commonly quoted floor -1/16 is violated at z^2 = 1/6; only -m_F matters downstream
        f = builtin_forcing(0.0, 0.0)
        zz = 1 / math.sqrt(6)
        val = float(np.dot(f.grad_array(zz / 2, zz / 2, 0.0), [zz / 2, zz / 2, 0.0])
                    - f.potential(zz / 2, zz / 2, 0.0))
        assert val < -1.0 / 16

    @pytest.mark.parametrize("forcing", [builtin_forcing(1, 1), zero_forcing(), quadratic_forcing(0.1),
                                         coupled_forcing(0.5)])
    def test_finite_difference_gradient(self, forcing, rng):
        X = rng.uniform(-2, 2, size=(100, 3))
        eps = 1e-6
        for i in range(3):
            e = np.zeros(3)
            e[i] = eps
            fd = (forcing.potential(*(X + e).T) - forcing.potential(*(X - e).T)) / (2 * eps)
            g = forcing.grad_array(*X.T)[:, i]
            assert np.all(np.abs(fd - g) <= 1e-6 * np.maximum(1, np.abs(g)))


class TestAnalyticConstants:
    def test_worked_example(self):
        c = analytic_constants(BeamParams(L=math.pi), 0.25)
        assert c.gamma3 == pytest.approx(20.0 / 3.0, rel=1e-14)
        assert c.beta0 == 1.0
        assert c.gamma2 == pytest.approx(20.0 / 3.0)

    @pytest.mark.parametrize("L", [0.5, 1.0, math.pi, 7.0])
    def test_zero_cap(self, L):
        c = analytic_constants(BeamParams(L=L), 0.0)
        assert c.gamma3 == pytest.approx(max(1 + 4 * L**2 / math.pi**2, 2.0))

    def test_gamma2_uses_densities(self):
        c = analytic_constants(BeamParams(rho1=0.01, L=1.0), 0.1)
        assert c.gamma2 == pytest.approx(100.0)

    def test_beta0(self):
        p = BeamParams(L=1.0)
        c = analytic_constants(p, 0.3, beta=0.2)
        assert c.beta0 == pytest.approx(1 - 2 * 0.2 * c.gamma3 / math.pi**2)
        assert 0 < c.beta0 <= 1

    def test_independent_of_ell(self):
        p = BeamParams(L=2.0)
        a = analytic_constants(p.with_ell(0.0), 0.5)
        b = analytic_constants(p.with_ell(0.4), 0.5)
        assert a == b

    def test_regime_errors(self):
        p = BeamParams(L=math.pi)
        with pytest.raises(RegimeError, match="uniform regime"):
            analytic_constants(p, 0.5)
        with pytest.raises(RegimeError):
            analytic_constants(p.with_ell(0.3), 0.2)

    def test_soft_stiffness_weighting(self):
        # with a stiffness below one the closed form is divided by it
        p = BeamParams(b=0.5, L=1.0)
        base = analytic_constants(BeamParams(L=1.0), 0.2).gamma3
        assert analytic_constants(p, 0.2).gamma3 == pytest.approx(2 * base)


class TestDamping:
    def test_linear_is_lipschitz(self):
        d = linear_damping(2.0)
        s = np.linspace(-3, 3, 7)
        assert np.allclose(d(0, s), 2 * s)
        assert d.globally_lipschitz and d.m == (2.0,) * 3

    def test_cubic_clip_is_c1(self):
        d = cubic_damping(1.0, 1.0, clip=2.0)
        s = np.array([2.0 - 1e-7, 2.0 + 1e-7])
        assert abs(np.diff(d(0, s))[0]) < 1e-5
        assert d.derivative(0, np.array([10.0]))[0] == pytest.approx(13.0)
        assert d.M[0] == pytest.approx(13.0)

    def test_unclipped_cubic(self):
        d = cubic_damping(1.0, 1.0)
        assert math.isinf(d.M[0]) and not d.globally_lipschitz

    def test_rejects_bad_sector(self):
        with pytest.raises(ValueError):
            DampingModel((np.negative,) * 3, (0.0,) * 3, (1.0,) * 3, True)


class TestValidateHypotheses:
    spec = SamplingSpec(n_samples=2048)

    def test_builtin_linear_passes(self):
        rep = validate_hypotheses(BeamParams(L=1.0), builtin_forcing(0, 0), linear_damping(1.0), self.spec)
        assert rep.passed, rep.to_dict()

    def test_beta_above_cap_fails(self):
        p = BeamParams(L=1.0)
        cap = beta_cap(analytic_constants(p, 0.0).gamma3, 1.0)
        rep = validate_hypotheses(p, quadratic_forcing(1.1 * cap), linear_damping(), self.spec)
        assert not rep["beta-cap"].passed
        rep = validate_hypotheses(p, quadratic_forcing(0.9 * cap), linear_damping(), self.spec)
        assert rep["beta-cap"].passed

    def test_pure_cubic_declared_lipschitz_fails_hg3(self):
        d = DampingModel((lambda s: s**3,) * 3, (1.0,) * 3, (12.0,) * 3, globally_lipschitz=True)
        rep = validate_hypotheses(BeamParams(L=1.0), builtin_forcing(), d, self.spec)
        assert not rep["HG3"].passed
        assert rep["HG1"].passed

    def test_unclipped_cubic_fails_upper_sector(self):
        rep = validate_hypotheses(BeamParams(L=1.0), builtin_forcing(), cubic_damping(), self.spec)
        assert not rep["HG2"].passed
        with pytest.raises(KeyError):
            rep["HG3"]

    def test_missing_origin_fails_hg1(self):
        d = DampingModel((lambda s: s + 0.1,) * 3, (1.0,) * 3, (2.0,) * 3, True)
        rep = validate_hypotheses(BeamParams(L=1.0), builtin_forcing(), d, self.spec)
        assert not rep["HG1"].passed

    def test_wrong_gradient_detected(self):
        f = builtin_forcing()
        bad = type(f)(f.potential, lambda u, v, w: (0 * u, 0 * v, 0 * w), 0.0, 0.25, 3, (False, False))
        rep = validate_hypotheses(BeamParams(L=1.0), bad, linear_damping(), self.spec)
        assert not rep["gradient"].passed
        assert rep["gradient"].worst_point is not None
