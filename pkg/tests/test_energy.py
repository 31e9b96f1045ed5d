import math

import numpy as np
import pytest

from fchsim.energy import (
    chemical_potential,
    energy_concave,
    energy_convex,
    energy_total,
    nonlinear_map,
    omega_field,
    rhs_explicit,
    var_concave,
    var_convex,
)
from fchsim.grid import Grid, inner, mean
from fchsim.potential import PhysParams, PotentialDomainError
from fchsim.scenarios import well_depth

from oracles import dense_nonlinear_map, dense_omega, dense_var_convex, smooth_admissible_field

PP = PhysParams(eps=0.5, eta=1.0, lam=3.0, p=2)
# independently computed with 40-digit arithmetic
B_HALF = 0.2616240718822739182584036124674354208202
E_CONST_HALF = 0.1089000294335579722644208034240355446329


class TestEnergyValues:
    def test_zero_field(self):
        g = Grid.square(8)
        eb = energy_total(g.zeros(), g, PP)
        assert eb.total == eb.convex == eb.concave == 0.0
        assert eb.cahn_hilliard == 0.0
        assert eb.willmore == 0.0

    def test_constant_half_closed_form(self):
        g = Grid.square(8)
        eb = energy_total(g.full(0.5), g, PP)
        ln3 = math.log(3.0)
        expected = 0.5 * ln3**2 + 4.875 * 0.25 - 1.5 * ln3 - 0.25 * B_HALF
        assert eb.total == pytest.approx(expected, rel=1e-12)
        assert eb.total == pytest.approx(E_CONST_HALF, rel=1e-12)

    def test_split_identity(self):
        rng = np.random.default_rng(21)
        g = Grid.square(12)
        for _ in range(10):
            phi = smooth_admissible_field(g, rng)
            eb = energy_total(phi, g, PP)
            assert eb.total == pytest.approx(eb.convex - eb.concave, rel=1e-12)
            assert eb.convex == pytest.approx(energy_convex(phi, g, PP), rel=1e-13)
            assert eb.concave == pytest.approx(energy_concave(phi, g, PP), rel=1e-13)

    def test_willmore_relation(self):
        rng = np.random.default_rng(22)
        g = Grid.square(10)
        phi = smooth_admissible_field(g, rng)
        eb = energy_total(phi, g, PP)
        assert eb.willmore == pytest.approx(eb.total + PP.eps_p_eta * eb.cahn_hilliard, rel=1e-12)

    def test_rejects_inadmissible(self):
        g = Grid.square(4)
        with pytest.raises(PotentialDomainError):
            energy_total(g.full(1.0), g, PP)


class TestConvexity:
    @pytest.mark.parametrize("which", [energy_convex, energy_concave])
    def test_midpoint_convexity(self, which):
        rng = np.random.default_rng(23)
        g = Grid.square(8)
        failures = 0
        for _ in range(100):
            phi1 = smooth_admissible_field(g, rng, amplitude=0.7)
            phi2 = smooth_admissible_field(g, rng, amplitude=0.7)
            for t in (0.25, 0.5, 0.75):
                blend = t * phi1 + (1 - t) * phi2
                lhs = which(blend, g, PP)
                rhs = t * which(phi1, g, PP) + (1 - t) * which(phi2, g, PP)
                scale = max(abs(lhs), abs(rhs), 1.0)
                if lhs > rhs + 1e-12 * scale:
                    failures += 1
        assert failures == 0


class TestVariationalDerivatives:
    def test_var_convex_zero(self):
        g = Grid.square(6)
        assert np.all(var_convex(g.zeros(), g, PP) == 0.0)

    def test_var_convex_constant(self):
        g = Grid.square(6)
        c = 0.3
        out = var_convex(g.full(c), g, PP)
        b = math.log((1 + c) / (1 - c))
        b1 = 2.0 / (1 - c * c)
        expected = b * b1 + PP.lam * (PP.lam + PP.eps_p_eta) * c
        assert np.allclose(out, expected, rtol=1e-13)

    def test_var_concave_constant(self):
        g = Grid.square(6)
        c = -0.4
        out = var_concave(g.full(c), g, PP)
        b = math.log((1 + c) / (1 - c))
        b1 = 2.0 / (1 - c * c)
        expected = PP.lam * c * b1 + (PP.lam + PP.eps_p_eta) * b
        assert np.allclose(out, expected, rtol=1e-13)

    @pytest.mark.parametrize(
        "energy_fn,deriv_fn",
        [(energy_convex, var_convex), (energy_concave, var_concave)],
    )
    def test_directional_derivative(self, energy_fn, deriv_fn):
        # <deriv, v> must match the central difference of the energy along v
        rng = np.random.default_rng(24)
        g = Grid.square(16)
        s = 1e-5
        from fchsim.grid import norm as gnorm

        for _ in range(20):
            phi = smooth_admissible_field(g, rng, amplitude=0.6)
            v = smooth_admissible_field(g, rng, amplitude=1.0)
            deriv = deriv_fn(phi, g, PP)
            analytic = inner(deriv, v, g)
            fd = (energy_fn(phi + s * v, g, PP) - energy_fn(phi - s * v, g, PP)) / (2 * s)
            # relative to the natural derivative scale; a tiny directional
            # component would otherwise sit below the FD truncation floor
            scale = max(abs(analytic), abs(fd), gnorm(deriv, g, "l2") * gnorm(v, g, "l2"))
            assert abs(analytic - fd) <= 1e-6 * scale + 1e-12

    def test_var_convex_dense_oracle(self):
        rng = np.random.default_rng(25)
        g = Grid.square(8)
        phi = smooth_admissible_field(g, rng)
        expected = dense_var_convex(phi, g, PP)
        out = var_convex(phi, g, PP)
        assert np.max(np.abs(out - expected)) <= 1e-11 * np.max(np.abs(expected))


class TestSchemeMaps:
    def test_nonlinear_map_constant(self):
        g = Grid.square(6)
        c, dt = 0.2, 0.05
        assert np.allclose(nonlinear_map(g.full(c), dt, g, PP), c / dt, rtol=1e-13)

    def test_nonlinear_map_mean_identity(self):
        rng = np.random.default_rng(26)
        g = Grid.square(12)
        phi = smooth_admissible_field(g, rng) + 0.05
        dt = 0.01
        out = nonlinear_map(phi, dt, g, PP)
        assert mean(out, g) == pytest.approx(mean(phi, g) / dt, rel=1e-11)

    def test_nonlinear_map_dense_oracle(self):
        rng = np.random.default_rng(27)
        g = Grid.square(8)
        phi = smooth_admissible_field(g, rng)
        dt = 0.02
        expected = dense_nonlinear_map(phi, dt, g, PP)
        out = nonlinear_map(phi, dt, g, PP)
        assert np.max(np.abs(out - expected)) <= 1e-10 * np.max(np.abs(expected))

    def test_rhs_explicit_constant_fixed_point(self):
        g = Grid.square(6)
        c, dt = 0.35, 0.01
        f = rhs_explicit(g.full(c), dt, g, PP)
        assert np.allclose(f, c / dt, rtol=1e-13)
        # constants are equilibria: N(c) = rhs(c)
        assert np.allclose(nonlinear_map(g.full(c), dt, g, PP), f, rtol=1e-13)

    def test_rhs_explicit_mean_identity(self):
        rng = np.random.default_rng(28)
        g = Grid.square(12)
        phi = smooth_admissible_field(g, rng) - 0.1
        dt = 0.04
        assert mean(rhs_explicit(phi, dt, g, PP), g) == pytest.approx(
            mean(phi, g) / dt, rel=1e-11
        )

    def test_chemical_potential_constant(self):
        g = Grid.square(6)
        c = 0.25
        mu = chemical_potential(g.full(c), g.full(c), g, PP)
        b = math.log((1 + c) / (1 - c))
        b1 = 2.0 / (1 - c * c)
        expected = (
            b * b1
            + PP.lam * (PP.lam + PP.eps_p_eta) * c
            - PP.lam * c * b1
            - (PP.lam + PP.eps_p_eta) * b
        )
        assert np.allclose(mu, expected, rtol=1e-12)

    def test_bad_dt(self):
        g = Grid.square(4)
        with pytest.raises(ValueError):
            nonlinear_map(g.zeros(), 0.0, g, PP)
        with pytest.raises(ValueError):
            rhs_explicit(g.zeros(), -1.0, g, PP)


class TestOmega:
    def test_zero(self):
        g = Grid.square(6)
        assert np.all(omega_field(g.zeros(), g, PP) == 0.0)

    def test_vanishes_at_well(self):
        g = Grid.square(6)
        pp = PhysParams(eps=0.03, eta=4.0, lam=well_depth(0.9), p=1)
        out = omega_field(g.full(0.9), g, pp)
        assert np.max(np.abs(out)) <= 1e-13

    def test_dense_oracle(self):
        rng = np.random.default_rng(29)
        g = Grid.square(8)
        phi = smooth_admissible_field(g, rng)
        expected = dense_omega(phi, g, PP)
        out = omega_field(phi, g, PP)
        assert np.max(np.abs(out - expected)) <= 1e-12 * max(1.0, np.max(np.abs(expected)))
