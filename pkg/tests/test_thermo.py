"""Pressure laws, the pressure potential, and the relative energy density."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nozzle_lab.thermo import (
    CoercivityError,
    EssResCutoff,
    PressureLaw,
    coercivity_check,
    ess_res_split,
    pressure_eval,
    pressure_potential,
    pressure_potential_prime,
    relative_energy_density,
)


def constant_factor_law(gamma=2.0, kappa=1.0):
    """A tabulated law whose shape factor is identically 1.

    Numerically identical to the pure power law, but routed through the
    general-law quadrature code path.
    """
    return PressureLaw(gamma=gamma, kappa=kappa,
                       factor_knots=(0.5, 1.0, 2.0),
                       factor_values=(1.0, 1.0, 1.0))


class TestPressureEval:
    def test_quadratic_law(self):
        law = PressureLaw(gamma=2.0, kappa=1.0)
        p, dp = pressure_eval(law, 2.0)
        assert p == pytest.approx(4.0, abs=1e-14)
        assert dp == pytest.approx(4.0, abs=1e-14)

    def test_monatomic_law(self):
        law = PressureLaw(gamma=5.0 / 3.0, kappa=1.0)
        p, dp = pressure_eval(law, 8.0)
        assert p == pytest.approx(32.0, rel=1e-13)
        assert dp == pytest.approx(20.0 / 3.0, rel=1e-13)

    def test_vacuum_state(self):
        for law in (PressureLaw(2.0), PressureLaw(1.8, kappa=0.3),
                    constant_factor_law()):
            p, dp = pressure_eval(law, 0.0)
            assert p == 0.0
            assert dp == 0.0

    def test_negative_density_rejected(self):
        law = PressureLaw(2.0)
        with pytest.raises(ValueError):
            pressure_eval(law, -0.1)

    def test_array_input(self):
        law = PressureLaw(2.0)
        p, dp = pressure_eval(law, np.array([1.0, 2.0, 3.0]))
        assert np.allclose(p, [1.0, 4.0, 9.0])
        assert np.allclose(dp, [2.0, 4.0, 6.0])


class TestLawValidation:
    def test_growth_hypothesis_names_gamma(self):
        with pytest.raises(ValueError, match="gamma > 3/2"):
            PressureLaw(gamma=1.2)

    def test_boundary_gamma_rejected(self):
        with pytest.raises(ValueError):
            PressureLaw(gamma=1.5)

    def test_kappa_positive(self):
        with pytest.raises(ValueError):
            PressureLaw(gamma=2.0, kappa=0.0)

    def test_non_monotone_factor_rejected(self):
        with pytest.raises(ValueError):
            PressureLaw(gamma=2.0, factor_knots=(1.0, 2.0),
                        factor_values=(1.0, 0.05))

    def test_factor_table_needs_both_parts(self):
        with pytest.raises(ValueError):
            PressureLaw(gamma=2.0, factor_knots=(1.0, 2.0))


class TestPressurePotential:
    def test_closed_form_quadratic(self):
        law = PressureLaw(gamma=2.0, kappa=1.0)
        assert pressure_potential(law, 1.0) == 0.0
        assert pressure_potential(law, 2.0) == pytest.approx(2.0, abs=1e-14)
        rho = np.linspace(0.0, 4.0, 17)
        assert np.allclose(pressure_potential(law, rho), rho**2 - rho,
                           atol=1e-13)

    def test_quadrature_matches_closed_form(self):
        # dual route: the tabulated-law quadrature against the power-law
        # closed form kappa*(rho^gamma - rho)/(gamma - 1)
        law = constant_factor_law(gamma=2.0, kappa=1.0)
        for rho in [0.0, 0.05, 0.3, 1.0, 1.7, 3.0, 8.0]:
            closed = rho**2 - rho
            assert abs(pressure_potential(law, rho) - closed) <= 1e-10

    def test_prime_is_derivative(self):
        for law in (PressureLaw(2.0), PressureLaw(1.7, kappa=0.5),
                    constant_factor_law()):
            rho = np.geomspace(0.1, 10.0, 25)
            d = 1e-6 * rho
            fd = (pressure_potential(law, rho + d)
                  - pressure_potential(law, rho - d)) / (2.0 * d)
            hp = pressure_potential_prime(law, rho)
            assert np.max(np.abs(fd - hp) / np.abs(hp)) < 1e-6

    def test_second_derivative_matches_dp_over_rho(self):
        # H''(rho) = p'(rho)/rho, checked by central differences
        law = PressureLaw(gamma=2.0, kappa=1.0)
        rho = np.geomspace(0.1, 10.0, 40)
        d = 1e-4 * rho
        h2 = (pressure_potential(law, rho + d)
              - 2.0 * pressure_potential(law, rho)
              + pressure_potential(law, rho - d)) / d**2
        _, dp = pressure_eval(law, rho)
        assert np.max(np.abs(h2 - dp / rho) / np.abs(dp / rho)) < 1e-6

    def test_prime_requires_positive_density(self):
        with pytest.raises(ValueError):
            pressure_potential_prime(PressureLaw(2.0), 0.0)


class TestRelativeEnergyDensity:
    def test_coincidence_is_zero(self, law):
        assert relative_energy_density(law, 1.3, 0.7, 1.3, 0.7) == 0.0

    def test_bregman_term(self, law):
        # gamma = 2: H(2) - H(1) - H'(1)*(2 - 1) = 2 - 0 - 1 = 1
        assert relative_energy_density(law, 2.0, 0.0, 1.0, 0.0) == \
            pytest.approx(1.0, abs=1e-13)

    def test_kinetic_term_scalar_and_vector(self, law):
        assert relative_energy_density(law, 1.0, 2.0, 1.0, 0.0) == \
            pytest.approx(2.0, abs=1e-14)
        u = np.array([[2.0, 0.0, 0.0]])
        U = np.array([[0.0, 0.0, 0.0]])
        out = relative_energy_density(law, np.array([1.0]), u,
                                      np.array([1.0]), U)
        assert out[0] == pytest.approx(2.0, abs=1e-14)

    def test_bregman_identity_quadratic(self, law):
        # for p = rho^2 the Bregman divergence of H is exactly (rho - r)^2
        rhos = np.linspace(0.0, 3.0, 13)
        rs = np.linspace(0.2, 2.6, 9)
        for r in rs:
            vals = relative_energy_density(law, rhos, 0.0, r, 0.0)
            assert np.allclose(vals, (rhos - r) ** 2, rtol=0, atol=1e-12)

    def test_reference_density_must_be_positive(self, law):
        with pytest.raises(ValueError, match="reference density"):
            relative_energy_density(law, 1.0, 0.0, 0.0, 0.0)

    def test_state_density_nonnegative(self, law):
        with pytest.raises(ValueError):
            relative_energy_density(law, -1.0, 0.0, 1.0, 0.0)

    @given(rho=st.floats(0.0, 5.0), r=st.floats(0.05, 5.0),
           u=st.floats(-3.0, 3.0), U=st.floats(-3.0, 3.0))
    @settings(max_examples=200, deadline=None)
    def test_nonnegative(self, rho, r, u, U):
        law = PressureLaw(gamma=2.0, kappa=1.0)
        assert relative_energy_density(law, rho, u, r, U) >= -1e-13


class TestCoercivity:
    def test_canonical_law_pinch(self, law):
        out = coercivity_check(law, (0.5, 2.0), (0.25, 4.0))
        assert 0.0 < out.C1 <= 1.0 <= out.C2
        assert out.C3 > 0.0

    def test_no_violations_on_canonical_law(self, law):
        # a denser sampling must not trip the violation guard either
        coercivity_check(law, (0.5, 2.0), (0.25, 4.0), n_rho=160)

    def test_band_nesting_enforced(self, law):
        with pytest.raises(ValueError):
            coercivity_check(law, (0.25, 4.0), (0.5, 2.0))

    def test_outside_band_constant_positive(self, law):
        out = coercivity_check(law, (0.9, 1.1), (0.5, 2.0))
        # rho = 10 lies far outside K_tilde; C3 certifies growth there
        assert out.C3 > 0.0


class TestEssResSplit:
    def test_interior_is_essential(self):
        cut = EssResCutoff(0.5, 2.0)
        h = np.array([3.0, -1.0, 0.5])
        rho = np.array([0.6, 1.0, 1.9])
        ess, res = ess_res_split(cut, h, rho)
        assert np.array_equal(ess, h)
        assert np.array_equal(res, np.zeros(3))

    def test_vacuum_is_residual(self):
        cut = EssResCutoff(0.5, 2.0)
        h = np.array([2.0, 2.0])
        ess, res = ess_res_split(cut, h, np.array([0.0, 100.0]))
        assert np.array_equal(ess, np.zeros(2))
        assert np.array_equal(res, h)

    @given(st.lists(st.tuples(st.floats(-5.0, 5.0), st.floats(0.0, 10.0)),
                    min_size=1, max_size=30))
    @settings(max_examples=100, deadline=None)
    def test_partition_is_exact(self, pairs):
        cut = EssResCutoff(0.5, 2.0)
        h = np.array([p[0] for p in pairs])
        rho = np.array([p[1] for p in pairs])
        ess, res = ess_res_split(cut, h, rho)
        assert np.array_equal(ess + res, h)

    def test_cutoff_range_and_transitions(self):
        cut = EssResCutoff(0.5, 2.0)
        rho = np.linspace(0.0, 10.0, 400)
        ess, _ = ess_res_split(cut, np.ones_like(rho), rho)
        assert np.all(ess >= 0.0) and np.all(ess <= 1.0)
        # rising on [lo/4, lo/2], falling on [2 hi, 4 hi]
        rise = (rho >= 0.125) & (rho <= 0.25)
        fall = (rho >= 4.0) & (rho <= 8.0)
        assert np.all(np.diff(ess[rise]) >= -1e-12)
        assert np.all(np.diff(ess[fall]) <= 1e-12)
