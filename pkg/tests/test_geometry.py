"""Channel geometry: areas, tilt fields, the divergence identity, flow maps."""

import numpy as np
import pytest

from nozzle_lab.geometry import (
    ChannelGeometry,
    FlowEscapeError,
    area,
    area_derivative,
    channel_volume,
    check_divergence_identity,
    disk_table,
    div_h_constancy_residual,
    ellipse_table,
    flow_map,
    flow_reconstruction_error,
    scale_to_epsilon,
    square_table,
    tilt_field_circular,
    tilt_field_neumann,
)


def half_taper(z):
    return 1.0 + 0.5 * z


def half_taper_deriv(z):
    return 0.5


@pytest.fixture(scope="module")
def taper_geom():
    return ChannelGeometry.circular(half_taper, d_radius=half_taper_deriv)


class TestArea:
    def test_unit_disk(self):
        geom = ChannelGeometry.circular(lambda z: 1.0)
        assert abs(area(geom, 0.5) - np.pi) <= 1e-12

    def test_linear_taper(self):
        geom = ChannelGeometry.circular(lambda z: 1.0 + z)
        assert abs(area(geom, 1.0) - 4.0 * np.pi) <= 1e-12

    def test_tabulated_unit_square(self):
        geom = ChannelGeometry.tabulated(square_table(side=1.0, m_per_side=16))
        assert abs(area(geom, 0.3) - 1.0) <= 1e-12

    def test_domain_checked(self):
        geom = ChannelGeometry.circular(lambda z: 1.0)
        with pytest.raises(ValueError):
            area(geom, 1.5)

    def test_derivative_analytic_vs_fd(self, taper_geom):
        # analytic branch: dA/dz = 2 pi R R'
        z = 0.4
        exact = 2.0 * np.pi * half_taper(z) * 0.5
        assert abs(area_derivative(taper_geom, z) - exact) <= 1e-12
        # FD branch agrees to truncation order
        geom_fd = ChannelGeometry.circular(half_taper)
        assert abs(area_derivative(geom_fd, z) - exact) <= 1e-6

    def test_channel_volume_scales_with_epsilon_squared(self):
        g1 = ChannelGeometry.circular(half_taper, epsilon=1.0)
        g2 = ChannelGeometry.circular(half_taper, epsilon=0.25)
        v1 = channel_volume(g1)
        v2 = channel_volume(g2)
        assert v2 == pytest.approx(0.0625 * v1, rel=1e-12)


class TestTiltCircular:
    def test_constant_channel_is_zero(self):
        geom = ChannelGeometry.circular(lambda z: 1.0, d_radius=lambda z: 0.0)
        tilt = tilt_field_circular(geom)
        for z in (0.0, 0.37, 1.0):
            v = tilt.evaluate(np.array([0.5, -0.2]), z)
            assert np.max(np.abs(v)) == 0.0

    def test_radial_component(self, taper_geom):
        tilt = tilt_field_circular(taper_geom)
        v = tilt.evaluate(np.array([1.0, 0.0]), 0.0)
        assert np.allclose(v, [0.5, 0.0], atol=1e-14)

    def test_translating_channel(self):
        geom = ChannelGeometry.circular(
            lambda z: 1.0, centerline=lambda z: np.array([z, 0.0]),
            d_radius=lambda z: 0.0)
        tilt = tilt_field_circular(geom)
        for x in ([0.0, 0.0], [0.3, 0.4], [-0.9, 0.1]):
            v = tilt.evaluate(np.array(x, dtype=float), 0.5)
            assert np.allclose(v, [1.0, 0.0], atol=1e-10)

    def test_div_h_matches_closed_form(self, taper_geom):
        tilt = tilt_field_circular(taper_geom)
        z = 0.6
        assert tilt.div_h(z) == pytest.approx(
            2.0 * 0.5 / half_taper(z), rel=1e-12)


class TestTiltNeumann:
    def test_concentric_disks_match_closed_form(self):
        errs = []
        for m, n_z in ((24, 8), (48, 16)):
            geom = ChannelGeometry.tabulated(
                disk_table(half_taper, m=m, n_z=n_z))
            tilt = tilt_field_neumann(geom)
            worst = 0.0
            for z in (0.25, 0.5, 0.75):
                g = 0.5 / half_taper(z)
                for x in ([0.3, 0.1], [-0.4, 0.5], [0.0, -0.7]):
                    xh = np.asarray(x)
                    v = tilt.evaluate(xh, z)
                    worst = max(worst, float(np.max(np.abs(v - g * xh))))
            errs.append(worst)
        assert errs[1] < 0.5 * errs[0]
        assert errs[1] < 1e-2

    def test_constant_section_is_zero(self):
        geom = ChannelGeometry.tabulated(disk_table(1.0, m=24, n_z=8))
        tilt = tilt_field_neumann(geom)
        v = tilt.evaluate(np.array([0.2, 0.3]), 0.5)
        assert np.max(np.abs(v)) <= 1e-10

    def test_translating_squares(self):
        geom = ChannelGeometry.tabulated(
            square_table(side=1.0, shift=lambda z: np.array([z, 0.0]),
                         m_per_side=12, n_z=8))
        tilt = tilt_field_neumann(geom)
        for x in ([0.5, 0.0], [0.6, 0.2]):
            v = tilt.evaluate(np.array(x), 0.5)
            assert np.allclose(v, [1.0, 0.0], atol=5e-2)

    def test_div_h_is_constant_across_section(self):
        geom = ChannelGeometry.tabulated(disk_table(half_taper, m=32, n_z=12))
        tilt = tilt_field_neumann(geom)
        assert div_h_constancy_residual(tilt, 0.5) <= 0.05


class TestDivergenceIdentity:
    def test_circular_analytic_is_exact(self, taper_geom):
        tilt = tilt_field_circular(taper_geom)
        assert check_divergence_identity(taper_geom, tilt) <= 1e-10

    def test_constant_section_exact_zero(self):
        geom = ChannelGeometry.circular(lambda z: 1.0, d_radius=lambda z: 0.0)
        tilt = tilt_field_circular(geom)
        assert check_divergence_identity(geom, tilt) == 0.0

    def test_tabulated_ellipse_second_order(self):
        res = []
        for m, n_z in ((16, 8), (32, 16), (64, 32)):
            geom = ChannelGeometry.tabulated(ellipse_table(
                lambda z: 1.0 + 0.3 * z, lambda z: 1.0 - 0.2 * z,
                m=m, n_z=n_z))
            res.append(check_divergence_identity(geom, tilt_field_neumann(geom)))
        orders = [np.log2(res[i] / res[i + 1]) for i in range(2)]
        assert min(orders) >= 1.8


class TestScaleToEpsilon:
    def test_identity_at_unit_epsilon(self, taper_geom):
        tilt = tilt_field_circular(taper_geom)
        scaled = scale_to_epsilon(tilt, 1.0)
        x = np.array([0.4, -0.3])
        assert np.array_equal(scaled.evaluate(x, 0.5), tilt.evaluate(x, 0.5))

    def test_exact_scaling_relation(self, taper_geom):
        tilt = tilt_field_circular(taper_geom)
        eps = 0.125
        scaled = scale_to_epsilon(tilt, eps)
        for y in ([0.5, 0.1], [-0.2, 0.8]):
            y = np.array(y)
            lhs = scaled.evaluate(eps * y, 0.3)
            rhs = eps * tilt.evaluate(y, 0.3)
            assert np.allclose(lhs, rhs, rtol=0, atol=1e-15)

    def test_sup_norm_scales_linearly(self, taper_geom):
        tilt = tilt_field_circular(taper_geom)
        eps = 0.05
        scaled = scale_to_epsilon(tilt, eps)
        assert scaled.sup_norm() == pytest.approx(eps * tilt.sup_norm(),
                                                  rel=1e-12)

    def test_composition_multiplies_scales(self, taper_geom):
        tilt = tilt_field_circular(taper_geom)
        s = scale_to_epsilon(scale_to_epsilon(tilt, 0.5), 0.5)
        assert s.scale == pytest.approx(0.25)

    def test_positive_epsilon_required(self, taper_geom):
        with pytest.raises(ValueError):
            scale_to_epsilon(tilt_field_circular(taper_geom), 0.0)


class TestFlowMap:
    def test_zero_tilt_is_identity(self):
        geom = ChannelGeometry.circular(lambda z: 1.0, d_radius=lambda z: 0.0)
        tilt = tilt_field_circular(geom)
        x0 = np.array([0.3, -0.5])
        assert np.allclose(flow_map(tilt, x0, 1.0), x0, atol=1e-14)

    def test_radial_stretch(self, taper_geom):
        # particles move with the boundary: rho(z) = R(z) rho(0) / R(0)
        tilt = tilt_field_circular(taper_geom)
        out = flow_map(tilt, np.array([1.0, 0.0]), 1.0)
        assert np.allclose(out, [1.5, 0.0], atol=1e-7)

    def test_boundary_stays_on_boundary(self, taper_geom):
        tilt = tilt_field_circular(taper_geom)
        th = 1.1
        x0 = np.array([np.cos(th), np.sin(th)])
        out = flow_map(tilt, x0, 0.7)
        assert abs(np.hypot(*out) - half_taper(0.7)) <= 1e-7

    def test_escape_detected(self, taper_geom):
        # starting outside the inlet section, the trajectory stays outside
        tilt = tilt_field_circular(taper_geom)
        with pytest.raises(FlowEscapeError):
            flow_map(tilt, np.array([1.05, 0.0]), 1.0, escape_tol=1e-4)

    def test_reconstruction_error_small_for_circular(self, taper_geom):
        tilt = tilt_field_circular(taper_geom)
        assert flow_reconstruction_error(taper_geom, tilt, 1.0) <= 1e-6


class TestGeometryValidation:
    def test_positive_radius_required(self):
        with pytest.raises(ValueError):
            ChannelGeometry.circular(lambda z: 1.0 - 2.0 * z)

    def test_table_shape_checked(self):
        with pytest.raises(ValueError):
            ChannelGeometry.tabulated(np.zeros((1, 8, 2)))

    def test_positive_epsilon(self):
        with pytest.raises(ValueError):
            ChannelGeometry.circular(lambda z: 1.0, epsilon=-0.5)
