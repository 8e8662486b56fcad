"""Shared fixtures: canonical law, channel profiles, and initial data."""

import numpy as np
import pytest

from nozzle_lab.geometry import ChannelGeometry
from nozzle_lab.thermo import PressureLaw


def taper_radius(z):
    return 1.0 + 0.5 * z


def taper_radius_deriv(z):
    return 0.5


def bump_rho0(z):
    return 1.0 + 0.1 * np.cos(2.0 * np.pi * z)


def bump_v0(z):
    # vanishes to second order at both walls
    return 0.05 * np.sin(np.pi * z) ** 2 * np.sin(3.0 * np.pi * z)


@pytest.fixture(scope="session")
def law():
    return PressureLaw(gamma=2.0, kappa=1.0)


@pytest.fixture(scope="session")
def tapered_geom():
    return ChannelGeometry.circular(taper_radius, d_radius=taper_radius_deriv)


@pytest.fixture(scope="session")
def straight_geom():
    return ChannelGeometry.circular(lambda z: 1.0, d_radius=lambda z: 0.0)
