"""Barotropic pressure laws, the pressure potential, and relative-energy integrands.

The pressure hypothesis implemented here: p(0) = 0, p strictly increasing,
and p'(rho)/rho^(gamma-1) approaching a positive constant for large rho with
gamma > 3/2.  Pure power laws p = kappa*rho^gamma satisfy this exactly; general
laws are represented as a power law times a positive monotone spline factor,
which keeps the asymptotic condition true by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import PchipInterpolator

__all__ = [
    "PressureLaw",
    "EssResCutoff",
    "CoercivityError",
    "CoercivityConstants",
    "pressure_eval",
    "pressure_potential",
    "pressure_potential_prime",
    "relative_energy_density",
    "coercivity_check",
    "ess_res_split",
]

GAMMA_MIN = 1.5  # strict lower bound on the adiabatic exponent


class CoercivityError(ValueError):
    """Sampled violation of the coercivity pinch (signals a non-monotone law)."""


@dataclass(frozen=True)
class PressureLaw:
    """Barotropic law p(rho) = kappa * rho**gamma * f(rho).

    The optional factor f is a positive monotone shape table interpolated by a
    monotone cubic (PCHIP) and held constant beyond its knot range, so the
    large-density ratio p'(rho)/rho**(gamma-1) still has a positive limit.

    Parameters
    ----------
    gamma : float
        Adiabatic exponent, must exceed 3/2.
    kappa : float
        Positive coefficient.
    factor_knots, factor_values : sequence of float, optional
        Strictly increasing knots > 0 and positive factor values.  Omit both
        for the pure power law.
    """

    gamma: float
    kappa: float = 1.0
    factor_knots: tuple = None
    factor_values: tuple = None
    _factor: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not self.gamma > GAMMA_MIN:
            raise ValueError(
                f"adiabatic exponent gamma={self.gamma} violates the growth "
                f"hypothesis gamma > 3/2"
            )
        if not self.kappa > 0:
            raise ValueError(f"pressure coefficient kappa={self.kappa} must be positive")
        if (self.factor_knots is None) != (self.factor_values is None):
            raise ValueError("factor_knots and factor_values must be given together")
        if self.factor_knots is not None:
            knots = np.asarray(self.factor_knots, dtype=float)
            vals = np.asarray(self.factor_values, dtype=float)
            if knots.ndim != 1 or knots.size < 2 or vals.shape != knots.shape:
                raise ValueError("factor table needs >= 2 matching knots/values")
            if not (np.all(np.diff(knots) > 0) and knots[0] > 0):
                raise ValueError("factor knots must be positive and strictly increasing")
            if not np.all(vals > 0):
                raise ValueError("factor values must be positive")
            d = np.diff(vals)
            if not (np.all(d >= 0) or np.all(d <= 0)):
                raise ValueError("factor values must be monotone")
            object.__setattr__(self, "factor_knots", tuple(knots))
            object.__setattr__(self, "factor_values", tuple(vals))
            object.__setattr__(self, "_factor", PchipInterpolator(knots, vals))
            self._validate_hypothesis()

    # -- factor helpers (constant extension outside the knot range) --

    @property
    def is_power_law(self) -> bool:
        return self.factor_knots is None

    def _factor_eval(self, rho):
        k0, k1 = self.factor_knots[0], self.factor_knots[-1]
        rc = np.clip(rho, k0, k1)
        f = self._factor(rc)
        df = np.where((rho > k0) & (rho < k1), self._factor.derivative()(rc), 0.0)
        return f, df

    def _validate_hypothesis(self):
        # p strictly increasing on a sampled grid, and the tail ratio
        # p'(rho)/rho^(gamma-1) within 1% of its limit at rho = 1e2..1e4.
        grid = np.geomspace(1e-6, 1e4, 400)
        _, dp = pressure_eval(self, grid)
        if not np.all(dp > 0):
            raise ValueError("factor table makes p non-monotone: p' <= 0 sampled")
        p_inf = self.kappa * self.gamma * self.factor_values[-1]
        for rho in (1e2, 1e3, 1e4):
            _, dp = pressure_eval(self, rho)
            ratio = float(dp) / rho ** (self.gamma - 1.0)
            if abs(ratio - p_inf) > 0.01 * p_inf:
                raise ValueError(
                    f"tail ratio p'/rho^(gamma-1) = {ratio} at rho={rho} is not "
                    f"within 1% of its limit {p_inf}"
                )


def pressure_eval(law: PressureLaw, rho):
    """Evaluate (p(rho), p'(rho)).  Accepts scalars or arrays, rho >= 0."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise ValueError("density must be nonnegative")
    g, k = law.gamma, law.kappa
    if law.is_power_law:
        p = k * rho**g
        dp = k * g * np.where(rho > 0, rho ** (g - 1.0), 0.0)
    else:
        f, df = law._factor_eval(rho)
        p = k * rho**g * f
        dp = k * rho ** (g - 1.0) * (g * f + rho * df)
        dp = np.where(rho > 0, dp, 0.0)
    if p.ndim == 0:
        return float(p), float(dp)
    return p, dp


def _potential_quad(law: PressureLaw, rho: float) -> float:
    if rho == 0.0:
        return 0.0

    def integrand(s):
        p, _ = pressure_eval(law, s)
        return p / s**2

    val, _ = quad(integrand, 1.0, rho, limit=200)
    return rho * val


def pressure_potential(law: PressureLaw, rho):
    """Pressure potential H(rho) = rho * integral_1^rho p(s)/s^2 ds.

    Closed form kappa*(rho^gamma - rho)/(gamma-1) for pure power laws;
    adaptive quadrature otherwise.  H(0) = 0 by continuous extension.
    """
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise ValueError("density must be nonnegative")
    if law.is_power_law:
        H = law.kappa * (rho**law.gamma - rho) / (law.gamma - 1.0)
    else:
        H = np.vectorize(lambda r: _potential_quad(law, r))(rho)
    if H.ndim == 0:
        return float(H)
    return H


def pressure_potential_prime(law: PressureLaw, rho):
    """H'(rho) = integral_1^rho p(s)/s^2 ds + p(rho)/rho (needs rho > 0)."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0):
        raise ValueError("H' requires positive density")
    if law.is_power_law:
        g, k = law.gamma, law.kappa
        Hp = k * (g * rho ** (g - 1.0) - 1.0) / (g - 1.0)
    else:
        def one(r):
            p, _ = pressure_eval(law, r)
            return _potential_quad(law, r) / r + p / r

        Hp = np.vectorize(one)(rho)
    if Hp.ndim == 0:
        return float(Hp)
    return Hp


def _velocity_sq_diff(rho, u, U):
    u = np.asarray(u, dtype=float)
    U = np.asarray(U, dtype=float)
    d = u - U
    if d.ndim == np.ndim(rho) + 1:
        return np.sum(d * d, axis=-1)
    return d * d


def relative_energy_density(law: PressureLaw, rho, u, r, U):
    """Integrand of the relative energy functional.

    0.5*rho*|u-U|^2 + H(rho) - H'(r)(rho - r) - H(r): the kinetic distance
    plus the Bregman divergence of H.  Vector velocities carry components on
    the last axis; scalar velocities are fine too.  Requires r > 0.
    """
    rho = np.asarray(rho, dtype=float)
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("reference density r must be positive")
    if np.any(rho < 0):
        raise ValueError("density must be nonnegative")
    kin = 0.5 * rho * _velocity_sq_diff(rho, u, U)
    breg = (
        pressure_potential(law, rho)
        - pressure_potential(law, r)
        - pressure_potential_prime(law, r) * (rho - r)
    )
    out = kin + breg
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class CoercivityConstants:
    C1: float
    C2: float
    C3: float


def coercivity_check(law: PressureLaw, K, K_tilde, n_rho: int = 48) -> CoercivityConstants:
    """Empirical pinch constants of the relative-energy integrand.

    On rho, r in K the integrand is pinched between C1 and C2 times
    (|u-U|^2 + (rho-r)^2); for r in K and rho outside K_tilde it dominates
    C3*(1 + rho*|u-U|^2 + rho^gamma).  Constants are fitted by sampling;
    a nonpositive constant raises CoercivityError.
    """
    k_lo, k_hi = map(float, K)
    t_lo, t_hi = map(float, K_tilde)
    if not (0 < t_lo < k_lo <= k_hi < t_hi):
        raise ValueError("need K contained in the interior of K_tilde in (0, inf)")

    rho_g = np.linspace(k_lo, k_hi, n_rho)
    r_g = np.linspace(k_lo, k_hi, n_rho)
    R, P = np.meshgrid(r_g, rho_g, indexing="ij")
    breg = relative_energy_density(law, P, 0.0, R, 0.0)

    ratios = []
    # du = 0 branch: Bregman / (rho-r)^2, diagonal replaced by its limit H''(r)/2
    dd = (P - R) ** 2
    off = dd > 1e-14
    ratios.append(breg[off] / dd[off])
    _, dp = pressure_eval(law, r_g)
    ratios.append(0.5 * dp / r_g)  # lim of Bregman/(rho-r)^2 as rho->r
    # du > 0 branch, including the du->inf limit rho/2
    for du2 in (0.25, 1.0, 4.0, 100.0):
        ratios.append((0.5 * P * du2 + breg).ravel() / (du2 + dd.ravel()))
    ratios.append(0.5 * rho_g)
    ratios = np.concatenate([np.atleast_1d(x) for x in ratios])
    C1, C2 = float(np.min(ratios)), float(np.max(ratios))

    rho_out = np.concatenate(
        [np.geomspace(1e-8, t_lo * (1 - 1e-9), n_rho), np.geomspace(t_hi * (1 + 1e-9), 100 * t_hi, n_rho)]
    )
    RO, RR = np.meshgrid(rho_out, r_g, indexing="ij")
    lows = []
    for du2 in (0.0, 1.0, 25.0):
        num = relative_energy_density(law, RO, 0.0, RR, 0.0) + 0.5 * RO * du2
        den = 1.0 + RO * du2 + RO**law.gamma
        lows.append((num / den).ravel())
    C3 = float(np.min(np.concatenate(lows)))

    if C1 <= 0 or C3 <= 0:
        raise CoercivityError(
            f"coercivity violated: C1={C1}, C3={C3} (law gamma={law.gamma})"
        )
    return CoercivityConstants(C1=C1, C2=C2, C3=C3)


# ---------------------------------------------------------------------------
# essential / residual splitting


def _smoothstep(t):
    """C-infinity step: 0 for t<=0, 1 for t>=1, exp(-1/t) transition between."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.maximum(t, 1e-300)), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / np.maximum(1.0 - t, 1e-300)), 0.0)
    return a / (a + b)


@dataclass(frozen=True)
class EssResCutoff:
    """Smooth density cutoff chi for the essential/residual decomposition.

    chi = 1 on [rho_lower/2, 2*rho_upper], chi = 0 for rho <= rho_lower/4 and
    rho >= 4*rho_upper, with monotone C-infinity transitions.
    """

    rho_lower: float
    rho_upper: float

    def __post_init__(self):
        if not (0 < self.rho_lower <= self.rho_upper):
            raise ValueError("need 0 < rho_lower <= rho_upper")

    def chi(self, rho):
        rho = np.asarray(rho, dtype=float)
        lo, hi = self.rho_lower, self.rho_upper
        rise = _smoothstep((rho - lo / 4.0) / (lo / 2.0 - lo / 4.0))
        fall = _smoothstep((4.0 * hi - rho) / (4.0 * hi - 2.0 * hi))
        out = rise * fall
        if out.ndim == 0:
            return float(out)
        return out


def ess_res_split(cut: EssResCutoff, h, rho):
    """Split h into (h_ess, h_res) = (chi(rho) h, (1-chi(rho)) h).

    The partition is exact in floating point: the larger part (by the value
    of chi) is formed by multiplication, so it has magnitude >= |h|/2, and
    the smaller part is then the exact complement h - larger (Sterbenz).
    """
    h = np.asarray(h, dtype=float)
    chi = np.asarray(cut.chi(rho), dtype=float)
    ess_big = chi * h
    res_big = (1.0 - chi) * h
    big = chi >= 0.5
    h_ess = np.where(big, ess_big, h - res_big)
    h_res = np.where(big, h - ess_big, res_big)
    return h_ess, h_res
