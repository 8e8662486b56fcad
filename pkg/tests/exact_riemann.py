"""Exact solution of the barotropic Riemann problem, used as a test oracle.

For p(rho) = kappa rho^gamma both characteristic families are genuinely
nonlinear, so the solution of piecewise-constant initial data consists of two
waves (shock or rarefaction each) around a constant middle state.  The middle
density is the unique root of the monotone wave-curve equation, and the
solution is self-similar in xi = (z - z0)/t.

This module is independent of the package under test: it implements the
classical wave-curve construction directly from the Rankine-Hugoniot and
Riemann-invariant relations.
"""

import numpy as np
from scipy.optimize import brentq


def _sound(rho, gamma, kappa):
    return np.sqrt(kappa * gamma) * rho ** (0.5 * (gamma - 1.0))


def _w(rho, gamma, kappa):
    # integral of c(s)/s, the Riemann-invariant coordinate
    return 2.0 * _sound(rho, gamma, kappa) / (gamma - 1.0)


def _shock_jump(rho, rho0, gamma, kappa):
    p = kappa * rho**gamma
    p0 = kappa * rho0**gamma
    return np.sqrt((p - p0) * (rho - rho0) / (rho * rho0))


class RiemannSolution:
    """Self-similar solution; sample with xi = (z - z0)/t."""

    def __init__(self, rho_l, u_l, rho_r, u_r, gamma, kappa=1.0):
        if rho_l <= 0 or rho_r <= 0:
            raise ValueError("oracle needs positive side densities")
        self.left = (float(rho_l), float(u_l))
        self.right = (float(rho_r), float(u_r))
        self.gamma = float(gamma)
        self.kappa = float(kappa)

        def f(rho):
            return self._u_from_left(rho) - self._u_from_right(rho)

        lo = 1e-12 * min(rho_l, rho_r)
        if f(lo) <= 0.0:
            raise ValueError("data produce vacuum; oracle not applicable")
        hi = 2.0 * max(rho_l, rho_r)
        while f(hi) > 0.0:
            hi *= 2.0
        self.rho_star = brentq(f, lo, hi, xtol=1e-15, rtol=8.9e-16)
        self.u_star = self._u_from_left(self.rho_star)

    def _u_from_left(self, rho):
        rho_l, u_l = self.left
        g, k = self.gamma, self.kappa
        if rho <= rho_l:
            return u_l - (_w(rho, g, k) - _w(rho_l, g, k))
        return u_l - _shock_jump(rho, rho_l, g, k)

    def _u_from_right(self, rho):
        rho_r, u_r = self.right
        g, k = self.gamma, self.kappa
        if rho <= rho_r:
            return u_r + (_w(rho, g, k) - _w(rho_r, g, k))
        return u_r + _shock_jump(rho, rho_r, g, k)

    def sample(self, xi):
        """(rho, u) at self-similar coordinates xi (scalar or array)."""
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        rho = np.empty_like(xi)
        u = np.empty_like(xi)
        for i, x in enumerate(xi):
            rho[i], u[i] = self._sample_one(x)
        return rho, u

    def _sample_one(self, xi):
        g, k = self.gamma, self.kappa
        rho_l, u_l = self.left
        rho_r, u_r = self.right
        rs, us = self.rho_star, self.u_star
        c_l = _sound(rho_l, g, k)
        c_r = _sound(rho_r, g, k)
        c_s = _sound(rs, g, k)

        # 1-wave
        if rs > rho_l:  # left shock
            s = (rs * us - rho_l * u_l) / (rs - rho_l)
            if xi < s:
                return rho_l, u_l
        else:  # left rarefaction
            head, tail = u_l - c_l, us - c_s
            if xi < head:
                return rho_l, u_l
            if xi <= tail:
                K = u_l + _w(rho_l, g, k)
                c = (g - 1.0) * (K - xi) / (g + 1.0)
                rho = (c * c / (k * g)) ** (1.0 / (g - 1.0))
                return rho, xi + c
        # 2-wave
        if rs > rho_r:  # right shock
            s = (rho_r * u_r - rs * us) / (rho_r - rs)
            if xi > s:
                return rho_r, u_r
        else:  # right rarefaction
            tail, head = us + c_s, u_r + c_r
            if xi > head:
                return rho_r, u_r
            if xi >= tail:
                K = u_r - _w(rho_r, g, k)
                c = (g - 1.0) * (xi - K) / (g + 1.0)
                rho = (c * c / (k * g)) ** (1.0 / (g - 1.0))
                return rho, xi - c
        return rs, us

    def cell_averages(self, z0, t, faces, n_gauss=5):
        """Exact cell averages of (rho, u) on cells bounded by ``faces``."""
        faces = np.asarray(faces, dtype=float)
        x, wq = np.polynomial.legendre.leggauss(n_gauss)
        zl, zr = faces[:-1], faces[1:]
        mid = 0.5 * (zl + zr)
        half = 0.5 * (zr - zl)
        rho_avg = np.zeros(zl.size)
        u_avg = np.zeros(zl.size)
        for xq, wq_ in zip(x, wq):
            z = mid + half * xq
            rho, u = self.sample((z - z0) / t)
            rho_avg += 0.5 * wq_ * rho
            u_avg += 0.5 * wq_ * u
        return rho_avg, u_avg
