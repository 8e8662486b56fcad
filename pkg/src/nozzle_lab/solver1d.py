"""Finite-volume solvers for the 1D limit systems on a nozzle of area A(z).

Both systems are advanced in the area-weighted conservative form

    d/dt (rho A) + d/dz (rho u A)           = 0
    d/dt (m A)   + d/dz ((rho u^2 + p) A)   = p dA/dz  (+ viscous terms)

which is algebraically the same PDE as the semilinear form with sources
-(A'/A) rho u and -(A'/A) rho u^2, but conserves total mass by exact flux
telescoping.  Convection: Rusanov flux with minmod-limited piecewise-linear
reconstruction of (rho, u), SSP-RK2 in time.  Walls at z = 0, 1 are mirror
ghosts (symmetric rho, antisymmetric u), which makes the wall mass flux
exactly zero.  The viscous drift terms of the Navier-Stokes limit,
nu d2u/dz2 + (mu/3 + eta) d/dz((A'/A) u) with nu = 4mu/3 + eta, are folded
in by Strang splitting with Crank-Nicolson tridiagonal half-steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .geometry import ChannelGeometry, area, area_derivative
from .thermo import PressureLaw, pressure_eval, pressure_potential

__all__ = [
    "Grid1D",
    "State1D",
    "Visc1DParams",
    "Trajectory1D",
    "TimestepError",
    "PositivityError",
    "BreakdownError",
    "CFL_NUMBER",
    "euler_step",
    "ns_drift_step",
    "run_1d",
    "total_mass",
    "total_energy",
    "viscous_update_matrices",
]

CFL_NUMBER = 0.45


class TimestepError(ValueError):
    """dt violates the CFL condition."""


class PositivityError(RuntimeError):
    """Density lost positivity during a step."""


class BreakdownError(RuntimeError):
    """Velocity exceeded the breakdown threshold (solution blow-up)."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


@dataclass(frozen=True)
class Grid1D:
    """Uniform cell-centered grid on [0, 1]."""

    n_cells: int

    def __post_init__(self):
        if self.n_cells < 16:
            raise ValueError("n_cells must be >= 16")

    @property
    def dz(self) -> float:
        return 1.0 / self.n_cells

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 0.5) * self.dz

    @property
    def faces(self) -> np.ndarray:
        return np.arange(self.n_cells + 1) * self.dz


@dataclass(frozen=True)
class State1D:
    """Conserved variables (rho_i, m_i = rho_i u_i) on a Grid1D."""

    grid: Grid1D
    rho: np.ndarray
    m: np.ndarray

    def __post_init__(self):
        if self.rho.shape != (self.grid.n_cells,) or self.m.shape != self.rho.shape:
            raise ValueError("state arrays must match the grid")
        if not np.all(self.rho > 0):
            raise PositivityError("initial density must be positive")

    @property
    def u(self) -> np.ndarray:
        return self.m / self.rho


@dataclass(frozen=True)
class Visc1DParams:
    """Viscosity coefficients of the drift system."""

    mu: float
    eta: float = 0.0

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("shear viscosity mu must be positive")
        if self.eta < 0:
            raise ValueError("bulk viscosity eta must be nonnegative")

    @property
    def nu(self) -> float:
        return 4.0 * self.mu / 3.0 + self.eta

    @property
    def drift_coefficient(self) -> float:
        return self.mu / 3.0 + self.eta


class AreaCache1D:
    """Cell/face areas and derived geometric data, computed once per run."""

    def __init__(self, geom: ChannelGeometry, grid: Grid1D):
        self.A_face = np.array([area(geom, z) for z in grid.faces])
        self.A_cell = np.array([area(geom, z) for z in grid.centers])
        self.dA_cell = np.array([area_derivative(geom, z) for z in grid.centers])
        self.a_cell = self.dA_cell / self.A_cell  # A'/A at centers
        self.const_A = bool(np.all(self.A_face == self.A_face[0])
                            and np.all(self.A_cell == self.A_face[0]))


def _minmod(a, b):
    s = np.sign(a)
    return s * np.minimum(np.abs(a), np.abs(b)) * (s == np.sign(b))


def _extend_mirror(rho, u):
    """Two mirror ghost cells per wall: rho symmetric, u antisymmetric."""
    rho_e = np.concatenate([rho[1::-1], rho, rho[:-3:-1]])
    u_e = np.concatenate([-u[1::-1], u, -u[:-3:-1]])
    return rho_e, u_e


def _face_states(q):
    """Minmod MUSCL face values from an extended array (n+4,).

    Returns (qL, qR) at the n+1 physical faces.
    """
    d = np.diff(q)
    s = np.zeros_like(q)
    s[1:-1] = _minmod(d[:-1], d[1:])
    qL = q[1:-2] + 0.5 * s[1:-2]
    qR = q[2:-1] - 0.5 * s[2:-1]
    return qL, qR


def _rusanov(rhoL, uL, rhoR, uR, law):
    pL, dpL = pressure_eval(law, rhoL)
    pR, dpR = pressure_eval(law, rhoR)
    mL, mR = rhoL * uL, rhoR * uR
    FL = np.stack([mL, mL * uL + pL])
    FR = np.stack([mR, mR * uR + pR])
    s = np.maximum(np.abs(uL) + np.sqrt(dpL), np.abs(uR) + np.sqrt(dpR))
    return 0.5 * (FL + FR) - 0.5 * s * np.stack([rhoR - rhoL, mR - mL])


def _convective_rhs(rho, m, cache: AreaCache1D, law: PressureLaw, dz):
    """Convective right-hand side (d rho/dt, d m/dt), unweighted variables.

    The area-weighted flux difference is grouped as
    A_+ (F - p_i) - A_- (F - p_i) so the rest state is an exact fixed point,
    and at constant area the weights drop out bit-for-bit.
    """
    u = m / rho
    rho_e, u_e = _extend_mirror(rho, u)
    rhoL, rhoR = _face_states(rho_e)
    uL, uR = _face_states(u_e)
    F = _rusanov(rhoL, uL, rhoR, uR, law)
    if cache.const_A:
        drho = -np.diff(F[0]) / dz
        dm = -np.diff(F[1]) / dz
    else:
        p_cell, _ = pressure_eval(law, rho)
        Af = cache.A_face
        drho = -np.diff(Af * F[0]) / (dz * cache.A_cell)
        right = Af[1:] * (F[1][1:] - p_cell)
        left = Af[:-1] * (F[1][:-1] - p_cell)
        dm = -(right - left) / (dz * cache.A_cell)
    return drho, dm


def _max_signal(state: State1D, law: PressureLaw) -> float:
    _, dp = pressure_eval(law, state.rho)
    return float(np.max(np.abs(state.u) + np.sqrt(dp)))


def _check_cfl(state, law, dt, dz):
    bound = CFL_NUMBER * dz / _max_signal(state, law)
    if dt > bound * (1.0 + 1e-12):
        raise TimestepError(f"dt={dt} exceeds the CFL bound {bound}")


def _ssprk2(state: State1D, cache, law, dt):
    grid = state.grid
    dz = grid.dz

    k1r, k1m = _convective_rhs(state.rho, state.m, cache, law, dz)
    r1 = state.rho + dt * k1r
    m1 = state.m + dt * k1m
    if np.any(r1 <= 0):
        raise PositivityError("density lost positivity in stage 1")
    k2r, k2m = _convective_rhs(r1, m1, cache, law, dz)
    rho_new = 0.5 * state.rho + 0.5 * (r1 + dt * k2r)
    m_new = 0.5 * state.m + 0.5 * (m1 + dt * k2m)
    if np.any(rho_new <= 0):
        raise PositivityError("density lost positivity in stage 2")
    return State1D(grid, rho_new, m_new)


def euler_step(state: State1D, geom: ChannelGeometry, law: PressureLaw, dt: float,
               cache: AreaCache1D | None = None) -> State1D:
    """One SSP-RK2 step of the nozzle Euler system with wall boundaries."""
    if cache is None:
        cache = AreaCache1D(geom, state.grid)
    _check_cfl(state, law, dt, state.grid.dz)
    return _ssprk2(state, cache, law, dt)


def viscous_update_matrices(rho, cache: AreaCache1D, visc: Visc1DParams, dz, dt):
    """Crank-Nicolson matrices (M_impl, M_expl) for the viscous half-step.

    The operator is L u = nu u'' + c_d d/dz(a u) with a = A'/A, discretized by
    centered differences; u = 0 at both walls via antisymmetric ghosts.
    Returns banded storage for M_impl = diag(rho)/dt - L/2 and the dense
    tridiagonal arrays of M_expl = diag(rho)/dt + L/2.
    """
    n = rho.shape[0]
    nu, cd = visc.nu, visc.drift_coefficient
    a = cache.a_cell
    lower = np.full(n, nu / dz**2)
    upper = np.full(n, nu / dz**2)
    diag = np.full(n, -2.0 * nu / dz**2)
    # drift: +a_{i+1}/(2dz) on upper, -a_{i-1}/(2dz) on lower
    upper[:-1] += cd * a[1:] / (2 * dz)
    lower[1:] -= cd * a[:-1] / (2 * dz)
    # wall ghosts: u_{-1} = -u_0 and u_n = -u_{n-1}
    diag[0] += -nu / dz**2 + cd * a[0] / (2 * dz)
    diag[-1] += -nu / dz**2 - cd * a[-1] / (2 * dz)

    impl = np.zeros((3, n))
    impl[0, 1:] = -0.5 * upper[:-1]
    impl[1] = rho / dt - 0.5 * diag
    impl[2, :-1] = -0.5 * lower[1:]
    expl = (0.5 * lower, rho / dt + 0.5 * diag, 0.5 * upper)
    return impl, expl


def _viscous_half(state: State1D, cache, visc, dt):
    n = state.grid.n_cells
    dz = state.grid.dz
    impl, (lo, di, up) = viscous_update_matrices(state.rho, cache, visc, dz, dt)
    u = state.u
    rhs = di * u
    rhs[:-1] += up[:-1] * u[1:]
    rhs[1:] += lo[1:] * u[:-1]
    u_new = solve_banded((1, 1), impl, rhs)
    return State1D(state.grid, state.rho, state.rho * u_new)


def ns_drift_step(state: State1D, geom: ChannelGeometry, law: PressureLaw,
                  visc: Visc1DParams, dt: float,
                  cache: AreaCache1D | None = None) -> State1D:
    """One Strang-split step of the Navier-Stokes drift system:
    half viscous (Crank-Nicolson), full convective (SSP-RK2), half viscous."""
    if cache is None:
        cache = AreaCache1D(geom, state.grid)
    _check_cfl(state, law, dt, state.grid.dz)
    s = _viscous_half(state, cache, visc, 0.5 * dt)
    s = _ssprk2(s, cache, law, dt)
    return _viscous_half(s, cache, visc, 0.5 * dt)


def total_mass(state: State1D, cache: AreaCache1D) -> float:
    return float(np.sum(state.rho * cache.A_cell) * state.grid.dz)


def total_energy(state: State1D, cache: AreaCache1D, law: PressureLaw) -> float:
    e = 0.5 * state.rho * state.u**2 + pressure_potential(law, state.rho)
    return float(np.sum(e * cache.A_cell) * state.grid.dz)


@dataclass
class Trajectory1D:
    """States sampled at requested output times, with mass/energy logs."""

    system: str
    times: np.ndarray
    states: list
    mass: np.ndarray
    energy: np.ndarray
    geom: ChannelGeometry
    law: PressureLaw
    visc: Visc1DParams | None
    n_steps: int


BREAKDOWN_THRESHOLD = 1e3


def run_1d(system: str, initial: State1D, geom: ChannelGeometry, law: PressureLaw,
           T_end: float, outputs, visc: Visc1DParams | None = None,
           cfl: float = CFL_NUMBER) -> Trajectory1D:
    """Advance to T_end with adaptive CFL steps, sampling at output times.

    system is "euler" or "nsdrift" (the latter requires visc).  Raises
    BreakdownError with the breakdown time if max|u| exceeds 1e3.
    """
    if system not in ("euler", "nsdrift"):
        raise ValueError(f"unknown system {system!r}")
    if system == "nsdrift" and visc is None:
        raise ValueError("nsdrift needs Visc1DParams")
    outputs = np.asarray(sorted(set(float(t) for t in outputs)), dtype=float)
    if outputs.size == 0 or outputs[0] < 0 or outputs[-1] > T_end + 1e-12:
        raise ValueError("outputs must lie in [0, T_end]")

    cache = AreaCache1D(geom, initial.grid)
    dz = initial.grid.dz
    state, t, n_steps = initial, 0.0, 0

    times, states, mass, energy = [], [], [], []

    def record(tau, s):
        times.append(tau)
        states.append(s)
        mass.append(total_mass(s, cache))
        energy.append(total_energy(s, cache, law))

    out_iter = iter(outputs)
    next_out = next(out_iter, None)
    if next_out is not None and next_out <= 1e-14:
        record(0.0, state)
        next_out = next(out_iter, None)

    while next_out is not None:
        while t < next_out - 1e-14:
            dt = min(cfl * dz / _max_signal(state, law), next_out - t)
            if system == "euler":
                state = euler_step(state, geom, law, dt, cache)
            else:
                state = ns_drift_step(state, geom, law, visc, dt, cache)
            t += dt
            n_steps += 1
            vmax = float(np.max(np.abs(state.u)))
            if vmax > BREAKDOWN_THRESHOLD:
                raise BreakdownError(
                    f"solution breakdown: max|u|={vmax} at t={t}", time=t
                )
        record(next_out, state)
        next_out = next(out_iter, None)

    return Trajectory1D(system=system, times=np.asarray(times), states=states,
                        mass=np.asarray(mass), energy=np.asarray(energy),
                        geom=geom, law=law, visc=visc, n_steps=n_steps)
