"""Axisymmetric compressible Navier-Stokes on thin circular channels.

Finite volumes on the physical meridian section {0 <= r <= eps*R(z)} with
the measure r dr dz.  Cell and face moments of r are computed exactly for
the polygonal cells, which makes the rest state an exact fixed point and
conserves 2*pi*int(rho r dr dz) to round-off.  The lateral boundary is slip
(u.n = 0 and zero tangential stress, enforced through mirror ghost states
in the boundary-fitted frame); the caps at z = 0, 1 are slip or no-slip.
The axis r = 0 carries no flux (zero measure) and needs only parity ghosts
(u_r odd, u_z and rho even) for reconstruction and gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import ChannelGeometry, UnsupportedKindError
from .solver1d import (BREAKDOWN_THRESHOLD, CFL_NUMBER, BreakdownError,
                       PositivityError, TimestepError, _minmod)
from .thermo import PressureLaw, pressure_eval, pressure_potential

# explicit diffusion on a 2D grid is stable for dt <= h^2 rho/(4 (2mu+eta) lam);
# keep a margin for the hoop and cross terms
VISC_CFL = 0.2

_BC_ALIASES = {
    "slip": "slip",
    "SlipOnly": "slip",
    "noslip_caps": "noslip_caps",
    "SlipPlusNoSlipCaps": "noslip_caps",
}


def _normalize_bc(bc_mode: str) -> str:
    try:
        return _BC_ALIASES[bc_mode]
    except KeyError:
        raise ValueError(
            f"unknown bc_mode {bc_mode!r}; use 'slip' or 'noslip_caps'") from None


@dataclass(frozen=True)
class ViscParams3D:
    """Viscosity coefficients mu, eta of the stress law and the scaling lam."""

    mu: float
    eta: float = 0.0
    lam: float = 1.0

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("shear viscosity mu must be positive")
        if self.eta < 0:
            raise ValueError("bulk viscosity eta must be nonnegative")
        if not self.lam > 0:
            raise ValueError("viscosity scaling lam must be positive")


class AxiGrid:
    """Mapped n_r x n_z cell grid, reference (rhat, z) in [0,1]^2, r = rhat*eps*R(z).

    All geometric moments are exact for the straight-edged quadrilateral
    cells: V = int r dr dz per cell, plain areas, and per-face int r dl.
    """

    def __init__(self, geom: ChannelGeometry, n_r: int, n_z: int):
        if geom.kind != "circular":
            raise UnsupportedKindError("axisymmetric solver needs a circular channel")
        if n_r < 8:
            raise ValueError("n_r must be >= 8")
        if n_z < 32:
            raise ValueError("n_z must be >= 32")
        X0 = np.asarray(geom.centerline(0.0), dtype=float)
        for z in np.linspace(0.0, 1.0, 17):
            if not np.allclose(np.asarray(geom.centerline(z), dtype=float), X0,
                               rtol=0.0, atol=1e-12):
                raise ValueError("axisymmetry requires a straight centerline")
        self.geom = geom
        self.n_r = int(n_r)
        self.n_z = int(n_z)
        eps = geom.epsilon

        self.z_faces = np.linspace(0.0, 1.0, n_z + 1)
        self.dz = 1.0 / n_z
        self.z_centers = self.z_faces[:-1] + 0.5 * self.dz
        R_f = np.array([float(geom.radius(z)) for z in self.z_faces])
        self.R_c = np.array([float(geom.radius(z)) for z in self.z_centers])
        self.dR_c = np.array([float(geom.radius_deriv(z)) for z in self.z_centers])
        if np.any(R_f <= 0) or np.any(self.R_c <= 0):
            raise ValueError("channel radius must stay positive")
        self.rhat_faces = np.arange(n_r + 1) / n_r
        self.rhat_c = (np.arange(n_r) + 0.5) / n_r
        # vertices (n_r+1, n_z+1)
        self.r_vert = self.rhat_faces[:, None] * (eps * R_f)[None, :]

        r00 = self.r_vert[:-1, :-1]
        r10 = self.r_vert[1:, :-1]
        r01 = self.r_vert[:-1, 1:]
        r11 = self.r_vert[1:, 1:]
        dz = self.dz
        # int r dr dz over the quad (Green's theorem, edge-exact)
        self.V = dz * ((r10**2 + r10 * r11 + r11**2)
                       - (r00**2 + r00 * r01 + r01**2)) / 6.0
        self.area_plain = dz * ((r10 + r11) - (r00 + r01)) / 2.0
        if np.any(self.V <= 0) or np.any(self.area_plain <= 0):
            raise ValueError("mapping Jacobian must be positive")
        self.r_cell = (r00 + r10 + r01 + r11) / 4.0
        self.z_cell = np.broadcast_to(self.z_centers[None, :],
                                      (n_r, n_z)).copy()

        # i-faces (constant rhat), shape (n_r+1, n_z); unit normal points +rhat
        ra = self.r_vert[:, :-1]
        rb = self.r_vert[:, 1:]
        drf = rb - ra
        L = np.hypot(drf, dz)
        self.fi_nr = dz / L
        self.fi_nz = -drf / L
        self.fi_M = 0.5 * (ra + rb) * L          # int r dl
        self.fi_rmid = 0.5 * (ra + rb)
        # pressure moments n * int r dl, used by the grouped p-flux assembly
        self.fi_nrM = self.fi_nr * self.fi_M
        self.fi_nzM = self.fi_nz * self.fi_M
        # j-faces (constant z), shape (n_r, n_z+1); unit normal is exactly (0,1)
        ra_j = self.r_vert[:-1, :]
        rb_j = self.r_vert[1:, :]
        self.fj_M = 0.5 * (rb_j**2 - ra_j**2)    # int r dl on a flat face
        self.fj_rmid = 0.5 * (ra_j + rb_j)

        # wall face frame (i = n_r) and ghost-center offset
        self.wall_nr = self.fi_nr[-1]
        self.wall_nz = self.fi_nz[-1]
        self.wall_delta = (self.fi_rmid[-1] - self.r_cell[-1]) * self.wall_nr

        # metric terms for mapped gradients, cached per cell
        self.inv_eR = 1.0 / (eps * self.R_c)                      # (n_z,)
        self.slope_term = self.rhat_c[:, None] * (self.dR_c / self.R_c)[None, :]
        self.h_i = eps * self.R_c / n_r                           # radial spacing
        self.tilt_c = eps * np.abs(self.dR_c)

    @property
    def shape(self):
        return (self.n_r, self.n_z)


@dataclass(frozen=True)
class AxiState:
    """Cell fields (rho, rho u_r, rho u_z); swirl-free by construction."""

    grid: AxiGrid
    rho: np.ndarray
    mr: np.ndarray
    mz: np.ndarray

    def __post_init__(self):
        shape = self.grid.shape
        if self.rho.shape != shape or self.mr.shape != shape or self.mz.shape != shape:
            raise ValueError("state arrays must match the grid shape")
        if not np.all(self.rho > 0):
            raise PositivityError("density must be positive")

    @property
    def u_r(self) -> np.ndarray:
        return self.mr / self.rho

    @property
    def u_z(self) -> np.ndarray:
        return self.mz / self.rho


def initial_axi_state(grid: AxiGrid, rho_fn, ur_fn, uz_fn) -> AxiState:
    """Evaluate closed-form initial data f(rhat, z) at the cell centers."""
    rh, zz = np.meshgrid(grid.rhat_c, grid.z_centers, indexing="ij")
    rho = np.asarray(rho_fn(rh, zz), dtype=float) * np.ones(grid.shape)
    ur = np.asarray(ur_fn(rh, zz), dtype=float) * np.ones(grid.shape)
    uz = np.asarray(uz_fn(rh, zz), dtype=float) * np.ones(grid.shape)
    return AxiState(grid, rho, rho * ur, rho * uz)


def _stress_comps(gur_r, gur_z, guz_r, guz_z, hoop, mu, eta):
    """Stress components (S_rr, S_tt, S_zz, S_rz) and div u.

    S = mu*(grad u + grad^T u - 2/3 div u I) + eta div u I, with the
    axisymmetric hoop strain e_tt = u_r/r folded in through `hoop`.
    """
    div = gur_r + guz_z + hoop
    lame = eta - 2.0 * mu / 3.0
    S_rr = 2.0 * mu * gur_r + lame * div
    S_tt = 2.0 * mu * hoop + lame * div
    S_zz = 2.0 * mu * guz_z + lame * div
    S_rz = mu * (gur_z + guz_r)
    return S_rr, S_tt, S_zz, S_rz, div


def stress_tensor(grad_u: np.ndarray, hoop, mu: float, eta: float) -> np.ndarray:
    """3x3 stress in (r, theta, z) ordering from meridian gradient data.

    grad_u[..., a, b] = d u_a / d x_b with a, b in {r, z}; hoop = u_r/r
    (its L'Hopital value d u_r/d r on the axis).  trace(S) = 3 eta div u.
    """
    grad_u = np.asarray(grad_u, dtype=float)
    hoop = np.asarray(hoop, dtype=float)
    S_rr, S_tt, S_zz, S_rz, _ = _stress_comps(
        grad_u[..., 0, 0], grad_u[..., 0, 1],
        grad_u[..., 1, 0], grad_u[..., 1, 1], hoop, mu, eta)
    S = np.zeros(np.broadcast(grad_u[..., 0, 0], hoop).shape + (3, 3))
    S[..., 0, 0] = S_rr
    S[..., 1, 1] = S_tt
    S[..., 2, 2] = S_zz
    S[..., 0, 2] = S_rz
    S[..., 2, 0] = S_rz
    return S


def _reflect(ur, uz, nr_, nz_):
    un = ur * nr_ + uz * nz_
    return ur - 2.0 * un * nr_, uz - 2.0 * un * nz_


def _extend_i(rho, ur, uz, grid: AxiGrid):
    """One ghost row below the axis (parity) and above the wall (slip mirror)."""
    urg, uzg = _reflect(ur[-1], uz[-1], grid.wall_nr, grid.wall_nz)
    rho_e = np.vstack([rho[:1], rho, rho[-1:]])
    ur_e = np.vstack([-ur[:1], ur, urg[None, :]])
    uz_e = np.vstack([uz[:1], uz, uzg[None, :]])
    return rho_e, ur_e, uz_e


def _extend_j(rho, ur, uz, bc: str):
    """One ghost column past each cap; slip mirrors u_z, no-slip mirrors u."""
    sgn = 1.0 if bc == "slip" else -1.0
    rho_e = np.hstack([rho[:, :1], rho, rho[:, -1:]])
    ur_e = np.hstack([sgn * ur[:, :1], ur, sgn * ur[:, -1:]])
    uz_e = np.hstack([-uz[:, :1], uz, -uz[:, -1:]])
    return rho_e, ur_e, uz_e


def _slopes_i(q_e):
    d = np.diff(q_e, axis=0)
    return _minmod(d[:-1, :], d[1:, :])


def _slopes_j(q_e):
    d = np.diff(q_e, axis=1)
    return _minmod(d[:, :-1], d[:, 1:])


def _rusanov_face(rhoL, urL, uzL, rhoR, urR, uzR, nr_, nz_, law):
    """Rusanov face flux with the pressure returned separately.

    The average face pressure is grouped against the owning cell's pressure
    during assembly (see _rhs), which makes the rest state bit-exact.
    """
    pL, dpL = pressure_eval(law, rhoL)
    pR, dpR = pressure_eval(law, rhoR)
    unL = urL * nr_ + uzL * nz_
    unR = urR * nr_ + uzR * nz_
    s = np.maximum(np.abs(unL) + np.sqrt(dpL), np.abs(unR) + np.sqrt(dpR))
    fm = 0.5 * (rhoL * unL + rhoR * unR) - 0.5 * s * (rhoR - rhoL)
    fr = 0.5 * (rhoL * urL * unL + rhoR * urR * unR) \
        - 0.5 * s * (rhoR * urR - rhoL * urL)
    fz = 0.5 * (rhoL * uzL * unL + rhoR * uzR * unR) \
        - 0.5 * s * (rhoR * uzR - rhoL * uzL)
    pbar = 0.5 * (pL + pR)
    return fm, fr, fz, pbar


def _cell_gradients(rho, ur, uz, grid: AxiGrid, bc: str):
    """Physical-space velocity gradients at cell centers via the mapping."""
    drhat = 1.0 / grid.n_r
    _, ur_ei, uz_ei = _extend_i(rho, ur, uz, grid)
    _, ur_ej, uz_ej = _extend_j(rho, ur, uz, bc)
    dur_drh = (ur_ei[2:] - ur_ei[:-2]) / (2.0 * drhat)
    duz_drh = (uz_ei[2:] - uz_ei[:-2]) / (2.0 * drhat)
    dur_dzh = (ur_ej[:, 2:] - ur_ej[:, :-2]) / (2.0 * grid.dz)
    duz_dzh = (uz_ej[:, 2:] - uz_ej[:, :-2]) / (2.0 * grid.dz)
    gur_r = dur_drh * grid.inv_eR
    guz_r = duz_drh * grid.inv_eR
    gur_z = dur_dzh - grid.slope_term * dur_drh
    guz_z = duz_dzh - grid.slope_term * duz_drh
    return gur_r, gur_z, guz_r, guz_z


def _rhs(rho, ur, uz, grid: AxiGrid, law: PressureLaw, visc: ViscParams3D, bc: str):
    """Moment rates d(V rho)/dt, d(V m_r)/dt, d(V m_z)/dt for one stage."""
    n_r, n_z = grid.shape
    lam = visc.lam
    p_c, _ = pressure_eval(law, rho)

    # ---- convection, i-faces 1..n_r (face 0 sits on the axis: zero moment)
    rho_ei, ur_ei, uz_ei = _extend_i(rho, ur, uz, grid)
    sr, sur, suz = _slopes_i(rho_ei), _slopes_i(ur_ei), _slopes_i(uz_ei)
    rhoL = rho + 0.5 * sr
    urL = ur + 0.5 * sur
    uzL = uz + 0.5 * suz
    rhoR = np.empty_like(rho)
    urR = np.empty_like(ur)
    uzR = np.empty_like(uz)
    rhoR[:-1] = (rho - 0.5 * sr)[1:]
    urR[:-1] = (ur - 0.5 * sur)[1:]
    uzR[:-1] = (uz - 0.5 * suz)[1:]
    rhoR[-1] = rhoL[-1]
    urR[-1], uzR[-1] = _reflect(urL[-1], uzL[-1], grid.wall_nr, grid.wall_nz)
    nr_i, nz_i, M_i = grid.fi_nr[1:], grid.fi_nz[1:], grid.fi_M[1:]
    fm, fr, fz, pbar = _rusanov_face(rhoL, urL, uzL, rhoR, urR, uzR,
                                     nr_i, nz_i, law)
    Phi_m_i = np.zeros((n_r + 1, n_z))
    Phi_r_i = np.zeros((n_r + 1, n_z))
    Phi_z_i = np.zeros((n_r + 1, n_z))
    Phi_m_i[1:] = fm * M_i
    Phi_r_i[1:] = fr * M_i
    Phi_z_i[1:] = fz * M_i
    pbar_i = np.zeros((n_r + 1, n_z))
    pbar_i[1:] = pbar
    pbar_i[0] = p_c[0]           # axis face has zero moment; any value works

    # ---- convection, j-faces 0..n_z
    rho_ej, ur_ej, uz_ej = _extend_j(rho, ur, uz, bc)
    sr, sur, suz = _slopes_j(rho_ej), _slopes_j(ur_ej), _slopes_j(uz_ej)
    sgn = 1.0 if bc == "slip" else -1.0
    rhoLj = np.empty((n_r, n_z + 1))
    urLj = np.empty_like(rhoLj)
    uzLj = np.empty_like(rhoLj)
    rhoRj = np.empty_like(rhoLj)
    urRj = np.empty_like(rhoLj)
    uzRj = np.empty_like(rhoLj)
    rhoLj[:, 1:] = rho + 0.5 * sr
    urLj[:, 1:] = ur + 0.5 * sur
    uzLj[:, 1:] = uz + 0.5 * suz
    rhoRj[:, :-1] = rho - 0.5 * sr
    urRj[:, :-1] = ur - 0.5 * sur
    uzRj[:, :-1] = uz - 0.5 * suz
    rhoLj[:, 0] = rhoRj[:, 0]
    urLj[:, 0] = sgn * urRj[:, 0]
    uzLj[:, 0] = -uzRj[:, 0]
    rhoRj[:, -1] = rhoLj[:, -1]
    urRj[:, -1] = sgn * urLj[:, -1]
    uzRj[:, -1] = -uzLj[:, -1]
    fmj, frj, fzj, pbar_j = _rusanov_face(rhoLj, urLj, uzLj, rhoRj, urRj, uzRj,
                                          0.0, 1.0, law)
    Phi_m_j = fmj * grid.fj_M
    Phi_r_j = frj * grid.fj_M
    Phi_z_j = fzj * grid.fj_M

    # ---- viscous fluxes and hoop stress
    gur_r, gur_z, guz_r, guz_z = _cell_gradients(rho, ur, uz, grid, bc)
    hoop_c = ur / grid.r_cell
    S_rr_c, S_tt_c, S_zz_c, S_rz_c, _ = _stress_comps(
        gur_r, gur_z, guz_r, guz_z, hoop_c, visc.mu, visc.eta)

    # interior i-faces 1..n_r-1: averaged gradients with a radial
    # center-difference replacing the r-component (cell centers share z)
    dr_cc = grid.r_cell[1:] - grid.r_cell[:-1]
    f_gur_r = (ur[1:] - ur[:-1]) / dr_cc
    f_guz_r = (uz[1:] - uz[:-1]) / dr_cc
    f_gur_z = 0.5 * (gur_z[1:] + gur_z[:-1])
    f_guz_z = 0.5 * (guz_z[1:] + guz_z[:-1])
    f_hoop = 0.5 * (ur[1:] + ur[:-1]) / grid.fi_rmid[1:-1]
    S_rr, S_tt, S_zz, S_rz, _ = _stress_comps(
        f_gur_r, f_gur_z, f_guz_r, f_guz_z, f_hoop, visc.mu, visc.eta)
    nr_f, nz_f, M_f = grid.fi_nr[1:-1], grid.fi_nz[1:-1], grid.fi_M[1:-1]
    Phi_r_i[1:-1] -= lam * (S_rr * nr_f + S_rz * nz_f) * M_f
    Phi_z_i[1:-1] -= lam * (S_rz * nr_f + S_zz * nz_f) * M_f

    # wall face: one-sided gradient with the normal derivative taken from the
    # mirrored ghost, tangential stress projected away (slip condition)
    nwr, nwz, dlt = grid.wall_nr, grid.wall_nz, grid.wall_delta
    ur_w, uz_w = ur[-1], uz[-1]
    urg, uzg = _reflect(ur_w, uz_w, nwr, nwz)
    dn_ur = gur_r[-1] * nwr + gur_z[-1] * nwz
    dn_uz = guz_r[-1] * nwr + guz_z[-1] * nwz
    cor_ur = (urg - ur_w) / (2.0 * dlt) - dn_ur
    cor_uz = (uzg - uz_w) / (2.0 * dlt) - dn_uz
    w_gur_r = gur_r[-1] + cor_ur * nwr
    w_gur_z = gur_z[-1] + cor_ur * nwz
    w_guz_r = guz_r[-1] + cor_uz * nwr
    w_guz_z = guz_z[-1] + cor_uz * nwz
    w_hoop = 0.5 * (ur_w + urg) / grid.fi_rmid[-1]
    S_rr, S_tt, S_zz, S_rz, _ = _stress_comps(
        w_gur_r, w_gur_z, w_guz_r, w_guz_z, w_hoop, visc.mu, visc.eta)
    Snn = (S_rr * nwr + S_rz * nwz) * nwr + (S_rz * nwr + S_zz * nwz) * nwz
    Phi_r_i[-1] -= lam * Snn * nwr * grid.fi_M[-1]
    Phi_z_i[-1] -= lam * Snn * nwz * grid.fi_M[-1]

    # interior j-faces 1..n_z-1: general over-relaxed correction along the
    # center-to-center direction
    d_r = grid.r_cell[:, 1:] - grid.r_cell[:, :-1]
    d_z = np.full_like(d_r, grid.dz)
    d_len = np.hypot(d_r, d_z)
    e_r, e_z = d_r / d_len, d_z / d_len
    a_gur_r = 0.5 * (gur_r[:, 1:] + gur_r[:, :-1])
    a_gur_z = 0.5 * (gur_z[:, 1:] + gur_z[:, :-1])
    a_guz_r = 0.5 * (guz_r[:, 1:] + guz_r[:, :-1])
    a_guz_z = 0.5 * (guz_z[:, 1:] + guz_z[:, :-1])
    cor_ur = (ur[:, 1:] - ur[:, :-1]) / d_len - (a_gur_r * e_r + a_gur_z * e_z)
    cor_uz = (uz[:, 1:] - uz[:, :-1]) / d_len - (a_guz_r * e_r + a_guz_z * e_z)
    j_gur_r = a_gur_r + cor_ur * e_r
    j_gur_z = a_gur_z + cor_ur * e_z
    j_guz_r = a_guz_r + cor_uz * e_r
    j_guz_z = a_guz_z + cor_uz * e_z
    j_hoop = 0.5 * (ur[:, 1:] + ur[:, :-1]) / grid.fj_rmid[:, 1:-1]
    S_rr, S_tt, S_zz, S_rz, _ = _stress_comps(
        j_gur_r, j_gur_z, j_guz_r, j_guz_z, j_hoop, visc.mu, visc.eta)
    Phi_r_j[:, 1:-1] -= lam * S_rz * grid.fj_M[:, 1:-1]
    Phi_z_j[:, 1:-1] -= lam * S_zz * grid.fj_M[:, 1:-1]

    # cap faces: one-sided normal derivative toward the ghost value
    for side, col in ((0, 0), (1, -1)):
        ur_b, uz_b = ur[:, col], uz[:, col]
        if bc == "slip":
            d_ur = np.zeros_like(ur_b)
            hoop_b = ur_b / grid.fj_rmid[:, col]
        else:
            d_ur = -2.0 * ur_b
            hoop_b = np.zeros_like(ur_b)
        d_uz = -2.0 * uz_b
        orient = -1.0 if side == 0 else 1.0
        # gradient with the z-component replaced by the ghost difference
        b_gur_z = orient * d_ur / grid.dz
        b_guz_z = orient * d_uz / grid.dz
        S_rr, S_tt, S_zz, S_rz, _ = _stress_comps(
            gur_r[:, col], b_gur_z, guz_r[:, col], b_guz_z, hoop_b,
            visc.mu, visc.eta)
        jcol = 0 if side == 0 else n_z
        if bc == "slip":
            # zero tangential stress: keep only (Sn.n) n = S_zz e_z
            Phi_z_j[:, jcol] -= lam * S_zz * grid.fj_M[:, jcol]
        else:
            Phi_r_j[:, jcol] -= lam * S_rz * grid.fj_M[:, jcol]
            Phi_z_j[:, jcol] -= lam * S_zz * grid.fj_M[:, jcol]

    # ---- assembly with the face pressure grouped against the cell pressure:
    # each face contributes (f + (pbar - p_c) n) M to its owning cell, so at
    # rest every term vanishes exactly and the p*a hoop source is absorbed.
    # The remaining r-momentum source is the viscous hoop stress.
    src_r = -lam * S_tt_c * grid.area_plain

    rate_rho = -(Phi_m_i[1:] - Phi_m_i[:-1] + Phi_m_j[:, 1:] - Phi_m_j[:, :-1])
    up_r = Phi_r_i[1:] + (pbar_i[1:] - p_c) * grid.fi_nrM[1:]
    lo_r = Phi_r_i[:-1] + (pbar_i[:-1] - p_c) * grid.fi_nrM[:-1]
    rate_mr = -(up_r - lo_r + Phi_r_j[:, 1:] - Phi_r_j[:, :-1]) + src_r
    up_z = Phi_z_i[1:] + (pbar_i[1:] - p_c) * grid.fi_nzM[1:]
    lo_z = Phi_z_i[:-1] + (pbar_i[:-1] - p_c) * grid.fi_nzM[:-1]
    up_zj = Phi_z_j[:, 1:] + (pbar_j[:, 1:] - p_c) * grid.fj_M[:, 1:]
    lo_zj = Phi_z_j[:, :-1] + (pbar_j[:, :-1] - p_c) * grid.fj_M[:, :-1]
    rate_mz = -(up_z - lo_z + up_zj - lo_zj)
    return rate_rho, rate_mr, rate_mz


def dissipation_rate(state: AxiState, grid: AxiGrid, visc: ViscParams3D,
                     bc_mode: str = "slip") -> float:
    """Instantaneous 2 pi lam int S(grad u):grad u r dr dz (cell-centered).

    Evaluated as 2 mu |dev e|^2 + eta (div u)^2, which is the same quadratic
    form written as a sum of squares (nonnegative by construction).
    """
    bc = _normalize_bc(bc_mode)
    ur, uz = state.u_r, state.u_z
    gur_r, gur_z, guz_r, guz_z = _cell_gradients(state.rho, ur, uz, grid, bc)
    hoop = ur / grid.r_cell
    div = gur_r + guz_z + hoop
    erz = 0.5 * (gur_z + guz_r)
    third = div / 3.0
    dev2 = (gur_r - third)**2 + (hoop - third)**2 + (guz_z - third)**2 + 2.0 * erz**2
    phi = 2.0 * visc.mu * dev2 + visc.eta * div**2
    return 2.0 * np.pi * visc.lam * float(np.sum(phi * grid.V))


def mass_integral(state: AxiState) -> float:
    """Total mass 2 pi int rho r dr dz."""
    return 2.0 * np.pi * float(np.sum(state.rho * state.grid.V))


def energy_integral(state: AxiState, law: PressureLaw) -> float:
    """Total energy 2 pi int (1/2 rho |u|^2 + H(rho)) r dr dz."""
    kin = 0.5 * state.rho * (state.u_r**2 + state.u_z**2)
    pot = pressure_potential(law, state.rho)
    return 2.0 * np.pi * float(np.sum((kin + pot) * state.grid.V))


def stable_timestep(state: AxiState, grid: AxiGrid, law: PressureLaw,
                    visc: ViscParams3D, cfl: float = CFL_NUMBER) -> float:
    _, dp = pressure_eval(law, state.rho)
    c = np.sqrt(dp)
    ur, uz = np.abs(state.u_r), np.abs(state.u_z)
    rate = (ur + grid.tilt_c * uz + c) / grid.h_i + (uz + c) / grid.dz
    dt_conv = cfl / float(np.max(rate))
    hmin = min(float(np.min(grid.h_i)), grid.dz)
    dt_visc = VISC_CFL * float(np.min(state.rho)) * hmin**2 \
        / (visc.lam * (2.0 * visc.mu + visc.eta))
    return min(dt_conv, dt_visc)


def _ssprk2_axi(state: AxiState, grid: AxiGrid, law, visc, dt, bc):
    V = grid.V
    rho, mr, mz = state.rho, state.mr, state.mz
    k1 = _rhs(rho, mr / rho, mz / rho, grid, law, visc, bc)
    rho1 = rho + dt * k1[0] / V
    mr1 = mr + dt * k1[1] / V
    mz1 = mz + dt * k1[2] / V
    if np.any(rho1 <= 0):
        raise PositivityError("density lost positivity in stage 1")
    k2 = _rhs(rho1, mr1 / rho1, mz1 / rho1, grid, law, visc, bc)
    rho2 = 0.5 * rho + 0.5 * (rho1 + dt * k2[0] / V)
    mr2 = 0.5 * mr + 0.5 * (mr1 + dt * k2[1] / V)
    mz2 = 0.5 * mz + 0.5 * (mz1 + dt * k2[2] / V)
    if np.any(rho2 <= 0):
        raise PositivityError("density lost positivity in stage 2")
    return AxiState(grid, rho2, mr2, mz2)


def axi_step(state: AxiState, grid: AxiGrid, law: PressureLaw,
             visc: ViscParams3D, dt: float, bc_mode: str = "slip") -> AxiState:
    """One SSP-RK2 step of the axisymmetric system with viscosity lam*S."""
    bc = _normalize_bc(bc_mode)
    if bc == "noslip_caps" and not visc.eta > 0:
        raise ValueError("no-slip caps require positive bulk viscosity eta")
    bound = stable_timestep(state, grid, law, visc)
    if dt > bound * (1.0 + 1e-12):
        raise TimestepError(f"dt={dt} exceeds the stable bound {bound}")
    return _ssprk2_axi(state, grid, law, visc, dt, bc)


@dataclass
class AxiTrajectory:
    """Snapshots of an axisymmetric run plus mass/energy/dissipation series."""

    times: np.ndarray
    states: list
    mass: np.ndarray
    energy: np.ndarray
    dissipation: np.ndarray
    grid: AxiGrid
    law: PressureLaw
    visc: ViscParams3D
    bc_mode: str
    n_steps: int = 0


def run_axi(initial: AxiState, grid: AxiGrid, law: PressureLaw,
            visc: ViscParams3D, T_end: float, outputs,
            bc_mode: str = "slip", cfl: float = CFL_NUMBER) -> AxiTrajectory:
    """Advance to T_end with adaptive stable steps, sampling at output times.

    The dissipation series integrates lam int S(grad u):grad u in time with
    the left-endpoint rule, so the energy budget closes to O(dt) + O(h^2).
    """
    bc = _normalize_bc(bc_mode)
    if bc == "noslip_caps" and not visc.eta > 0:
        raise ValueError("no-slip caps require positive bulk viscosity eta")
    outputs = np.asarray(sorted(set(float(t) for t in outputs)), dtype=float)
    if outputs.size == 0 or outputs[0] < 0 or outputs[-1] > T_end + 1e-12:
        raise ValueError("outputs must lie in [0, T_end]")

    state = initial
    t = 0.0
    D = 0.0
    n_steps = 0
    times, states, mass, energy, diss = [], [], [], [], []
    k = 0
    if outputs[0] <= 1e-14:
        times.append(0.0)
        states.append(state)
        mass.append(mass_integral(state))
        energy.append(energy_integral(state, law))
        diss.append(0.0)
        k = 1
    while k < outputs.size:
        target = outputs[k]
        while t < target - 1e-13:
            dt = min(stable_timestep(state, grid, law, visc, cfl), target - t)
            D += dt * dissipation_rate(state, grid, visc, bc)
            state = _ssprk2_axi(state, grid, law, visc, dt, bc)
            t += dt
            n_steps += 1
            vmax = max(float(np.max(np.abs(state.u_r))),
                       float(np.max(np.abs(state.u_z))))
            if vmax > BREAKDOWN_THRESHOLD:
                raise BreakdownError(f"velocity blew up at t={t:.6g}", time=t)
        times.append(target)
        states.append(state)
        mass.append(mass_integral(state))
        energy.append(energy_integral(state, law))
        diss.append(D)
        k += 1
    return AxiTrajectory(np.asarray(times), states, np.asarray(mass),
                         np.asarray(energy), np.asarray(diss),
                         grid, law, visc, bc, n_steps)


def energy_monitor(traj: AxiTrajectory) -> dict:
    """Time series {kinetic, potential, dissipation} and the budget residual.

    residual[k] = E(t_k) + D(t_k) - E(0); upwinding makes it nonpositive up
    to the scheme tolerance.
    """
    kin = np.array([2.0 * np.pi * float(np.sum(
        0.5 * s.rho * (s.u_r**2 + s.u_z**2) * traj.grid.V)) for s in traj.states])
    pot = np.array([2.0 * np.pi * float(np.sum(
        pressure_potential(traj.law, s.rho) * traj.grid.V)) for s in traj.states])
    total = kin + pot
    residual = total + traj.dissipation - total[0]
    return {"kinetic": kin, "potential": pot,
            "dissipation": traj.dissipation.copy(), "residual": residual}
