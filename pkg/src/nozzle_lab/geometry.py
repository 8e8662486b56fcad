"""Thin channels, cross-section families, tilt fields, and their identities.

A channel is the set {(x_h, z) : z in (0,1), x_h in eps*omega_h(z)}.  The
geometry object describes the unit (eps = 1) section family omega_h(z); the
horizontal scaling eps is carried alongside and applied by scale_to_epsilon
on tilt fields and by the volume helpers.

Two section representations are supported:
  * circular  -- omega_h(z) = ball(X(z), R(z)) given by callables, with
                 optional analytic derivatives;
  * tabulated -- per-z polygons with matched vertices, from which the lateral
                 boundary velocity w_h is reconstructed by finite differences.

The tilt field V_h satisfies: [V_h, 1] tangent to the lateral boundary and
A(z) * div_h V_h(z) = dA/dz.  The circular family has the closed form
V_h = (R'/R)(x_h - X) + X'; tabulated families solve a per-slice Neumann
problem for a potential U_h and take V_h = grad U_h.
"""

from __future__ import annotations

import numpy as np

from .fem2d import (
    P1Evaluator,
    TriMesh,
    boundary_load,
    boundary_vertex_normals,
    mass_matrix,
    polygon_area,
    recover_gradient,
    solve_neumann_zero_mean,
    star_mesh,
    stiffness_matrix,
)

__all__ = [
    "ChannelGeometry",
    "TiltField",
    "UnsupportedKindError",
    "IncompatibleDataError",
    "FlowEscapeError",
    "area",
    "area_derivative",
    "channel_volume",
    "tilt_field_circular",
    "tilt_field_neumann",
    "check_divergence_identity",
    "flow_map",
    "scale_to_epsilon",
    "flow_reconstruction_error",
    "disk_table",
    "ellipse_table",
    "square_table",
]


class UnsupportedKindError(ValueError):
    """Operation applied to the wrong geometry kind."""


class IncompatibleDataError(ValueError):
    """Neumann compatibility residual above tolerance."""


class FlowEscapeError(RuntimeError):
    """Flow-map trajectory left the channel (inconsistent tilt field)."""


def _as_callable(f):
    if callable(f):
        return f
    val = np.asarray(f, dtype=float)

    def const(z, _v=val):
        return _v

    return const


class ChannelGeometry:
    """Immutable description of the section family omega_h(z).

    Use the ``circular`` or ``tabulated`` constructors.  n_z_samples is the
    number of z-intervals of the geometry sample grid (so the grid has
    n_z_samples + 1 points including both endpoints).
    """

    def __init__(self, kind, epsilon, n_z_samples, radius=None, centerline=None,
                 d_radius=None, d_centerline=None, boundary_table=None):
        if kind not in ("circular", "tabulated"):
            raise ValueError(f"unknown geometry kind {kind!r}")
        if epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if n_z_samples < 2:
            raise ValueError("n_z_samples must be >= 2")
        self.kind = kind
        self.epsilon = float(epsilon)
        self.n_z_samples = int(n_z_samples)
        self.z_samples = np.linspace(0.0, 1.0, self.n_z_samples + 1)

        if kind == "circular":
            self.radius = _as_callable(radius)
            self.centerline = _as_callable(centerline if centerline is not None else np.zeros(2))
            self.d_radius = d_radius
            self.d_centerline = d_centerline
            self.boundary_table = None
            rr = np.array([float(self.radius(z)) for z in self.z_samples])
            if not np.all(rr > 0):
                raise ValueError("radius must be strictly positive on the sample grid")
            if not np.all(np.isfinite(np.diff(rr) / np.diff(self.z_samples))):
                raise ValueError("radius table has unbounded differences")
        else:
            table = np.asarray(boundary_table, dtype=float)
            if table.ndim != 3 or table.shape[2] != 2:
                raise ValueError("boundary_table must have shape (n_z+1, m, 2)")
            if table.shape[0] != self.n_z_samples + 1:
                raise ValueError("boundary_table slice count must equal n_z_samples + 1")
            if table.shape[1] < 16:
                raise ValueError("tabulated sections need >= 16 boundary vertices")
            for j in range(table.shape[0]):
                if polygon_area(table[j]) <= 0:
                    raise ValueError(f"slice {j} is not a ccw polygon with positive area")
            self.boundary_table = table
            self.radius = None
            self.centerline = None
            self.d_radius = None
            self.d_centerline = None

    # ------------------------------------------------------------- factories

    @classmethod
    def circular(cls, radius, centerline=None, epsilon=1.0, n_z_samples=64,
                 d_radius=None, d_centerline=None):
        return cls("circular", epsilon, n_z_samples, radius=radius,
                   centerline=centerline, d_radius=d_radius, d_centerline=d_centerline)

    @classmethod
    def tabulated(cls, boundary_table, epsilon=1.0):
        table = np.asarray(boundary_table, dtype=float)
        return cls("tabulated", epsilon, table.shape[0] - 1, boundary_table=table)

    # ------------------------------------------------------------ section data

    def section_polygon(self, z):
        """Boundary polygon of omega_h(z); tabulated slices interpolate linearly."""
        if self.kind == "circular":
            raise UnsupportedKindError("circular sections have no stored polygon")
        z = float(z)
        t = z * self.n_z_samples
        j = min(int(np.floor(t)), self.n_z_samples - 1)
        s = t - j
        return (1.0 - s) * self.boundary_table[j] + s * self.boundary_table[j + 1]

    def radius_deriv(self, z):
        if self.d_radius is not None:
            return float(self.d_radius(z))
        return _fd_scalar(lambda zz: float(self.radius(zz)), z)

    def centerline_deriv(self, z):
        if self.d_centerline is not None:
            return np.asarray(self.d_centerline(z), dtype=float)
        return _fd_vector(lambda zz: np.asarray(self.centerline(zz), dtype=float), z)


def _fd_scalar(f, z, h=1e-6):
    lo, hi = max(0.0, z - h), min(1.0, z + h)
    return (f(hi) - f(lo)) / (hi - lo)


def _fd_vector(f, z, h=1e-6):
    lo, hi = max(0.0, z - h), min(1.0, z + h)
    return (f(hi) - f(lo)) / (hi - lo)


# ------------------------------------------------------------------- tables


def disk_table(radius, centerline=None, m=64, n_z=32):
    """Polygon table sampling circular sections at m angles."""
    radius = _as_callable(radius)
    centerline = _as_callable(centerline if centerline is not None else np.zeros(2))
    th = 2.0 * np.pi * np.arange(m) / m
    ring = np.stack([np.cos(th), np.sin(th)], axis=1)
    zs = np.linspace(0.0, 1.0, n_z + 1)
    return np.stack([np.asarray(centerline(z)) + float(radius(z)) * ring for z in zs])


def ellipse_table(a, b, m=64, n_z=32):
    """Polygon table of ellipses with semi-axes a(z), b(z)."""
    a, b = _as_callable(a), _as_callable(b)
    th = 2.0 * np.pi * np.arange(m) / m
    zs = np.linspace(0.0, 1.0, n_z + 1)
    return np.stack(
        [np.stack([float(a(z)) * np.cos(th), float(b(z)) * np.sin(th)], axis=1) for z in zs]
    )


def square_table(side=1.0, shift=None, m_per_side=8, n_z=32):
    """Axis-aligned square sections (subdivided sides), optionally translated."""
    shift = _as_callable(shift if shift is not None else np.zeros(2))
    s = side / 2.0
    t = np.linspace(-s, s, m_per_side, endpoint=False)
    base = np.concatenate([
        np.stack([t, np.full_like(t, -s)], axis=1),
        np.stack([np.full_like(t, s), t], axis=1),
        np.stack([-t, np.full_like(t, s)], axis=1),
        np.stack([np.full_like(t, -s), -t], axis=1),
    ])
    zs = np.linspace(0.0, 1.0, n_z + 1)
    return np.stack([base + np.asarray(shift(z), dtype=float) for z in zs])


# -------------------------------------------------------------------- areas


def area(geom: ChannelGeometry, z) -> float:
    """Section area A(z) = |omega_h(z)| of the unit (eps=1) channel."""
    z = float(z)
    if not 0.0 <= z <= 1.0:
        raise ValueError(f"z={z} outside [0, 1]")
    if geom.kind == "circular":
        return np.pi * float(geom.radius(z)) ** 2
    return polygon_area(geom.section_polygon(z))


def _one_sided_weight(n):
    # 3-point second-order one-sided difference weights
    return np.array([-1.5, 2.0, -0.5])


def area_derivative(geom: ChannelGeometry, z) -> float:
    """dA/dz; analytic for circular geometries with d_radius, else centered
    differences on the sample grid (one-sided second order at z = 0, 1)."""
    z = float(z)
    if geom.kind == "circular" and geom.d_radius is not None:
        return 2.0 * np.pi * float(geom.radius(z)) * float(geom.d_radius(z))
    h = 1.0 / geom.n_z_samples
    if z < h / 2:
        w = _one_sided_weight(3)
        return sum(wk * area(geom, z + k * h) for k, wk in enumerate(w)) / h
    if z > 1.0 - h / 2:
        w = _one_sided_weight(3)
        return -sum(wk * area(geom, z - k * h) for k, wk in enumerate(w)) / h
    lo, hi = max(0.0, z - h), min(1.0, z + h)
    return (area(geom, hi) - area(geom, lo)) / (hi - lo)


def channel_volume(geom: ChannelGeometry, epsilon=None) -> float:
    """|Omega_eps| = eps^2 * integral of A(z) dz (trapezoid on the sample grid)."""
    eps = geom.epsilon if epsilon is None else float(epsilon)
    A = np.array([area(geom, z) for z in geom.z_samples])
    return eps**2 * float(np.trapezoid(A, geom.z_samples))


# ---------------------------------------------------------------- tilt field


class TiltField:
    """Horizontal field V_h(x_h, z) whose vertical lift is boundary-tangent.

    ``scale`` is the eps of scale_to_epsilon: the field evaluates as
    eps * V_h(x_h/eps, z) and is defined on the eps-scaled channel.
    """

    def __init__(self, provenance, evaluate_unit, div_unit, geom, scale=1.0,
                 compatibility_residuals=None):
        self.provenance = provenance
        self.geom = geom
        self.scale = float(scale)
        self._evaluate_unit = evaluate_unit
        self._div_unit = div_unit
        self.compatibility_residuals = compatibility_residuals

    def evaluate(self, x_h, z):
        """V at horizontal points (n, 2) or (2,) and scalar z."""
        pts = np.atleast_2d(np.asarray(x_h, dtype=float))
        out = self.scale * self._evaluate_unit(pts / self.scale, float(z))
        if np.asarray(x_h).ndim == 1:
            return out[0]
        return out

    def div_h(self, z) -> float:
        """Horizontal divergence; constant in x_h at each z, unchanged by scaling."""
        return float(self._div_unit(float(z)))

    def sup_norm(self, n_xy=7, n_z=None) -> float:
        """sup |V| over the (scaled) channel by dense sampling."""
        geom = self.geom
        n_z = geom.n_z_samples if n_z is None else n_z
        best = 0.0
        for z in np.linspace(0.0, 1.0, n_z + 1):
            pts = _section_sample(geom, z, n_xy) * self.scale
            vals = self.evaluate(pts, z)
            best = max(best, float(np.max(np.linalg.norm(vals, axis=1))))
        return best


def _section_sample(geom: ChannelGeometry, z, n):
    """Points filling omega_h(z): rings toward the boundary."""
    if geom.kind == "circular":
        c = np.asarray(geom.centerline(z), dtype=float)
        R = float(geom.radius(z))
        th = 2.0 * np.pi * np.arange(4 * n) / (4 * n)
        ring = np.stack([np.cos(th), np.sin(th)], axis=1)
        pts = [c[None, :]]
        for j in range(1, n + 1):
            pts.append(c + (j / n) * R * ring)
        return np.concatenate(pts)
    poly = geom.section_polygon(z)
    c = poly.mean(axis=0)
    pts = [c[None, :]]
    for j in range(1, n + 1):
        pts.append(c + (j / n) * (poly - c))
    return np.concatenate(pts)


def tilt_field_circular(geom: ChannelGeometry) -> TiltField:
    """Closed-form tilt field of the circular family:
    V_h = (R'/R)(x_h - X(z)) + X'(z), with div_h V_h = 2 R'/R."""
    if geom.kind != "circular":
        raise UnsupportedKindError("tilt_field_circular needs a circular geometry")

    def ev(pts, z):
        R = float(geom.radius(z))
        dR = geom.radius_deriv(z)
        X = np.asarray(geom.centerline(z), dtype=float)
        dX = geom.centerline_deriv(z)
        return (dR / R) * (pts - X) + dX

    def dv(z):
        return 2.0 * geom.radius_deriv(z) / float(geom.radius(z))

    return TiltField("closed_form", ev, dv, geom)


def _vertex_velocities(table: np.ndarray, dz: float) -> np.ndarray:
    """d(vertex)/dz per slice by centered differences (one-sided at the ends)."""
    w = np.empty_like(table)
    w[1:-1] = (table[2:] - table[:-2]) / (2.0 * dz)
    w[0] = (-1.5 * table[0] + 2.0 * table[1] - 0.5 * table[2]) / dz
    w[-1] = (1.5 * table[-1] - 2.0 * table[-2] + 0.5 * table[-3]) / dz
    return w


def _edge_flux(poly: np.ndarray, w: np.ndarray) -> float:
    """Exact boundary integral of the linear-per-edge field w dotted with the
    outward normal: sum over edges of mean(w) . (dy, -dx)."""
    d = np.roll(poly, -1, axis=0) - poly
    wm = 0.5 * (w + np.roll(w, -1, axis=0))
    return float(np.sum(wm[:, 0] * d[:, 1] - wm[:, 1] * d[:, 0]))


def tilt_field_neumann(geom: ChannelGeometry, mesh_rings=None, compat_tol=0.05) -> TiltField:
    """Tilt field for tabulated families via per-slice Neumann problems.

    Per slice: solve lap U = dA/dz / A with normal derivative equal to the
    boundary velocity w.n (from matched vertices of consecutive slices),
    gauge zero mean, set V_h = grad U (nodal gradient recovery).  The
    compatibility defect between the boundary flux of w and the finite-
    difference dA/dz is logged and must stay below compat_tol relatively.
    """
    if geom.kind != "tabulated":
        raise UnsupportedKindError("tilt_field_neumann needs a tabulated geometry")
    table = geom.boundary_table
    n_slices, m = table.shape[0], table.shape[1]
    if mesh_rings is None:
        mesh_rings = max(3, m // 6)
    dz = 1.0 / geom.n_z_samples

    w_all = _vertex_velocities(table, dz)
    areas = np.array([polygon_area(table[j]) for j in range(n_slices)])
    dA_fd = _vertex_velocities(areas[:, None], dz)[:, 0]

    meshes, evals, nodal_fields, divs, compat = [], [], [], [], []
    for j in range(n_slices):
        poly, w = table[j], w_all[j]
        mesh = star_mesh(poly, mesh_rings)
        flux = _edge_flux(poly, w)
        resid = abs(flux - dA_fd[j])
        if resid > compat_tol * max(1.0, abs(dA_fd[j])):
            raise IncompatibleDataError(
                f"slice {j}: boundary flux {flux} vs area derivative {dA_fd[j]} "
                f"(residual {resid}) — boundary table is not a matched family"
            )
        compat.append(resid)

        A = areas[j]
        q = flux / A  # discrete-compatible right-hand side dA/dz / A
        # boundary data w.n at loop vertices, using averaged vertex normals
        vn = boundary_vertex_normals(mesh)
        g = np.einsum("kd,kd->k", w, vn)
        K = stiffness_matrix(mesh)
        b = boundary_load(mesh, g) - q * (mass_matrix(mesh) @ np.ones(mesh.n_vertices))
        U = solve_neumann_zero_mean(K, b, mesh)
        V = recover_gradient(mesh, U)

        meshes.append(mesh)
        evals.append(P1Evaluator(mesh))
        nodal_fields.append(V)
        divs.append(q)

    divs = np.asarray(divs)

    def ev(pts, z):
        t = np.clip(z, 0.0, 1.0) * geom.n_z_samples
        j = min(int(np.floor(t)), n_slices - 2)
        s = t - j
        a = evals[j](nodal_fields[j], pts)
        b2 = evals[j + 1](nodal_fields[j + 1], pts)
        return (1.0 - s) * a + s * b2

    def dv(z):
        t = np.clip(z, 0.0, 1.0) * geom.n_z_samples
        j = min(int(np.floor(t)), n_slices - 2)
        s = t - j
        return (1.0 - s) * divs[j] + s * divs[j + 1]

    field = TiltField("neumann_solved", ev, dv, geom,
                      compatibility_residuals=np.asarray(compat))
    field.meshes = meshes
    field.nodal_fields = nodal_fields
    field.boundary_velocities = w_all
    return field


def _contour_divergence(tilt: TiltField, z: float, shrink=0.6) -> float:
    """Divergence of the unit-channel tilt measured as contour flux / area."""
    geom = tilt.geom
    base = geom.section_polygon(z)
    c = base.mean(axis=0)
    poly = c + shrink * (base - c)
    vals = tilt._evaluate_unit(poly, float(z))
    return _edge_flux(poly, vals) / polygon_area(poly)


def check_divergence_identity(geom: ChannelGeometry, tilt: TiltField) -> float:
    """max over sampled z of |A(z) div_h V_h(z) - dA/dz|.

    dA/dz is analytic when the circular geometry carries d_radius, otherwise
    centered finite differences on the sample grid.  For solved (tabulated)
    tilts the divergence is measured independently of their construction, as
    the flux of the solved field through an interior contour divided by the
    enclosed area; the residual then carries the discretization error of the
    per-slice solves instead of restating the assembled right-hand side.
    """
    solved = getattr(tilt, "nodal_fields", None) is not None
    res = 0.0
    for z in geom.z_samples:
        div = _contour_divergence(tilt, z) if solved else tilt.div_h(z)
        res = max(res, abs(area(geom, z) * div - area_derivative(geom, z)))
    return res


def div_h_constancy_residual(tilt: TiltField, z, shrink=0.6) -> float:
    """Compare div from an interior contour flux against tilt.div_h(z).

    A discrete check that div_h V_h is constant in x_h: integrate V around a
    shrunk copy of the section boundary and divide by the enclosed area.
    """
    geom = tilt.geom
    if geom.kind == "circular":
        c = np.asarray(geom.centerline(z), dtype=float)
        R = float(geom.radius(z))
        th = 2.0 * np.pi * np.arange(256) / 256
        poly = c + shrink * R * np.stack([np.cos(th), np.sin(th)], axis=1)
    else:
        base = geom.section_polygon(z)
        c = base.mean(axis=0)
        poly = c + shrink * (base - c)
    vals = tilt._evaluate_unit(poly, float(z))  # unit-channel field on a unit contour
    flux = _edge_flux(poly, vals)
    return abs(flux / polygon_area(poly) - tilt.div_h(z))


# ---------------------------------------------------------------- flow map


def _section_distance(geom: ChannelGeometry, x, z):
    """Signed distance proxy to omega_h(z): <= 0 inside."""
    x = np.asarray(x, dtype=float)
    if geom.kind == "circular":
        c = np.asarray(geom.centerline(z), dtype=float)
        return float(np.linalg.norm(x - c)) - float(geom.radius(z))
    poly = geom.section_polygon(z)
    a = poly
    b = np.roll(poly, -1, axis=0)
    ab = b - a
    t = np.clip(np.einsum("kd,kd->k", x - a, ab) / np.einsum("kd,kd->k", ab, ab), 0, 1)
    proj = a + t[:, None] * ab
    dist = np.min(np.linalg.norm(x - proj, axis=1))
    # crossing-parity inside test
    xa, ya = a[:, 0], a[:, 1]
    xb, yb = b[:, 0], b[:, 1]
    cond = (ya <= x[1]) != (yb <= x[1])
    with np.errstate(divide="ignore", invalid="ignore"):
        xs = xa + (x[1] - ya) * (xb - xa) / (yb - ya)
    inside = np.sum(cond & (xs > x[0])) % 2 == 1
    return -dist if inside else dist


def flow_map(tilt: TiltField, x0, z_end: float, escape_tol=1e-4):
    """Integrate d(phi)/dz = V_h(phi, z) from z = 0 by fixed-step RK4.

    Steps use dz = 1/n_z_samples of the underlying geometry.  Raises
    FlowEscapeError if the result leaves the section by more than escape_tol.
    """
    if not 0.0 <= z_end <= 1.0:
        raise ValueError("z_end must lie in [0, 1]")
    geom = tilt.geom
    n = max(1, int(np.ceil(z_end * geom.n_z_samples)))
    h = z_end / n if z_end > 0 else 0.0
    x = np.asarray(x0, dtype=float).copy()

    def f(xx, zz):
        return tilt.evaluate(xx, min(zz, 1.0))

    for k in range(n):
        z = k * h
        k1 = f(x, z)
        k2 = f(x + 0.5 * h * k1, z + 0.5 * h)
        k3 = f(x + 0.5 * h * k2, z + 0.5 * h)
        k4 = f(x + h * k3, z + h)
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)

    d = _section_distance(geom, x / tilt.scale, z_end)
    if d > escape_tol:
        raise FlowEscapeError(
            f"flow map exited the channel at z={z_end}: distance {d} > {escape_tol}"
        )
    return x


def flow_reconstruction_error(geom: ChannelGeometry, tilt: TiltField, z: float,
                              n_probe=24, escape_tol=1e-2) -> float:
    """One-sided Hausdorff distance from the flowed initial boundary to the
    boundary of omega_h(z)."""
    if geom.kind == "circular":
        c = np.asarray(geom.centerline(0.0), dtype=float)
        R0 = float(geom.radius(0.0))
        th = 2.0 * np.pi * np.arange(n_probe) / n_probe
        start = c + R0 * np.stack([np.cos(th), np.sin(th)], axis=1)
    else:
        poly0 = geom.boundary_table[0]
        step = max(1, poly0.shape[0] // n_probe)
        start = poly0[::step]
    worst = 0.0
    for x0 in start:
        x = flow_map(tilt, x0 * tilt.scale, z, escape_tol=escape_tol)
        worst = max(worst, abs(_section_distance(geom, x / tilt.scale, z)))
    return worst


def scale_to_epsilon(tilt: TiltField, epsilon: float) -> TiltField:
    """V_{h,eps}(x_h, z) = eps * V_h(x_h/eps, z) on the eps-scaled channel."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    return TiltField(
        tilt.provenance,
        tilt._evaluate_unit,
        tilt._div_unit,
        tilt.geom,
        scale=epsilon * tilt.scale,
        compatibility_residuals=tilt.compatibility_residuals,
    )
