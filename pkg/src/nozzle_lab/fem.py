"""Conforming finite elements for the inequality-constant experiments.

Plane sections are meshed with P1 triangles, thin channels with trilinear
(Q1) isoparametric hexahedra.  Vector fields use component-major dof
ordering, dof = component * n_nodes + node.  Boundary conditions are
eliminated, never penalized: ``transfer_matrix`` builds a sparse map T from
free coordinates to nodal dof whose per-node column blocks are orthonormal,
so constrained quadratic forms are congruence transforms T' K T and the
pseudo-inverse of T is simply T'.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

__all__ = [
    "ExactCurve",
    "Polyline",
    "SectionMesh",
    "ChannelMesh",
    "GaussData",
    "HexForms",
    "P1Forms",
    "null_columns",
    "transfer_matrix",
    "disk_section",
    "ellipse_section",
    "rect_section",
    "square_section",
    "tri_forms",
    "circular_channel_mesh",
    "square_channel_mesh",
    "hex_quadrature",
    "hex_forms",
    "nodal_to_dof",
    "dof_to_nodal",
    "gauss_values",
    "gauss_gradients",
    "integrate_gauss",
]


# ----------------------------------------------------------------- constraints

def null_columns(directions, dim: int) -> np.ndarray:
    """Orthonormal basis of {x in R^dim : d . x = 0 for every d}.

    Returned as a (dim, n_free) matrix of columns; empty direction list gives
    the identity, a full-rank direction set gives zero columns (clamped node).
    """
    dirs = [np.asarray(d, dtype=float) for d in directions]
    if not dirs:
        return np.eye(dim)
    V = np.vstack(dirs)
    if V.shape[1] != dim:
        raise ValueError(f"constraint directions must have length {dim}")
    _, s, vt = np.linalg.svd(V)
    rank = int(np.sum(s > 1e-10 * s[0]))
    return vt[rank:].T.copy()


def transfer_matrix(n_nodes: int, dim: int, pinned, normals) -> sp.csr_matrix:
    """Sparse map from free coordinates to nodal dof with T' T = I.

    pinned: iterable of fully clamped node ids.  normals: dict node id ->
    list of directions d enforcing v . d = 0 at that node.  A node carrying
    dim independent directions loses all its dof.
    """
    pinned = set(int(p) for p in pinned)
    rows, cols, vals = [], [], []
    n_free = 0
    for i in range(n_nodes):
        if i in pinned:
            continue
        dirs = normals.get(i, ())
        basis = null_columns(dirs, dim) if len(dirs) else np.eye(dim)
        for k in range(basis.shape[1]):
            for c in range(dim):
                val = basis[c, k]
                if val != 0.0:
                    rows.append(c * n_nodes + i)
                    cols.append(n_free)
                    vals.append(val)
            n_free += 1
    return sp.csr_matrix(
        (vals, (rows, cols)), shape=(dim * n_nodes, n_free))


# -------------------------------------------------------------- plane sections

@dataclass(frozen=True)
class ExactCurve:
    """Smooth closed boundary curve with exact outward normals."""

    point: Callable      # t -> (2,)
    normal: Callable     # t -> unit outward normal (2,)
    speed: Callable      # t -> |dp/dt|
    period: float


@dataclass(frozen=True)
class Polyline:
    """Closed polygonal boundary, ccw vertices, first vertex not repeated."""

    vertices: np.ndarray


class SectionMesh:
    """Quad mesh of a plane section; triangles derive from the quads."""

    def __init__(self, nodes, quads, normals, boundary_ids, exact_boundary,
                 label):
        self.nodes = np.asarray(nodes, dtype=float)
        self.quads = np.asarray(quads, dtype=np.int64)
        self.normals = normals               # node id -> list of directions
        self.boundary_ids = np.asarray(boundary_ids, dtype=np.int64)
        self.exact_boundary = exact_boundary
        self.label = label
        self._tris = None
        self._forms = None

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def tris(self) -> np.ndarray:
        if self._tris is None:
            q = self.quads
            self._tris = np.vstack([q[:, [0, 1, 2]], q[:, [0, 2, 3]]])
        return self._tris

    def forms(self) -> "P1Forms":
        if self._forms is None:
            self._forms = tri_forms(self.nodes, self.tris)
        return self._forms

    def transfer(self) -> sp.csr_matrix:
        return transfer_matrix(self.n_nodes, 2, (), self.normals)

    def scaled(self, factor: float) -> "SectionMesh":
        """Dilated copy; constraint directions are dilation invariant."""
        curve = self.exact_boundary
        if isinstance(curve, ExactCurve):
            p, n, s = curve.point, curve.normal, curve.speed
            curve = ExactCurve(
                point=lambda t, f=factor: f * p(t),
                normal=n,
                speed=lambda t, f=factor: f * s(t),
                period=curve.period)
        elif isinstance(curve, Polyline):
            curve = Polyline(vertices=factor * curve.vertices)
        return SectionMesh(factor * self.nodes, self.quads, self.normals,
                           self.boundary_ids, curve,
                           f"{self.label}*{factor:g}")


def _square_grid(m: int):
    w = 2 * m + 1
    s = np.linspace(-1.0, 1.0, w)
    u, v = np.meshgrid(s, s, indexing="xy")
    quads = []
    for j in range(2 * m):
        for i in range(2 * m):
            a = j * w + i
            quads.append([a, a + 1, a + w + 1, a + w])
    on_edge = (np.abs(u.ravel()) == 1.0) | (np.abs(v.ravel()) == 1.0)
    return u.ravel(), v.ravel(), np.asarray(quads), np.where(on_edge)[0]


def disk_section(m: int, radius: float = 1.0, center=(0.0, 0.0)) -> SectionMesh:
    """Unit-square grid mapped onto the disk; rim nodes land exactly on the
    circle, so exact circle normals apply at the nodes."""
    if m < 1:
        raise ValueError("disk mesh needs m >= 1 cells per half side")
    u, v, quads, rim = _square_grid(m)
    x = u * np.sqrt(1.0 - v * v / 2.0)
    y = v * np.sqrt(1.0 - u * u / 2.0)
    unit = np.column_stack([x, y])
    center = np.asarray(center, dtype=float)
    nodes = center + radius * unit
    normals = {int(i): [unit[i].copy()] for i in rim}
    cx, cy = float(center[0]), float(center[1])
    curve = ExactCurve(
        point=lambda t: np.array([cx + radius * np.cos(t),
                                  cy + radius * np.sin(t)]),
        normal=lambda t: np.array([np.cos(t), np.sin(t)]),
        speed=lambda t: radius,
        period=2.0 * np.pi)
    mesh = SectionMesh(nodes, quads, normals, rim, curve, f"disk(m={m})")
    mesh.unit_coords = unit
    return mesh


def ellipse_section(a: float, b: float, m: int) -> SectionMesh:
    """Disk mesh stretched to the ellipse x^2/a^2 + y^2/b^2 = 1."""
    base = disk_section(m)
    nodes = base.nodes * np.array([a, b])
    normals = {}
    for i in base.boundary_ids:
        x, y = nodes[i]
        n = np.array([x / a**2, y / b**2])
        normals[int(i)] = [n / np.linalg.norm(n)]
    curve = ExactCurve(
        point=lambda t: np.array([a * np.cos(t), b * np.sin(t)]),
        normal=lambda t: np.array([b * np.cos(t), a * np.sin(t)])
        / np.hypot(b * np.cos(t), a * np.sin(t)),
        speed=lambda t: np.hypot(a * np.sin(t), b * np.cos(t)),
        period=2.0 * np.pi)
    return SectionMesh(nodes, base.quads, normals, base.boundary_ids, curve,
                       f"ellipse({a:g},{b:g},m={m})")


def rect_section(mx: int, my: int, x0: float, x1: float, y0: float, y1: float,
                 constrained: bool = False) -> SectionMesh:
    """Axis-aligned rectangle; tangency constraints are optional because the
    classical Korn constant is taken over the unconstrained space."""
    xs = np.linspace(x0, x1, mx + 1)
    ys = np.linspace(y0, y1, my + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    w = mx + 1
    quads = []
    for j in range(my):
        for i in range(mx):
            a = j * w + i
            quads.append([a, a + 1, a + w + 1, a + w])
    onb = ((np.isclose(nodes[:, 0], x0)) | (np.isclose(nodes[:, 0], x1)) |
           (np.isclose(nodes[:, 1], y0)) | (np.isclose(nodes[:, 1], y1)))
    boundary_ids = np.where(onb)[0]
    normals = {}
    if constrained:
        for i in boundary_ids:
            dirs = []
            if np.isclose(nodes[i, 0], x0):
                dirs.append(np.array([-1.0, 0.0]))
            if np.isclose(nodes[i, 0], x1):
                dirs.append(np.array([1.0, 0.0]))
            if np.isclose(nodes[i, 1], y0):
                dirs.append(np.array([0.0, -1.0]))
            if np.isclose(nodes[i, 1], y1):
                dirs.append(np.array([0.0, 1.0]))
            normals[int(i)] = dirs
    poly = Polyline(vertices=np.array(
        [[x0, y0], [x1, y0], [x1, y1], [x0, y1]]))
    return SectionMesh(nodes, np.asarray(quads), normals, boundary_ids, poly,
                       f"rect({mx}x{my})")


def square_section(m: int, half: float = 1.0) -> SectionMesh:
    return rect_section(2 * m, 2 * m, -half, half, -half, half,
                        constrained=True)


# ----------------------------------------------------------------- P1 assembly

@dataclass
class P1Forms:
    D: list                 # D[a][b] sparse, entries int d_a phi_i d_b phi_j
    A: sp.csr_matrix        # scalar stiffness
    M: sp.csr_matrix        # scalar mass (exact)
    K_grad: sp.csr_matrix   # vector gradient form, component-major
    K_sym: sp.csr_matrix    # vector symmetric-gradient form
    M_vec: sp.csr_matrix
    b: np.ndarray           # (2, N), b[a][i] = int d_a phi_i
    area: float


def tri_forms(nodes, tris) -> P1Forms:
    nodes = np.asarray(nodes, dtype=float)
    tris = np.asarray(tris, dtype=np.int64)
    p = nodes[tris]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    if det.min() <= 0.0:
        raise ValueError("triangle with nonpositive area; mesh orientation broken")
    area = det / 2.0
    # constant P1 gradients: rows of inv(J)^T applied to reference gradients
    inv_det = 1.0 / det
    # J = [[e1x, e2x], [e1y, e2y]]; J^{-T} columns assembled by hand
    gx1 = e2[:, 1] * inv_det
    gy1 = -e2[:, 0] * inv_det
    gx2 = -e1[:, 1] * inv_det
    gy2 = e1[:, 0] * inv_det
    G = np.empty((tris.shape[0], 3, 2))
    G[:, 1, 0] = gx1
    G[:, 1, 1] = gy1
    G[:, 2, 0] = gx2
    G[:, 2, 1] = gy2
    G[:, 0, 0] = -gx1 - gx2
    G[:, 0, 1] = -gy1 - gy2

    n = nodes.shape[0]
    rows = np.broadcast_to(tris[:, :, None], tris.shape + (3,)).ravel()
    cols = np.broadcast_to(tris[:, None, :], (tris.shape[0], 3, 3)).ravel()
    D = [[None, None], [None, None]]
    for a in range(2):
        for b in range(2):
            blk = area[:, None, None] * G[:, :, a][:, :, None] * G[:, :, b][:, None, :]
            D[a][b] = sp.coo_matrix((blk.ravel(), (rows, cols)),
                                    shape=(n, n)).tocsr()
    mloc = (np.ones((3, 3)) + np.eye(3)) / 12.0
    mblk = area[:, None, None] * mloc[None, :, :]
    M = sp.coo_matrix((mblk.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    b_vec = np.zeros((2, n))
    for a in range(2):
        np.add.at(b_vec[a], tris.ravel(), (area[:, None] * G[:, :, a]).ravel())
    A = (D[0][0] + D[1][1]).tocsr()
    Z = sp.csr_matrix((n, n))
    K_grad = sp.bmat([[A, Z], [Z, A]]).tocsr()
    K_cross = sp.bmat([[D[0][0], D[1][0]], [D[0][1], D[1][1]]]).tocsr()
    K_sym = (0.5 * (K_grad + K_cross)).tocsr()
    M_vec = sp.bmat([[M, Z], [Z, M]]).tocsr()
    return P1Forms(D=D, A=A, M=M, K_grad=K_grad, K_sym=K_sym, M_vec=M_vec,
                   b=b_vec, area=float(area.sum()))


# --------------------------------------------------------------- hex reference

def _hex_shape_data():
    corners = np.array([[-1, -1, -1], [1, -1, -1], [1, 1, -1], [-1, 1, -1],
                        [-1, -1, 1], [1, -1, 1], [1, 1, 1], [-1, 1, 1]],
                       dtype=float)
    gauss = corners / np.sqrt(3.0)
    sh = np.empty((8, 8))
    dn = np.empty((8, 8, 3))
    for q in range(8):
        for i in range(8):
            terms = 0.5 * (1.0 + gauss[q] * corners[i])
            sh[q, i] = terms.prod()
            for d in range(3):
                others = terms.prod() / terms[d]
                dn[q, i, d] = 0.5 * corners[i, d] * others
    return corners, gauss, sh, dn


_CORNERS, _GAUSS, _SH, _DN = _hex_shape_data()


@dataclass
class GaussData:
    points: np.ndarray   # (E, 8, 3) gauss point positions
    w: np.ndarray        # (E, 8) weights (jacobian determinants)
    G: np.ndarray        # (E, 8, 8, 3) physical shape gradients


@dataclass
class HexForms:
    D: list                  # D[a][b] sparse
    A: sp.csr_matrix
    M: sp.csr_matrix
    K_grad: sp.csr_matrix
    K_sym: sp.csr_matrix
    M_vec: sp.csr_matrix
    volume: float


def hex_quadrature(nodes, hexes) -> GaussData:
    coords = np.asarray(nodes, dtype=float)[hexes]
    J = np.einsum("eni,qnj->eqij", coords, _DN, optimize=True)
    det = np.linalg.det(J)
    if det.min() <= 0.0:
        raise ValueError("hexahedron with nonpositive jacobian")
    inv = np.linalg.inv(J)
    G = np.einsum("eqji,qnj->eqni", inv, _DN, optimize=True)
    pts = np.einsum("qn,eni->eqi", _SH, coords, optimize=True)
    return GaussData(points=pts, w=det, G=G)


def hex_forms(nodes, hexes, quad: Optional[GaussData] = None) -> HexForms:
    hexes = np.asarray(hexes, dtype=np.int64)
    q = quad if quad is not None else hex_quadrature(nodes, hexes)
    n = np.asarray(nodes).shape[0]
    rows = np.broadcast_to(hexes[:, :, None], hexes.shape + (8,)).ravel()
    cols = np.broadcast_to(hexes[:, None, :], (hexes.shape[0], 8, 8)).ravel()
    blk = np.einsum("eq,eqia,eqjb->eijab", q.w, q.G, q.G, optimize=True)
    D = [[sp.coo_matrix((blk[:, :, :, a, b].ravel(), (rows, cols)),
                        shape=(n, n)).tocsr()
          for b in range(3)] for a in range(3)]
    mblk = np.einsum("eq,qi,qj->eij", q.w, _SH, _SH, optimize=True)
    M = sp.coo_matrix((mblk.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    A = (D[0][0] + D[1][1] + D[2][2]).tocsr()
    Z = sp.csr_matrix((n, n))
    K_grad = sp.bmat([[A if a == b else Z for b in range(3)]
                      for a in range(3)]).tocsr()
    K_cross = sp.bmat([[D[b][a] for b in range(3)] for a in range(3)]).tocsr()
    K_sym = (0.5 * (K_grad + K_cross)).tocsr()
    M_vec = sp.bmat([[M if a == b else Z for b in range(3)]
                     for a in range(3)]).tocsr()
    return HexForms(D=D, A=A, M=M, K_grad=K_grad, K_sym=K_sym, M_vec=M_vec,
                    volume=float(q.w.sum()))


# --------------------------------------------------------------- channel meshes

class ChannelMesh:
    """Q1 hex mesh of a thin channel, layer-major node numbering.

    Boundary data carries exact outward normals: caps pinned, lateral nodes
    constrained along the true surface normal of the channel wall.
    """

    def __init__(self, nodes, hexes, z_layers, eps, pinned, normals, label,
                 section: SectionMesh, quads_per_layer: int):
        self.nodes = np.asarray(nodes, dtype=float)
        self.hexes = np.asarray(hexes, dtype=np.int64)
        self.z_layers = np.asarray(z_layers, dtype=float)
        self.eps = float(eps)
        self.pinned = pinned
        self.normals = normals
        self.label = label
        self.section = section
        self.quads_per_layer = int(quads_per_layer)
        self._transfer = None
        self._quad = None
        self._forms = None

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_z(self) -> int:
        return len(self.z_layers) - 1

    def transfer(self) -> sp.csr_matrix:
        if self._transfer is None:
            self._transfer = transfer_matrix(self.n_nodes, 3, self.pinned,
                                             self.normals)
        return self._transfer

    def quadrature(self) -> GaussData:
        if self._quad is None:
            self._quad = hex_quadrature(self.nodes, self.hexes)
        return self._quad

    def forms(self) -> HexForms:
        if self._forms is None:
            self._forms = hex_forms(self.nodes, self.hexes,
                                    quad=self.quadrature())
        return self._forms


def _extrude(section_nodes_per_layer, sec_quads, n_z):
    ns = section_nodes_per_layer[0].shape[0]
    nodes = np.vstack(section_nodes_per_layer)
    hexes = []
    for k in range(n_z):
        off0, off1 = k * ns, (k + 1) * ns
        for quad in sec_quads:
            a, b, c, d = (int(v) for v in quad)
            hexes.append([a + off0, b + off0, c + off0, d + off0,
                          a + off1, b + off1, c + off1, d + off1])
    return nodes, np.asarray(hexes, dtype=np.int64)


def circular_channel_mesh(geom, eps: float, m_sec: int = 8,
                          n_z: int = 32) -> ChannelMesh:
    """Hex mesh of the thin channel over circular sections.

    Lateral wall F = |x_h - eps X(z)| - eps R(z) = 0, so the exact outward
    normal at a rim node with unit section coordinate s is the normalized
    (s, -eps (X'(z) . s + R'(z))).
    """
    if getattr(geom, "kind", None) != "circular":
        raise ValueError("channel meshing over sections needs circular geometry")
    if eps <= 0:
        raise ValueError("eps must be positive")
    sec = disk_section(m_sec)
    unit = sec.unit_coords
    ns = sec.n_nodes
    z = np.linspace(0.0, 1.0, n_z + 1)
    layers = []
    for zk in z:
        Rk = float(geom.radius(zk))
        Xk = np.asarray(geom.centerline(zk), dtype=float)
        xy = eps * (Xk + Rk * unit)
        layers.append(np.column_stack([xy, np.full(ns, zk)]))
    nodes, hexes = _extrude(layers, sec.quads, n_z)
    pinned = set(range(ns)) | set(range(n_z * ns, (n_z + 1) * ns))
    normals = {}
    for k in range(1, n_z):
        dRk = geom.radius_deriv(z[k])
        dXk = np.asarray(geom.centerline_deriv(z[k]), dtype=float)
        for b in sec.boundary_ids:
            s = unit[b]
            nvec = np.array([s[0], s[1], -eps * (dXk @ s + dRk)])
            normals[int(k * ns + b)] = [nvec / np.linalg.norm(nvec)]
    label = f"channel(disk m={m_sec}, n_z={n_z}, eps={eps:g})"
    return ChannelMesh(nodes, hexes, z, eps, pinned, normals, label, sec,
                       sec.quads.shape[0])


def square_channel_mesh(eps: float, m_sec: int = 8, n_z: int = 32,
                        half: float = 1.0) -> ChannelMesh:
    """Straight channel over a square section (no rotational symmetry)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    sec = square_section(m_sec, half)
    ns = sec.n_nodes
    z = np.linspace(0.0, 1.0, n_z + 1)
    layers = [np.column_stack([eps * sec.nodes, np.full(ns, zk)]) for zk in z]
    nodes, hexes = _extrude(layers, sec.quads, n_z)
    pinned = set(range(ns)) | set(range(n_z * ns, (n_z + 1) * ns))
    normals = {}
    for k in range(1, n_z):
        for b, dirs in sec.normals.items():
            normals[int(k * ns + b)] = [np.array([d[0], d[1], 0.0])
                                        for d in dirs]
    label = f"channel(square m={m_sec}, n_z={n_z}, eps={eps:g})"
    return ChannelMesh(nodes, hexes, z, eps, pinned, normals, label, sec,
                       sec.quads.shape[0])


# ---------------------------------------------------------------- field helpers

def nodal_to_dof(values) -> np.ndarray:
    """(N, dim) nodal array -> component-major dof vector."""
    return np.asarray(values, dtype=float).T.ravel()


def dof_to_nodal(x, n_nodes: int, dim: int) -> np.ndarray:
    return np.asarray(x, dtype=float).reshape(dim, n_nodes).T


def gauss_values(hexes, nodal) -> np.ndarray:
    """Field values at the 2x2x2 gauss points, shape (E, 8, n_comp)."""
    vals = np.asarray(nodal)[hexes]
    return np.einsum("qn,enc->eqc", _SH, vals, optimize=True)


def gauss_gradients(quad: GaussData, hexes, nodal) -> np.ndarray:
    """Gradients at gauss points: out[e, q, c, a] = d_a v_c."""
    vals = np.asarray(nodal)[hexes]
    return np.einsum("eqna,enc->eqca", quad.G, vals, optimize=True)


def integrate_gauss(quad: GaussData, values) -> float:
    """Integral of a per-gauss-point scalar array of shape (E, 8)."""
    return float(np.sum(quad.w * values))
