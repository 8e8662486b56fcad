"""Triangle meshes of star-shaped cross sections and P1 finite-element kernels.

Sections are meshed by radial rings toward a polygonal boundary, which is
valid for the star-shaped sections used here (disks, ellipses, translated
squares).  Assembly routines are vectorized over elements.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve
from scipy.spatial import cKDTree

__all__ = [
    "TriMesh",
    "polygon_area",
    "star_mesh",
    "tri_geometry",
    "stiffness_matrix",
    "mass_matrix",
    "boundary_load",
    "solve_neumann_zero_mean",
    "recover_gradient",
    "P1Evaluator",
    "boundary_vertex_normals",
]


def polygon_area(vertices) -> float:
    """Signed shoelace area of a closed polygon (positive if ccw)."""
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


@dataclass(frozen=True)
class TriMesh:
    """P1 triangulation with an ordered closed boundary loop.

    vertices: (nv, 2); triangles: (nt, 3) positively oriented;
    boundary_loop: vertex indices around the boundary, ccw, not repeated.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_loop: np.ndarray

    def __post_init__(self):
        area, _ = tri_geometry(self)
        if np.any(area <= 0):
            raise ValueError("mesh has non-positive triangle areas")

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    def boundary_edges(self):
        loop = self.boundary_loop
        return np.stack([loop, np.roll(loop, -1)], axis=1)


def star_mesh(boundary, n_rings: int, center=None) -> TriMesh:
    """Mesh a star-shaped polygon by scaled rings from an interior center.

    boundary: (m, 2) ccw polygon vertices.  Ring j (1-based) holds the points
    center + (j/n_rings)*(b_k - center); ring n_rings is the boundary itself.
    """
    b = np.asarray(boundary, dtype=float)
    m = b.shape[0]
    if m < 3:
        raise ValueError("boundary needs at least 3 vertices")
    if polygon_area(b) <= 0:
        raise ValueError("boundary must be counterclockwise with positive area")
    if center is None:
        center = b.mean(axis=0)
    center = np.asarray(center, dtype=float)

    verts = [center[None, :]]
    for j in range(1, n_rings + 1):
        verts.append(center + (j / n_rings) * (b - center))
    vertices = np.concatenate(verts, axis=0)

    def ring_idx(j, k):
        # ring 0 is the single center vertex
        return 0 if j == 0 else 1 + (j - 1) * m + (k % m)

    tris = []
    for k in range(m):  # center fan
        tris.append((0, ring_idx(1, k), ring_idx(1, k + 1)))
    for j in range(1, n_rings):
        for k in range(m):
            a0, a1 = ring_idx(j, k), ring_idx(j, k + 1)
            b0, b1 = ring_idx(j + 1, k), ring_idx(j + 1, k + 1)
            tris.append((a0, b0, b1))
            tris.append((a0, b1, a1))
    triangles = np.asarray(tris, dtype=np.int64)
    loop = np.array([ring_idx(n_rings, k) for k in range(m)], dtype=np.int64)
    return TriMesh(vertices=vertices, triangles=triangles, boundary_loop=loop)


def tri_geometry(mesh: TriMesh):
    """Per-triangle (signed area, hat-function gradients of shape (nt, 3, 2))."""
    v = mesh.vertices[mesh.triangles]  # (nt, 3, 2)
    e1 = v[:, 1] - v[:, 0]
    e2 = v[:, 2] - v[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    area = 0.5 * det
    # gradients of barycentric coordinates
    g = np.empty((v.shape[0], 3, 2))
    g[:, 1, 0] = e2[:, 1] / det
    g[:, 1, 1] = -e2[:, 0] / det
    g[:, 2, 0] = -e1[:, 1] / det
    g[:, 2, 1] = e1[:, 0] / det
    g[:, 0] = -(g[:, 1] + g[:, 2])
    return area, g


def _assemble(mesh: TriMesh, elem):
    """Scatter (nt, 3, 3) element matrices into a CSR matrix."""
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    return sp.csr_matrix(
        (elem.ravel(), (rows, cols)), shape=(mesh.n_vertices, mesh.n_vertices)
    )


def stiffness_matrix(mesh: TriMesh) -> sp.csr_matrix:
    area, g = tri_geometry(mesh)
    elem = np.einsum("t,tid,tjd->tij", area, g, g)
    return _assemble(mesh, elem)


def mass_matrix(mesh: TriMesh) -> sp.csr_matrix:
    area, _ = tri_geometry(mesh)
    base = (np.ones((3, 3)) + np.eye(3)) / 12.0
    elem = area[:, None, None] * base[None, :, :]
    return _assemble(mesh, elem)


def boundary_load(mesh: TriMesh, g_at_boundary: np.ndarray) -> np.ndarray:
    """RHS of a Neumann flux integral: b_i = boundary integral of g * phi_i.

    g is given at boundary-loop vertices and interpolated linearly per edge,
    so each edge contributes exactly L*(g_i/3 + g_j/6) to node i.
    """
    b = np.zeros(mesh.n_vertices)
    loop = mesh.boundary_loop
    pts = mesh.vertices[loop]
    nxt = np.roll(np.arange(loop.size), -1)
    L = np.linalg.norm(pts[nxt] - pts, axis=1)
    gi = np.asarray(g_at_boundary, dtype=float)
    gj = gi[nxt]
    np.add.at(b, loop, L * (gi / 3.0 + gj / 6.0))
    np.add.at(b, loop[nxt], L * (gi / 6.0 + gj / 3.0))
    return b


def solve_neumann_zero_mean(K: sp.csr_matrix, b: np.ndarray, mesh: TriMesh) -> np.ndarray:
    """Solve K u = b with the zero-mean gauge via one Lagrange multiplier."""
    m = mass_matrix(mesh) @ np.ones(mesh.n_vertices)
    n = K.shape[0]
    A = sp.bmat([[K, m[:, None]], [m[None, :], None]], format="csc")
    rhs = np.concatenate([b, [0.0]])
    sol = spsolve(A, rhs)
    return sol[:n]


def recover_gradient(mesh: TriMesh, u: np.ndarray) -> np.ndarray:
    """Area-weighted nodal average of the piecewise-constant P1 gradient."""
    area, g = tri_geometry(mesh)
    grad_t = np.einsum("tid,ti->td", g, u[mesh.triangles])  # (nt, 2)
    out = np.zeros((mesh.n_vertices, 2))
    w = np.zeros(mesh.n_vertices)
    for loc in range(3):
        idx = mesh.triangles[:, loc]
        np.add.at(out, idx, area[:, None] * grad_t)
        np.add.at(w, idx, area)
    return out / w[:, None]


class P1Evaluator:
    """Barycentric point evaluation of nodal fields, with nearest-triangle
    extrapolation for points marginally outside the mesh."""

    def __init__(self, mesh: TriMesh):
        self.mesh = mesh
        v = mesh.vertices[mesh.triangles]
        self._centroids = v.mean(axis=1)
        self._tree = cKDTree(self._centroids)
        # affine maps to barycentric coordinates
        self._origin = v[:, 0]
        e1 = v[:, 1] - v[:, 0]
        e2 = v[:, 2] - v[:, 0]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        self._inv = np.empty((v.shape[0], 2, 2))
        self._inv[:, 0, 0] = e2[:, 1] / det
        self._inv[:, 0, 1] = -e2[:, 0] / det
        self._inv[:, 1, 0] = -e1[:, 1] / det
        self._inv[:, 1, 1] = e1[:, 0] / det

    def barycentric(self, points, k: int = 8):
        """Triangle index and barycentric coords per point (best candidate)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        _, cand = self._tree.query(pts, k=min(k, self._centroids.shape[0]))
        cand = np.atleast_2d(cand)
        best_t = np.empty(pts.shape[0], dtype=np.int64)
        best_b = np.empty((pts.shape[0], 3))
        best_pen = np.full(pts.shape[0], np.inf)
        for j in range(cand.shape[1]):
            t = cand[:, j]
            loc = np.einsum("pab,pb->pa", self._inv[t], pts - self._origin[t])
            bar = np.stack([1.0 - loc[:, 0] - loc[:, 1], loc[:, 0], loc[:, 1]], axis=1)
            pen = np.maximum(0.0, -bar).sum(axis=1)
            better = pen < best_pen
            best_t[better] = t[better]
            best_b[better] = bar[better]
            best_pen[better] = pen[better]
        return best_t, best_b

    def __call__(self, nodal, points):
        """Evaluate a nodal field (nv,) or (nv, d) at points (np, 2)."""
        t, bar = self.barycentric(points)
        vals = np.asarray(nodal)[self.mesh.triangles[t]]  # (np, 3[, d])
        if vals.ndim == 3:
            return np.einsum("pi,pid->pd", bar, vals)
        return np.einsum("pi,pi->p", bar, vals)


def boundary_vertex_normals(mesh: TriMesh) -> np.ndarray:
    """Outward unit normals at boundary vertices (adjacent-edge average)."""
    loop = mesh.boundary_loop
    pts = mesh.vertices[loop]
    edge = np.roll(pts, -1, axis=0) - pts  # edge k: loop[k] -> loop[k+1]
    # outward normal of a ccw edge is (dy, -dx)
    en = np.stack([edge[:, 1], -edge[:, 0]], axis=1)
    en /= np.linalg.norm(en, axis=1, keepdims=True)
    vn = en + np.roll(en, 1, axis=0)
    vn /= np.linalg.norm(vn, axis=1, keepdims=True)
    return vn
