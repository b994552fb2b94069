"""P1 finite elements for the Laplace-Beltrami operator in the Poincare disk.

In two dimensions the Dirichlet energy is conformally invariant, so the
stiffness matrix is the plain Euclidean one and the hyperbolic metric only
enters through the mass matrix, weighted by ``lambda^2 = 4 / (1 - |x|^2)^2``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .geometry import conformal_factor
from .mesh import TriMesh
from .quadrature import triangle_rule


class AssemblyError(ValueError):
    pass


def _element_geometry(m: TriMesh):
    p = m.points[m.triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    if np.any(det <= 1e-300):
        bad = int(np.argmin(det))
        raise AssemblyError(f"degenerate or inverted triangle {bad}")
    return p, det


def element_gradients(m: TriMesh):
    """Gradients of the three hat functions on every triangle, shape (M, 3, 2)."""
    p, det = _element_geometry(m)
    x, y = p[..., 0], p[..., 1]
    gx = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1) / det[:, None]
    gy = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1) / det[:, None]
    return np.stack([gx, gy], axis=2), 0.5 * det


def _scatter(m: TriMesh, local: np.ndarray) -> sp.csr_matrix:
    t = m.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = m.n_vertices
    A = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    return A


def assemble_stiffness(m: TriMesh) -> sp.csr_matrix:
    g, area = element_gradients(m)
    local = np.einsum("tid,tjd->tij", g, g) * area[:, None, None]
    return _scatter(m, local)


def assemble_mass(m: TriMesh, degree: int = 4) -> sp.csr_matrix:
    """Hyperbolic mass matrix, ``int phi_i phi_j lambda^2``, by a degree-``degree`` rule."""
    _, det = _element_geometry(m)
    bary, w = triangle_rule(degree)
    p = m.points[m.triangles]
    q = np.einsum("qk,tkd->tqd", bary, p)
    lam2 = conformal_factor(q[..., 0] + 1j * q[..., 1]) ** 2
    local = np.einsum("q,tq,qi,qj->tij", w, lam2, bary, bary) * (0.5 * det)[:, None, None]
    return _scatter(m, local)


@dataclass(frozen=True)
class DofMap:
    """Vertex to equation numbering; vertices on Dirichlet edges are eliminated."""

    n_vertices: int
    constrained: np.ndarray
    free: np.ndarray

    @classmethod
    def from_mesh(cls, m: TriMesh) -> "DofMap":
        return cls.from_constrained(m.n_vertices, m.dirichlet_vertices())

    @classmethod
    def from_constrained(cls, n: int, constrained) -> "DofMap":
        c = np.unique(np.asarray(constrained, dtype=np.int64))
        mask = np.ones(n, dtype=bool)
        mask[c] = False
        return cls(n, c, np.nonzero(mask)[0])

    def expand(self, u_free: np.ndarray) -> np.ndarray:
        """Lift free-dof vectors (or column blocks) to all vertices, zero on the constrained set."""
        u_free = np.asarray(u_free)
        shape = (self.n_vertices,) + u_free.shape[1:]
        out = np.zeros(shape, dtype=u_free.dtype)
        out[self.free] = u_free
        return out


def apply_dirichlet(K, M, dofs: DofMap):
    if len(dofs.free) == 0:
        raise AssemblyError("every vertex is constrained")
    if len(dofs.constrained) == 0:
        return K, M
    f = dofs.free
    return K[f][:, f].tocsr(), M[f][:, f].tocsr()


def rayleigh_quotient(K, M, u) -> float:
    u = np.asarray(u, dtype=float)
    if not np.any(u):
        raise ValueError("Rayleigh quotient of the zero vector")
    return float(u @ (K @ u)) / float(u @ (M @ u))


def write_matrix_market(A, path):
    from scipy.io import mmwrite

    mmwrite(str(path), sp.coo_matrix(A), symmetry="symmetric")
