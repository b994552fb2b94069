"""Smallest eigenpairs of ``K u = mu M u`` and mesh-convergence studies."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .fem import DofMap, apply_dirichlet, assemble_mass, assemble_stiffness
from .mesh import DomainSpec, TriMesh, red_refine, triangulate

log = logging.getLogger(__name__)

DENSE_LIMIT = 2000
SEED = 20240601


class EigenSolverError(RuntimeError):
    pass


class NonConvergenceError(EigenSolverError):
    def __init__(self, msg, residuals):
        super().__init__(msg)
        self.residuals = residuals


@dataclass
class EigenPairs:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns, M-orthonormal
    residuals: np.ndarray
    method: str = "dense"
    dofs: DofMap | None = None

    def __len__(self):
        return len(self.eigenvalues)

    def full_vectors(self) -> np.ndarray:
        """Eigenvectors on all mesh vertices (zero on eliminated Dirichlet vertices)."""
        if self.dofs is None:
            return self.eigenvectors
        return self.dofs.expand(self.eigenvectors)


def _residuals(K, M, vals, vecs):
    R = K @ vecs - (M @ vecs) * vals[None, :]
    mnorm = np.sqrt(np.einsum("ij,ij->j", vecs, M @ vecs))
    return np.linalg.norm(R, axis=0) / mnorm


def _fix_signs(vecs):
    # largest-magnitude entry positive, so output is reproducible
    idx = np.argmax(np.abs(vecs), axis=0)
    s = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    s[s == 0] = 1.0
    return vecs * s[None, :]


def _dense(K, M, k):
    Kd = K.toarray() if sp.issparse(K) else np.asarray(K)
    Md = M.toarray() if sp.issparse(M) else np.asarray(M)
    try:
        vals, vecs = la.eigh(Kd, Md, subset_by_index=[0, k - 1])
    except la.LinAlgError as exc:
        raise EigenSolverError(f"dense generalized eigensolve failed: {exc}") from exc
    return vals, vecs


def _m_orthonormalize(X, MX_fn, basis, Mbasis, drop_tol=1e-10):
    """Orthonormalize columns of X in the M inner product against ``basis`` and each other."""
    for _ in range(2):
        if basis is not None:
            X = X - basis @ (Mbasis.T @ X)
    MX = MX_fn(X)
    G = X.T @ MX
    G = 0.5 * (G + G.T)
    w, V = np.linalg.eigh(G)
    keep = w > drop_tol * max(w.max(), 1e-300)
    if not np.any(keep):
        return X[:, :0], MX[:, :0]
    scale = V[:, keep] / np.sqrt(w[keep])[None, :]
    X = X @ scale
    MX = MX @ scale
    # one more pass cleans the rounding left by the eigen-based step
    if basis is not None:
        X = X - basis @ (Mbasis.T @ X)
        MX = MX_fn(X)
    G = X.T @ MX
    L = np.linalg.cholesky(0.5 * (G + G.T))
    Linv = la.solve_triangular(L, np.eye(L.shape[0]), lower=True)
    return X @ Linv.T, MX @ Linv.T


def _lanczos(K, M, k, tol, block=3, max_dim=None, sigma=None):
    """Shift-invert block Lanczos with full reorthogonalization.

    Builds an M-orthonormal basis of the block Krylov space of
    ``(K - sigma M)^{-1} M`` and extracts Ritz pairs of ``(K, M)`` from it.
    """
    n = K.shape[0]
    if sigma is None:
        sigma = -1e-3 * K.diagonal().sum() / n
    max_dim = max_dim or min(n, max(20 * k, 200))
    try:
        lu = splu((K - sigma * M).tocsc())
    except RuntimeError as exc:
        raise EigenSolverError(f"sparse factorization failed: {exc}") from exc

    def Mmul(X):
        return M @ X

    rng = np.random.default_rng(SEED)
    X = rng.standard_normal((n, block))
    V, MV = _m_orthonormalize(X, Mmul, None, None)
    basis, Mbasis = V, MV
    res = None
    while True:
        W = lu.solve(np.ascontiguousarray(MV))
        V, MV = _m_orthonormalize(W, Mmul, basis, Mbasis)
        if V.shape[1] == 0:
            break
        basis = np.hstack([basis, V])
        Mbasis = np.hstack([Mbasis, MV])
        m = basis.shape[1]
        if m >= k + block:
            Kq = basis.T @ (K @ basis)
            Kq = 0.5 * (Kq + Kq.T)
            theta, Y = np.linalg.eigh(Kq)
            vals = theta[:k]
            vecs = basis @ Y[:, :k]
            res = _residuals(K, M, vals, vecs)
            if np.all(res <= tol):
                return vals, vecs
        if m + block > max_dim:
            break
    if res is None:
        raise NonConvergenceError("Krylov space exhausted before k Ritz pairs formed", np.array([]))
    # invariant subspace found or dimension cap hit: accept if converged
    Kq = basis.T @ (K @ basis)
    theta, Y = np.linalg.eigh(0.5 * (Kq + Kq.T))
    vals, vecs = theta[:k], basis @ Y[:, :k]
    res = _residuals(K, M, vals, vecs)
    if np.all(res <= tol):
        return vals, vecs
    raise NonConvergenceError(f"Lanczos did not converge; residuals {res}", res)


def smallest_eigenpairs(K, M, k: int, tol: float = 1e-8, method: str = "auto") -> EigenPairs:
    """The ``k`` smallest eigenpairs of the symmetric definite pencil ``(K, M)``.

    ``method`` is ``"dense"``, ``"lanczos"`` or ``"auto"`` (dense up to
    2000 unknowns).
    """
    n = K.shape[0]
    if not 1 <= k <= n // 4 and not (method == "dense" and 1 <= k <= n):
        raise EigenSolverError(f"need 1 <= k <= dim/4, got k={k}, dim={n}")
    if method == "auto":
        method = "dense" if n <= DENSE_LIMIT else "lanczos"
    if method == "dense":
        vals, vecs = _dense(K, M, k)
    elif method == "lanczos":
        vals, vecs = _lanczos(K, M, k, tol)
    else:
        raise ValueError(f"unknown method {method!r}")
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    vecs = vecs / np.sqrt(np.einsum("ij,ij->j", vecs, M @ vecs))[None, :]
    vecs = _fix_signs(vecs)
    res = _residuals(K, M, vals, vecs)
    if not np.all(np.isfinite(vals)):
        raise EigenSolverError("non-finite eigenvalues")
    if np.any(res > tol):
        raise NonConvergenceError(f"residuals above tolerance {tol}: {res}", res)
    return EigenPairs(vals, vecs, res, method)


def solve_mesh(m: TriMesh, k: int = 4, tol: float = 1e-8, method: str = "auto",
               mass_degree: int = 4) -> EigenPairs:
    """Assemble on ``m``, eliminate Dirichlet vertices, and solve."""
    K = assemble_stiffness(m)
    M = assemble_mass(m, mass_degree)
    dofs = DofMap.from_mesh(m)
    Kf, Mf = apply_dirichlet(K, M, dofs)
    pairs = smallest_eigenpairs(Kf, Mf, k, tol, method)
    pairs.dofs = dofs
    return pairs


# --------------------------------------------------------------------------
# convergence studies


def richardson(values, ratio: float = 2.0, order: float = 2.0) -> float:
    """Extrapolate the last two values of a sequence with step ratio ``ratio``."""
    f = ratio ** order
    return (f * values[-1] - values[-2]) / (f - 1.0)


def empirical_order(values, ratio: float = 2.0) -> float:
    a, b, c = values[-3:]
    d1, d2 = a - b, b - c
    if d1 == 0 or d2 == 0 or d1 / d2 <= 0:
        return float("nan")
    return math.log(d1 / d2) / math.log(ratio)


@dataclass
class ConvergenceStudy:
    hs: list
    values: list
    extrapolated: float
    order: float
    which: int
    sizes: list = field(default_factory=list)

    def as_dict(self):
        return {
            "h": list(self.hs),
            "values": [float(v) for v in self.values],
            "dofs": list(self.sizes),
            "richardson_order2": float(self.extrapolated),
            "empirical_order": float(self.order),
            "which": self.which,
        }


def eigenvalue_convergence_study(spec: DomainSpec, hs, which: int = 2, tol: float = 1e-8,
                                 project: bool = True, k: int | None = None) -> ConvergenceStudy:
    """Eigenvalue number ``which`` (1-based) on nested red refinements.

    ``hs`` must halve at each step; the first mesh is generated at ``hs[0]``
    and the rest by red refinement.  With ``project=False`` the P1 spaces are
    nested and the values are monotone up to quadrature rounding.
    """
    hs = [float(h) for h in hs]
    if len(hs) < 3:
        raise ValueError("need at least 3 refinement levels")
    for a, b in zip(hs, hs[1:]):
        if not math.isclose(a / b, 2.0, rel_tol=1e-9):
            raise ValueError("successive h values must halve")
    k = k or max(which + 1, 3)
    m = triangulate(spec, hs[0])
    values, sizes = [], []
    for level in range(len(hs)):
        if level:
            m = red_refine(m, project=project)
        pairs = solve_mesh(m, k=k, tol=tol)
        values.append(float(pairs.eigenvalues[which - 1]))
        sizes.append(int(len(pairs.dofs.free)))
        log.info("h=%g dofs=%d value=%.10f", hs[level], sizes[-1], values[-1])
    return ConvergenceStudy(hs, values, richardson(values), empirical_order(values), which, sizes)
