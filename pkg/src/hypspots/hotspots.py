"""Post-processing of eigenfunctions: gradients, extrema, nodal sets, verdicts."""
from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .eigen import EigenPairs, solve_mesh
from .fem import element_gradients
from .geometry import DiskPoint, distance_array
from .mesh import (
    DIRICHLET,
    DomainSpec,
    TriMesh,
    _boundary_loop,
    _size_euclidean,
    _triangulate_pslg,
    boundary_curves,
    is_convex,
    mesh_area,
    triangulate,
)
from .quadrature import triangle_rule
from .special import RadialEigenfunction, eval_J

log = logging.getLogger(__name__)

CONSISTENT = "consistent"
VIOLATION = "violation-candidate"
NOT_MET = "hypotheses-not-met"
QUARTER = 0.25
#: default interior collar (hyperbolic); twice the coarsest standard mesh size 0.2
COLLAR = 0.4


# --------------------------------------------------------------------------
# gradients


@dataclass
class RecoveredGradient:
    euclidean: np.ndarray  # (N, 2) model-coordinate gradient
    hyperbolic_magnitude: np.ndarray  # (N,)


def recover_gradient(m: TriMesh, u) -> RecoveredGradient:
    """Area-weighted average of the P1 element gradients at each vertex.

    ``|grad u|_H = (1 - |x|^2)/2 |grad u|_euc``.
    """
    u = np.asarray(u, dtype=float)
    g, area = element_gradients(m)
    grad_t = np.einsum("tid,ti->td", g, u[m.triangles])
    n = m.n_vertices
    acc = np.zeros((n, 2))
    wsum = np.zeros(n)
    for k in range(3):
        np.add.at(acc, m.triangles[:, k], grad_t * area[:, None])
        np.add.at(wsum, m.triangles[:, k], area)
    ge = acc / wsum[:, None]
    r2 = np.sum(m.points**2, axis=1)
    mag = 0.5 * (1.0 - r2) * np.hypot(ge[:, 0], ge[:, 1])
    return RecoveredGradient(ge, mag)


def critical_vertices(m: TriMesh, u, candidates=None) -> tuple[np.ndarray, np.ndarray]:
    """Discrete critical vertices of the P1 interpolant.

    Counts sign changes of ``u - u(v)`` around the link of each candidate
    vertex (ties broken by vertex index).  Zero changes is a local extremum,
    four or more is a saddle.  Returns ``(extrema, saddles)`` index arrays.
    Only interior vertices have a closed link; boundary vertices are skipped.
    """
    u = np.asarray(u, dtype=float)
    t = m.triangles
    changes = np.zeros(m.n_vertices, dtype=np.int64)
    for k in range(3):
        v, a, b = t[:, k], t[:, (k + 1) % 3], t[:, (k + 2) % 3]
        above_a = (u[a] > u[v]) | ((u[a] == u[v]) & (a > v))
        above_b = (u[b] > u[v]) | ((u[b] == u[v]) & (b > v))
        np.add.at(changes, v, (above_a != above_b).astype(np.int64))
    mask = np.ones(m.n_vertices, dtype=bool)
    mask[m.boundary_vertices()] = False
    if candidates is not None:
        keep = np.zeros(m.n_vertices, dtype=bool)
        keep[candidates] = True
        mask &= keep
    idx = np.where(mask)[0]
    return idx[changes[idx] == 0], idx[changes[idx] >= 4]


# --------------------------------------------------------------------------
# nodal sets


def _triangle_adjacency(m: TriMesh) -> sp.csr_matrix:
    t = m.triangles
    nt = len(t)
    e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    e.sort(axis=1)
    owner = np.tile(np.arange(nt), 3)
    order = np.lexsort((e[:, 1], e[:, 0]))
    e, owner = e[order], owner[order]
    same = np.all(e[1:] == e[:-1], axis=1)
    a, b = owner[:-1][same], owner[1:][same]
    data = np.ones(len(a))
    return sp.coo_matrix((data, (a, b)), shape=(nt, nt)).tocsr()


def triangle_signs(m: TriMesh, u) -> np.ndarray:
    """Majority vertex sign per triangle; ties go to the sign of the mean."""
    u = np.asarray(u, dtype=float)
    vals = u[m.triangles]
    s = np.sign(vals).sum(axis=1)
    tie = s == 0
    s[tie] = np.sign(vals[tie].mean(axis=1))
    return np.sign(s)


def count_nodal_domains(m: TriMesh, u) -> int:
    """Number of connected same-sign triangle regions."""
    signs = triangle_signs(m, u)
    adj = _triangle_adjacency(m).tocoo()
    keep = signs[adj.row] == signs[adj.col]
    nt = len(signs)
    g = sp.coo_matrix((np.ones(keep.sum()), (adj.row[keep], adj.col[keep])), shape=(nt, nt))
    ncomp, _ = connected_components(g, directed=False)
    return int(ncomp)


def nodal_set(m: TriMesh, u) -> list[np.ndarray]:
    """Zero level set of the P1 interpolant as polylines of complex points.

    Vertex values of exactly zero count as positive.
    """
    u = np.asarray(u, dtype=float)
    pos = u >= 0
    z = m.z
    segments = []
    for tri in m.triangles:
        s = pos[tri]
        if s.all() or not s.any():
            continue
        pts = []
        for a, b in ((0, 1), (1, 2), (2, 0)):
            i, j = tri[a], tri[b]
            if pos[i] != pos[j]:
                t = u[i] / (u[i] - u[j])
                pts.append(((min(i, j), max(i, j)), z[i] + t * (z[j] - z[i])))
        segments.append(pts)
    # chain segments through shared edge crossings
    by_key: dict = {}
    for k, seg in enumerate(segments):
        for key, _ in seg:
            by_key.setdefault(key, []).append(k)
    used = np.zeros(len(segments), dtype=bool)
    lines = []
    for start in range(len(segments)):
        if used[start]:
            continue
        used[start] = True
        (k0, p0), (k1, p1) = segments[start]
        chain = [p0, p1]
        for end_key, forward in ((k1, True), (k0, False)):
            key = end_key
            while True:
                nxt = [s for s in by_key.get(key, []) if not used[s]]
                if not nxt:
                    break
                s = nxt[0]
                used[s] = True
                (ka, pa), (kb, pb) = segments[s]
                key, p = (kb, pb) if ka == key else (ka, pa)
                if forward:
                    chain.append(p)
                else:
                    chain.insert(0, p)
        lines.append(np.array(chain))
    return lines


# --------------------------------------------------------------------------
# reports


@dataclass
class FunctionDiagnostics:
    index: int
    max_point: tuple
    max_boundary_distance: float
    min_point: tuple
    min_boundary_distance: float
    interior_grad_min_rel: float
    nodal_domain_count: int
    extrema_on_boundary: bool
    interior_critical_vertices: int


@dataclass
class HotspotsReport:
    mu2_or_lambda1: float
    problem: str  # "neumann" or "mixed"
    which: int
    max_point: tuple
    max_boundary_distance: float
    min_point: tuple
    min_boundary_distance: float
    interior_grad_min_rel: float
    nodal_domain_count: int
    interior_critical_vertices: int
    verdict: str
    convex: bool
    tau: float
    collar: float
    h: float
    eigenspace: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["max_point"] = list(self.max_point)
        d["min_point"] = list(self.min_point)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _diagnose(m: TriMesh, u, bdist, interior, near, index) -> FunctionDiagnostics:
    grad = recover_gradient(m, u).hyperbolic_magnitude
    gmax = grad.max()
    rel = float(grad[interior].min() / gmax) if gmax > 0 and np.any(interior) else float("nan")
    imax, imin = int(np.argmax(u)), int(np.argmin(u))
    # extrema count as on the boundary within two local mesh lengths of it
    on_bdry = bdist[imax] <= near + 1e-12 and bdist[imin] <= near + 1e-12
    ext, sad = critical_vertices(m, u, np.where(interior)[0])
    return FunctionDiagnostics(
        index=index,
        max_point=(float(m.points[imax, 0]), float(m.points[imax, 1])),
        max_boundary_distance=float(bdist[imax]),
        min_point=(float(m.points[imin, 0]), float(m.points[imin, 1])),
        min_boundary_distance=float(bdist[imin]),
        interior_grad_min_rel=rel,
        nodal_domain_count=count_nodal_domains(m, u),
        extrema_on_boundary=bool(on_bdry),
        interior_critical_vertices=int(len(ext) + len(sad)),
    )


def analyze_hotspots(m: TriMesh, pairs: EigenPairs, which: int, tau: float = 0.05,
                     collar: float | None = None, cluster_rtol: float = 1e-2,
                     convex: bool | None = None) -> HotspotsReport:
    """Critical-point diagnostics for eigenfunction number ``which`` (1-based).

    ``which`` is 2 for the Neumann problem and 1 for the mixed problem.  If
    neighbouring eigenvalues lie within ``cluster_rtol`` of the selected one
    they are treated as one eigenspace; every basis function is analyzed and
    the verdict is the conjunction.

    Interior vertices lie farther than ``collar`` (hyperbolic) from the
    boundary; the default is ``max(COLLAR, 2 h)``.  The collar is not tied
    to ``h`` alone because a Neumann eigenfunction has zero gradient at its
    boundary extrema, so an ``h``-sized collar drives the ratio to zero
    under refinement.

    A function passes when both extrema lie within two mesh lengths of the
    boundary and no interior vertex is a discrete critical point.  Neumann
    problems must also have ``interior_grad_min_rel >= tau``.  Mixed problems skip that gate:
    the gradient is unbounded at the Dirichlet/Neumann junctions, so the ratio
    to the global maximum goes to zero under refinement whatever the shape.
    """
    if not 1 <= which <= len(pairs):
        raise IndexError(f"eigenfunction {which} not available ({len(pairs)} computed)")
    mixed = pairs.dofs is not None and len(pairs.dofs.constrained) > 0
    vals = pairs.eigenvalues
    vecs = pairs.full_vectors()
    mu = float(vals[which - 1])
    if mixed and which != 1:
        raise IndexError("mixed problems are analyzed at which=1")
    near = 2.0 * m.target_h
    collar = max(COLLAR, near) if collar is None else float(collar)
    if convex is None:
        convex = is_convex(m.spec) if m.spec is not None else True

    cluster = [j for j in range(len(vals)) if abs(vals[j] - mu) <= cluster_rtol * abs(mu)]
    if not mixed and which >= 2:
        cluster = [j for j in cluster if j >= 1]
    notes = []
    if cluster[-1] == len(vals) - 1 and len(vals) > which:
        notes.append("eigenspace may extend beyond the computed eigenpairs")

    bdist = m.boundary_distance()
    interior = bdist > collar
    diags = [_diagnose(m, vecs[:, j], bdist, interior, near, j + 1) for j in cluster]
    main = next(d for d in diags if d.index == which)

    if mu > QUARTER:
        verdict = NOT_MET
        notes.append(f"eigenvalue {mu:.6g} exceeds 1/4")
    elif not convex:
        verdict = NOT_MET
        notes.append("domain is not geodesically convex")
    elif all(d.extrema_on_boundary and d.interior_critical_vertices == 0
             and (mixed or d.interior_grad_min_rel >= tau) for d in diags):
        verdict = CONSISTENT
    else:
        verdict = VIOLATION

    return HotspotsReport(
        mu2_or_lambda1=mu,
        problem="mixed" if mixed else "neumann",
        which=which,
        max_point=main.max_point,
        max_boundary_distance=main.max_boundary_distance,
        min_point=main.min_point,
        min_boundary_distance=main.min_boundary_distance,
        interior_grad_min_rel=min(d.interior_grad_min_rel for d in diags),
        nodal_domain_count=main.nodal_domain_count,
        interior_critical_vertices=sum(d.interior_critical_vertices for d in diags),
        verdict=verdict,
        convex=bool(convex),
        tau=tau,
        collar=collar,
        h=m.target_h,
        eigenspace=[asdict(d) for d in diags],
        notes=notes,
    )


def verify_domain(spec: DomainSpec, h: float = 0.1, k: int = 4, tol: float = 1e-8, tau: float = 0.05,
                  collar: float | None = None, max_remesh: int = 1):
    """Mesh, solve and analyze; a violation candidate is re-checked at ``h/2``.

    Returns ``(report, mesh, pairs)`` of the last level analyzed.
    """
    which = 1 if spec.dirichlet is not None else 2
    collar = max(COLLAR, 2.0 * h) if collar is None else collar
    for attempt in range(max_remesh + 1):
        m = triangulate(spec, h)
        pairs = solve_mesh(m, k=k, tol=tol)
        report = analyze_hotspots(m, pairs, which, tau=tau, collar=collar)
        if report.verdict != VIOLATION or attempt == max_remesh:
            if attempt:
                report.notes.append(f"re-meshed {attempt} time(s) after a violation candidate")
            return report, m, pairs
        log.info("violation candidate at h=%g, re-meshing at h=%g", h, h / 2)
        h /= 2
    raise AssertionError("unreachable")


# --------------------------------------------------------------------------
# the witness function from the contradiction argument


@dataclass
class WitnessField:
    values: np.ndarray
    basepoint: DiskPoint
    vertex: int
    mu: float


def _vertex_of(m: TriMesh, p) -> int:
    if isinstance(p, (int, np.integer)):
        return int(p)
    zp = p.z if isinstance(p, DiskPoint) else complex(*p) if not isinstance(p, complex) else p
    d = np.abs(m.z - zp)
    i = int(np.argmin(d))
    if d[i] > 1e-12:
        raise ValueError("basepoint is not a mesh vertex")
    return i


def proof_witness(m: TriMesh, u, mu: float, p) -> WitnessField:
    """``w(x) = u(p) J_{p,mu}(x) - u(x)`` sampled at the mesh vertices.

    ``p`` is a vertex index or a point coinciding with a vertex; ``u(p)``
    must be positive (flip the sign of ``u`` first if needed).
    """
    if not 0 < mu <= QUARTER:
        raise ValueError("witness construction needs mu in (0, 1/4]")
    u = np.asarray(u, dtype=float)
    i = _vertex_of(m, p)
    up = u[i]
    if not up > 0:
        raise ValueError("u(p) must be positive; multiply u by -1 first")
    bp = DiskPoint(float(m.points[i, 0]), float(m.points[i, 1]))
    J = RadialEigenfunction.from_mu(mu, bp)
    r = distance_array(bp.z, m.z)
    r[i] = 0.0
    w = up * eval_J(J, r) - u
    w[i] = 0.0  # J(0) = 1 only up to rounding
    return WitnessField(w, bp, i, mu)


# --------------------------------------------------------------------------
# experiments


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("HYPSPOTS_THREADS", "1")))
    except ValueError:
        return 1


def _map(fn, jobs):
    n = min(_workers(), len(jobs))
    if n <= 1:
        return [fn(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, *zip(*jobs)))


def boundary_length(spec: DomainSpec) -> float:
    return sum(c.length for c in boundary_curves(spec))


def _mixed_job(spec_dict, arc_len, center_s, h, k, tol, tau):
    spec = DomainSpec.from_dict(spec_dict)
    arc = spec.with_dirichlet(center_s - arc_len / 2, center_s + arc_len / 2)
    m = triangulate(arc, h)
    pairs = solve_mesh(m, k=k, tol=tol)
    report = analyze_hotspots(m, pairs, 1, tau=tau)
    u = pairs.full_vectors()[:, 0]
    interior = np.setdiff1d(np.arange(m.n_vertices), m.boundary_vertices())
    return {
        "arc_length": float(arc_len),
        "lambda1": float(pairs.eigenvalues[0]),
        "residual": float(pairs.residuals[0]),
        "interior_min_value": float(u[interior].min()),
        "report": report.to_dict(),
    }


def mixed_arc_experiment(spec: DomainSpec, arc_lengths, h: float = 0.1, k: int = 3, tol: float = 1e-8,
                         tau: float = 0.05, center_s: float = 0.0) -> list[dict]:
    """First mixed eigenvalue as the Dirichlet arc (centered at ``center_s``) varies."""
    if spec.dirichlet is not None:
        spec = DomainSpec.from_dict({k_: v for k_, v in spec.to_dict().items() if k_ != "dirichlet"})
    jobs = [(spec.to_dict(), float(a), center_s, h, k, tol, tau) for a in arc_lengths]
    return _map(_mixed_job, jobs)


def _sweep_job(n, depth, h, k, tol):
    spec = DomainSpec.ideal_polygon(n, depth)
    m = triangulate(spec, h)
    pairs = solve_mesh(m, k=k, tol=tol)
    return {
        "n": int(n),
        "depth": float(depth),
        "mu2": float(pairs.eigenvalues[1]),
        "mu3": float(pairs.eigenvalues[2]) if len(pairs) > 2 else None,
        "area": mesh_area(m),
        "dofs": int(m.n_vertices),
    }


def ideal_polygon_sweep(n_list, depths, h: float = 0.1, k: int = 4, tol: float = 1e-8) -> list[dict]:
    """Second Neumann eigenvalue of truncated regular ideal polygons.

    Each row also carries ``trend``: the change in ``mu2`` from the previous
    depth for the same ``n`` (``None`` for the first depth).
    """
    jobs = [(int(n), float(d), h, k, tol) for n in n_list for d in depths]
    rows = _map(_sweep_job, jobs)
    last = {}
    for row in rows:
        prev = last.get(row["n"])
        row["trend"] = None if prev is None else row["mu2"] - prev
        last[row["n"]] = row["mu2"]
    return rows


# --------------------------------------------------------------------------
# the log cutoff


def cutoff_function(z, eps: float):
    """``u_eps`` in model polar coordinates: 0 for r < eps, 1 for r > sqrt(eps), log ramp between."""
    r = np.abs(np.asarray(z))
    se = math.sqrt(eps)
    out = 1.0 - np.log(np.maximum(r, 1e-300) / se) / math.log(se)
    out = np.where(r < eps, 0.0, out)
    return np.where(r > se, 1.0, out)


def cutoff_gradient_sq(z, eps: float):
    """Euclidean ``|grad u_eps|^2``; equal to the hyperbolic energy density times lambda^2."""
    r = np.abs(np.asarray(z))
    inside = (r >= eps) & (r <= math.sqrt(eps))
    g = 1.0 / (np.maximum(r, 1e-300) * math.log(math.sqrt(eps))) ** 2
    return np.where(inside, g, 0.0)


def cutoff_mesh(spec: DomainSpec, eps: float, h: float = 0.1, kappa: float = 0.1) -> TriMesh:
    """Mesh of ``spec`` refined geometrically toward the origin, resolving both cutoff circles."""
    curves = boundary_curves(spec)
    z, tags, cidx, params = _boundary_loop(spec, curves, h)
    nb = len(z)
    pts = [np.c_[z.real, z.imag]]
    segs = [np.c_[np.arange(nb), (np.arange(nb) + 1) % nb]]
    marks = [tags]
    offset = nb
    for rad in (eps, math.sqrt(eps)):
        nc = max(16, int(math.ceil(2 * math.pi / kappa)))
        ang = 2 * math.pi * np.arange(nc) / nc
        pts.append(rad * np.c_[np.cos(ang), np.sin(ang)])
        segs.append(offset + np.c_[np.arange(nc), (np.arange(nc) + 1) % nc])
        marks.append(np.zeros(nc, dtype=int))
        offset += nc
    se = math.sqrt(eps)

    def size(x):
        r = np.abs(x)
        base = _size_euclidean(x, h)
        local = kappa * np.maximum(r, eps / 2)
        return np.where(r < 2 * se, np.minimum(base, local), base)

    out = _triangulate_pslg(np.concatenate(pts), np.concatenate(segs), np.concatenate(marks), size)
    return TriMesh(out["vertices"], out["triangles"].astype(np.int64), segs[0], tags, h, cidx, params,
                   tuple(curves), spec)


def cutoff_rayleigh(epsilon: float, spec: DomainSpec | None = None, h: float = 0.1,
                    kappa: float = 0.1) -> tuple[float, float]:
    """Dirichlet energy and L2 mass of the log cutoff ``u_eps`` on ``spec``.

    Uses a degree-7 rule on a mesh whose elements shrink like ``kappa r``
    near the origin.  Defaults to the disk of radius 3.
    """
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    spec = spec or DomainSpec.disk(3.0)
    m = cutoff_mesh(spec, epsilon, h, kappa)
    bary, w = triangle_rule(7)
    p = m.points[m.triangles]
    q = np.einsum("qk,tkd->tqd", bary, p)
    zq = q[..., 0] + 1j * q[..., 1]
    area = m.euclidean_areas()[:, None]
    energy = float(np.sum(area * w[None, :] * cutoff_gradient_sq(zq, epsilon)))
    lam2 = 4.0 / (1.0 - np.abs(zq) ** 2) ** 2
    mass = float(np.sum(area * w[None, :] * cutoff_function(zq, epsilon) ** 2 * lam2))
    return energy, mass


def cutoff_energy_closed_form(epsilon: float) -> float:
    return 4.0 * math.pi / math.log(1.0 / epsilon)


# --------------------------------------------------------------------------
# SVG export


def write_svg(m: TriMesh, u, path, size: int = 600, levels: int = 0, draw_mesh: bool = False):
    """Eigenfunction plot: boundary, zero set (thick) and optional extra contour levels."""
    u = np.asarray(u, dtype=float)
    half = size / 2

    def xy(zs):
        return [(half + half * 0.95 * c.real, half - half * 0.95 * c.imag) for c in zs]

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
             f'<circle cx="{half}" cy="{half}" r="{half * 0.95}" fill="none" stroke="#bbb"/>']
    if draw_mesh:
        for a, b in m.edges():
            (x1, y1), (x2, y2) = xy([m.z[a], m.z[b]])
            parts.append(f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" y2="{y2:.2f}" stroke="#eee" stroke-width="0.3"/>')
    colors = {1: "#222", 2: "#c00", 3: "#06c"}
    for (a, b), tag in zip(m.boundary_edges, m.boundary_tags):
        (x1, y1), (x2, y2) = xy([m.z[a], m.z[b]])
        parts.append(f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" y2="{y2:.2f}" '
                     f'stroke="{colors.get(int(tag), "#222")}" stroke-width="1.5"/>')
    span = max(abs(u.max()), abs(u.min()), 1e-300)
    level_values = [0.0] + [span * (i / (levels + 1)) * s for i in range(1, levels + 1) for s in (1, -1)]
    for lv in level_values:
        width = 2.0 if lv == 0.0 else 0.6
        for line in nodal_set(m, u - lv):
            pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in xy(line))
            parts.append(f'<polyline points="{pts}" fill="none" stroke="{"#000" if lv == 0 else "#888"}" '
                         f'stroke-width="{width}"/>')
    for idx, color in ((int(np.argmax(u)), "#d00"), (int(np.argmin(u)), "#00d")):
        (x, y), = xy([m.z[idx]])
        parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="4" fill="{color}"/>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
