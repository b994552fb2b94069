"""Domain descriptions and graded triangulations of hyperbolic domains.

All coordinates are Poincare-disk model coordinates.  Meshes are graded so
that element edges have hyperbolic length close to the requested ``h``:
the Euclidean target size at ``x`` is ``h (1 - |x|^2) / 2``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import triangle as tr
from scipy.optimize import brentq
from scipy.spatial import cKDTree

from .geometry import (
    DiskPoint,
    GeodesicSegment,
    GeometryError,
    as_complex,
    conformal_factor,
    distance_array,
    geodesic_between,
    geodesic_point,
    interior_angles,
    is_geodesically_convex,
    translate_to_origin,
)
from .quadrature import triangle_rule

NEUMANN, DIRICHLET, TRUNCATION = 1, 2, 3
TAG_NAMES = {NEUMANN: "neumann", DIRICHLET: "dirichlet", TRUNCATION: "truncation"}
MIN_ANGLE = 20.0


class SpecError(ValueError):
    """Invalid domain description."""


class MeshError(RuntimeError):
    """Mesh generation failed."""


# --------------------------------------------------------------------------
# domain specs


@dataclass(frozen=True)
class DirichletArc:
    """Connected boundary subarc, in hyperbolic arclength from the boundary start.

    The boundary starts at the angle-0 point of a disk or at the first
    vertex (first cut point for an ideal first vertex) of a polygon and runs
    counterclockwise.  ``start`` may be negative; positions wrap around.
    """

    start: float
    end: float

    def __post_init__(self):
        if not self.end > self.start:
            raise SpecError("dirichlet arc needs end > start")


@dataclass(frozen=True)
class DomainSpec:
    kind: str  # "disk" | "polygon" | "ideal_polygon"
    radius: float | None = None
    center: complex = 0j
    vertices: tuple[DiskPoint, ...] = ()
    edges: str = "geodesic"  # polygon edges: "geodesic" or "euclidean" (model-straight)
    n: int | None = None
    truncation: float | None = None
    dirichlet: DirichletArc | None = None

    def __post_init__(self):
        self.validate()

    # constructors -----------------------------------------------------
    @classmethod
    def disk(cls, radius: float, center=0j, dirichlet=None) -> "DomainSpec":
        return cls("disk", radius=float(radius), center=as_complex(center), dirichlet=_arc(dirichlet))

    @classmethod
    def polygon(cls, vertices, edges: str = "geodesic", truncation=None, dirichlet=None) -> "DomainSpec":
        verts = tuple(v if isinstance(v, DiskPoint) else DiskPoint.from_complex(as_complex(v)) for v in vertices)
        return cls("polygon", vertices=verts, edges=edges, truncation=truncation, dirichlet=_arc(dirichlet))

    @classmethod
    def ideal_polygon(cls, n: int, truncation: float, dirichlet=None) -> "DomainSpec":
        return cls("ideal_polygon", n=int(n), truncation=float(truncation), dirichlet=_arc(dirichlet))

    def with_dirichlet(self, start: float, end: float) -> "DomainSpec":
        d = self.to_dict()
        d["dirichlet"] = {"start": start, "end": end}
        return DomainSpec.from_dict(d)

    # validation -------------------------------------------------------
    def validate(self):
        if self.kind == "disk":
            if self.radius is None or not self.radius > 0:
                raise SpecError("disk radius must be positive")
            if abs(self.center) >= 1.0 - 1e-9:
                raise SpecError("disk center must be interior")
            rho = math.tanh(self.radius / 2.0)
            if 1.0 - rho < 1e-9:
                raise SpecError("disk radius too large for double precision")
        elif self.kind == "polygon":
            if len(self.vertices) < 3:
                raise SpecError("polygon needs at least 3 vertices")
            if any(v.ideal for v in self.vertices):
                if self.edges != "geodesic":
                    raise SpecError("ideal vertices need geodesic edges")
                if self.truncation is None or not self.truncation > 0:
                    raise SpecError("polygon with ideal vertices needs a positive truncation depth")
            if self.edges not in ("geodesic", "euclidean"):
                raise SpecError(f"unknown edge kind {self.edges!r}")
            ring = _polygon_ring(self)
            from shapely.geometry import Polygon

            poly = Polygon(np.c_[ring.real, ring.imag])
            if not poly.is_valid:
                raise SpecError("polygon boundary is self-intersecting")
            if _signed_area(ring) <= 0:
                raise SpecError("polygon vertices must be counterclockwise")
        elif self.kind == "ideal_polygon":
            if self.n is None or self.n < 3:
                raise SpecError("ideal polygon needs n >= 3")
            if self.truncation is None or not self.truncation > 0:
                raise SpecError("truncation depth must be positive")
        else:
            raise SpecError(f"unknown domain type {self.kind!r}")

    # serialization ----------------------------------------------------
    def to_dict(self) -> dict:
        if self.kind == "disk":
            d = {"type": "disk", "radius": self.radius}
            if self.center != 0:
                d["center"] = [self.center.real, self.center.imag]
        elif self.kind == "polygon":
            d = {
                "type": "polygon",
                "vertices": [[v.x, v.y] for v in self.vertices],
                "ideal": [v.ideal for v in self.vertices],
            }
            if self.edges != "geodesic":
                d["edges"] = self.edges
            if self.truncation is not None:
                d["truncation"] = self.truncation
        else:
            d = {"type": "ideal_polygon", "n": self.n, "truncation": self.truncation}
        if self.dirichlet is not None:
            d["dirichlet"] = {"start": self.dirichlet.start, "end": self.dirichlet.end}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DomainSpec":
        if not isinstance(d, dict) or "type" not in d:
            raise SpecError("domain spec must be an object with a 'type' field")
        kind = d["type"]
        known = {
            "disk": {"type", "radius", "center", "dirichlet"},
            "polygon": {"type", "vertices", "ideal", "edges", "truncation", "dirichlet"},
            "ideal_polygon": {"type", "n", "truncation", "dirichlet"},
        }
        if kind not in known:
            raise SpecError(f"unknown domain type {kind!r}")
        extra = set(d) - known[kind]
        if extra:
            raise SpecError(f"unexpected keys for {kind}: {sorted(extra)}")
        dirichlet = d.get("dirichlet")
        try:
            if kind == "disk":
                c = d.get("center", [0.0, 0.0])
                return cls.disk(float(d["radius"]), complex(c[0], c[1]), dirichlet)
            if kind == "polygon":
                raw = d["vertices"]
                ideal = d.get("ideal", [False] * len(raw))
                if len(ideal) != len(raw):
                    raise SpecError("'ideal' must have one flag per vertex")
                verts = []
                for (x, y), flag in zip(raw, ideal):
                    verts.append(DiskPoint.from_complex(complex(x, y), ideal=bool(flag)))
                t = d.get("truncation")
                return cls.polygon(verts, d.get("edges", "geodesic"), None if t is None else float(t), dirichlet)
            return cls.ideal_polygon(int(d["n"]), float(d["truncation"]), dirichlet)
        except SpecError:
            raise
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise SpecError(f"malformed {kind} spec: {exc}") from exc

    @classmethod
    def from_json(cls, path) -> "DomainSpec":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise SpecError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _arc(d):
    if d is None or isinstance(d, DirichletArc):
        return d
    if isinstance(d, dict):
        try:
            return DirichletArc(float(d["start"]), float(d["end"]))
        except KeyError as exc:
            raise SpecError(f"dirichlet arc missing {exc}") from exc
    start, end = d
    return DirichletArc(float(start), float(end))


def _signed_area(ring: np.ndarray) -> float:
    return 0.5 * float(np.sum(ring.real * np.roll(ring.imag, -1) - np.roll(ring.real, -1) * ring.imag))


def _polygon_ring(spec: DomainSpec, per_edge: int = 48) -> np.ndarray:
    verts = spec.vertices
    pts = []
    for i in range(len(verts)):
        a, b = verts[i], verts[(i + 1) % len(verts)]
        if spec.edges == "euclidean":
            t = np.linspace(0, 1, per_edge)[:-1]
            pts.append(a.z + t * (b.z - a.z))
        else:
            pts.append(geodesic_between(a, b).sample(per_edge)[:-1])
    return np.concatenate(pts)


def is_convex(spec: DomainSpec) -> bool:
    """Geodesic convexity of the described domain.

    Disks are convex.  Truncating an ideal vertex intersects with a
    half-plane, which keeps convexity, so ideal polygons are judged by their
    untruncated vertex angles.  A polygon with model-straight edges is
    convex iff it is Euclidean-convex and no edge line separates it from the
    origin (such edges are hypercycles bending away from the domain).
    """
    if spec.kind in ("disk", "ideal_polygon"):
        return True
    if spec.edges == "geodesic":
        return is_geodesically_convex(list(spec.vertices))
    zs = np.array([v.z for v in spec.vertices])
    n = len(zs)
    for i in range(n):
        a, b, c = zs[i - 1], zs[i], zs[(i + 1) % n]
        cross = ((b - a).conjugate() * (c - b)).imag
        if cross < -1e-14:
            return False
        edge = zs[(i + 1) % n] - zs[i]
        # origin must lie on the left of (or on) each edge line
        if (edge.conjugate() * (0 - zs[i])).imag < -1e-14:
            return False
    return True


# --------------------------------------------------------------------------
# ideal vertices


def _cusp_frame(v: complex, prev: complex, nxt: complex):
    """Maps to the upper half-plane with ``v -> inf`` and the cusp edges at Re w = -1, +1."""

    def h(z):
        return 1j * (v + z) / (v - z)

    x_prev = h(prev).real
    x_next = h(nxt).real
    m = 0.5 * (x_prev + x_next)
    hw = 0.5 * abs(x_next - x_prev)
    if hw < 1e-300:
        raise GeometryError("cusp edges coincide")

    def fwd(z):
        return (h(z) - m) / hw

    def back(w):
        zeta = hw * np.asarray(w) + m
        return v * (zeta - 1j) / (zeta + 1j)

    return fwd, back, (x_prev - m) / hw


def _cusp_cut(v: DiskPoint, depth: float, prev, nxt, center=0j):
    if not v.ideal:
        raise GeometryError("truncation needs an ideal vertex")
    if not depth > 0:
        raise GeometryError("truncation depth must be positive")
    vz, pz, nz = v.z, as_complex(prev), as_complex(nxt)
    fwd, back, side_prev = _cusp_frame(vz, pz, nz)
    wc = fwd(as_complex(center))
    xc, yc = wc.real, wc.imag
    if abs(xc) >= 1:
        raise GeometryError("center is not inside the cusp strip")

    def removed(y):
        return math.asin(min(1.0, (1 - xc) / y)) + math.asin(min(1.0, (1 + xc) / y))

    y_min = 1.0 + abs(xc)
    target = 2.0 * math.exp(-depth)
    if removed(y_min) <= target:
        y_area = y_min
    else:
        y_area = brentq(lambda y: removed(y) - target, y_min, y_min / math.sin(target / 2) + 10.0, xtol=1e-14 * y_min)
    y0 = max(yc * math.exp(depth), y_area)
    cut = []
    for x in (side_prev, -side_prev):
        w = x + 1j * math.sqrt(y0 * y0 - (x - xc) ** 2)
        cut.append(complex(back(w)))
    for z, nb in zip(cut, (pz, nz)):
        if abs(z) > 1.0 - 1e-9:
            raise GeometryError("truncation depth too large: cut degenerates below coordinate precision")
        if abs(nb) < 1.0:
            # the cut must land between the finite neighbour and the cusp
            if fwd(nb).imag >= math.sqrt(y0 * y0 - (fwd(nb).real - xc) ** 2):
                raise GeometryError("truncation depth too small: cut misses the adjacent edge")
    return cut[0], cut[1], removed(y0)


def truncate_ideal_vertex(v: DiskPoint, depth: float, prev, nxt, center=0j) -> GeodesicSegment:
    """Geodesic cut replacing the cusp at ideal vertex ``v``.

    ``prev`` and ``nxt`` are the neighbouring polygon vertices (ideal or
    not).  The cut is perpendicular to the geodesic from ``center`` to ``v``
    and placed so that it is at least ``depth`` from ``center`` and the
    removed cusp has area at most ``2 exp(-depth)``.
    """
    a, b, _ = _cusp_cut(v, depth, prev, nxt, center)
    return geodesic_between(DiskPoint.from_complex(a), DiskPoint.from_complex(b))


def removed_cusp_area(v: DiskPoint, depth: float, prev, nxt, center=0j) -> float:
    return _cusp_cut(v, depth, prev, nxt, center)[2]


def ideal_polygon_vertices(n: int, phase: float = 0.0) -> list[DiskPoint]:
    return [DiskPoint.ideal_at(phase + 2 * math.pi * k / n) for k in range(n)]


# --------------------------------------------------------------------------
# boundary curves


@dataclass
class BoundaryCurve:
    """Parametrized boundary piece ``gamma(t)``, ``t`` in [0, 1]."""

    gamma: Callable[[np.ndarray], np.ndarray]
    tag: int
    closed: bool = False
    curvature: float = 0.0  # hyperbolic geodesic curvature bound, for the sag rule
    samples: int = 4097
    _t: np.ndarray = field(init=False, repr=False)
    _s: np.ndarray = field(init=False, repr=False)
    _z: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self._t = np.linspace(0.0, 1.0, self.samples)
        self._z = np.asarray(self.gamma(self._t), dtype=complex)
        seg = distance_array(self._z[:-1], self._z[1:])
        self._s = np.concatenate([[0.0], np.cumsum(seg)])

    @property
    def length(self) -> float:
        return float(self._s[-1])

    def t_at(self, s):
        return np.interp(s, self._s, self._t)

    def s_at(self, t):
        return np.interp(t, self._t, self._s)


def boundary_curves(spec: DomainSpec) -> list[BoundaryCurve]:
    if spec.kind == "disk":
        rho = math.tanh(spec.radius / 2.0)
        inv = translate_to_origin(spec.center).inverse() if spec.center != 0 else None

        def gamma(t, rho=rho, inv=inv):
            z = rho * np.exp(2j * math.pi * np.asarray(t))
            return inv.apply(z) if inv is not None else z

        return [BoundaryCurve(gamma, NEUMANN, closed=True, curvature=1.0 / math.tanh(spec.radius))]

    if spec.kind == "ideal_polygon":
        verts = ideal_polygon_vertices(spec.n)
        depth = spec.truncation
        edges = "geodesic"
    else:
        verts = list(spec.vertices)
        depth = spec.truncation
        edges = spec.edges

    n = len(verts)
    cuts = {}
    for i, v in enumerate(verts):
        if v.ideal:
            cuts[i] = _cusp_cut(v, depth, verts[i - 1].z, verts[(i + 1) % n].z)

    def start_of(i):
        return cuts[i][1] if i in cuts else verts[i].z

    def end_of(i):
        return cuts[i][0] if i in cuts else verts[i].z

    curves = []
    for i in range(n):
        j = (i + 1) % n
        a, b = start_of(i), end_of(j)
        if edges == "euclidean":
            curves.append(BoundaryCurve(lambda t, a=a, b=b: a + np.asarray(t) * (b - a), NEUMANN, curvature=1.0))
        else:
            curves.append(BoundaryCurve(lambda t, a=a, b=b: geodesic_point(a, b, t), NEUMANN))
        if j in cuts:
            c0, c1, _ = cuts[j]
            curves.append(BoundaryCurve(lambda t, a=c0, b=c1: geodesic_point(a, b, t), TRUNCATION))
    return curves


def exact_area(spec: DomainSpec) -> float | None:
    """Closed-form area where one is available (disks, geodesic polygons)."""
    if spec.kind == "disk":
        return 2 * math.pi * (math.cosh(spec.radius) - 1)
    if spec.kind == "ideal_polygon":
        verts = ideal_polygon_vertices(spec.n)
    elif spec.edges == "geodesic":
        verts = list(spec.vertices)
    else:
        return None
    n = len(verts)
    area = (n - 2) * math.pi - math.fsum(interior_angles(verts))
    for i, v in enumerate(verts):
        if v.ideal:
            area -= removed_cusp_area(v, spec.truncation, verts[i - 1].z, verts[(i + 1) % n].z)
    return area


# --------------------------------------------------------------------------
# mesh container


@dataclass(frozen=True, eq=False)
class TriMesh:
    points: np.ndarray  # (N, 2) model coordinates
    triangles: np.ndarray  # (M, 3) counterclockwise
    boundary_edges: np.ndarray  # (B, 2), domain on the left
    boundary_tags: np.ndarray  # (B,) NEUMANN / DIRICHLET / TRUNCATION
    target_h: float
    edge_curve: np.ndarray | None = None  # (B,) index into curves
    edge_params: np.ndarray | None = None  # (B, 2) curve parameters of the edge ends
    curves: tuple = ()
    spec: DomainSpec | None = None

    @property
    def z(self) -> np.ndarray:
        return self.points[:, 0] + 1j * self.points[:, 1]

    @property
    def n_vertices(self) -> int:
        return len(self.points)

    def boundary_vertices(self, tags=None) -> np.ndarray:
        e = self.boundary_edges
        if tags is not None:
            e = e[np.isin(self.boundary_tags, list(tags))]
        return np.unique(e.ravel())

    def dirichlet_vertices(self) -> np.ndarray:
        return self.boundary_vertices([DIRICHLET])

    def euclidean_areas(self) -> np.ndarray:
        p = self.points[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def min_angles(self) -> np.ndarray:
        """Smallest interior angle of each triangle, in degrees."""
        p = self.points[self.triangles]
        out = np.full(len(p), 180.0)
        for k in range(3):
            a = p[:, (k + 1) % 3] - p[:, k]
            b = p[:, (k + 2) % 3] - p[:, k]
            cosang = np.sum(a * b, axis=1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            out = np.minimum(out, np.degrees(np.arccos(np.clip(cosang, -1, 1))))
        return out

    def boundary_distance(self, chunk: int = 2048) -> np.ndarray:
        """Hyperbolic distance from every vertex to the nearest boundary vertex."""
        bz = self.z[self.boundary_vertices()]
        z = self.z
        out = np.empty(len(z))
        for i in range(0, len(z), chunk):
            d = distance_array(z[i:i + chunk, None], bz[None, :])
            out[i:i + chunk] = d.min(axis=1)
        return out

    def edges(self) -> np.ndarray:
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)


def mesh_area(m: TriMesh) -> float:
    """Hyperbolic area: integral of lambda^2 over the triangles, 6-point rule."""
    bary, w = triangle_rule(4)
    p = m.points[m.triangles]
    q = np.einsum("qk,tkd->tqd", bary, p)
    lam2 = conformal_factor(q[..., 0] + 1j * q[..., 1]) ** 2
    return float(np.sum(m.euclidean_areas()[:, None] * w[None, :] * lam2))


# --------------------------------------------------------------------------
# boundary sampling


def _lfs_estimates(curves: Sequence[BoundaryCurve], cap: float) -> list[np.ndarray]:
    """Hyperbolic distance from each dense curve sample to non-adjacent curves.

    Distances above ``cap`` do not matter and are reported as ``inf``.
    """
    n = len(curves)
    out = [np.full(len(c._z), np.inf) for c in curves]
    if n < 4:
        return out
    trees = [cKDTree(np.c_[c._z.real, c._z.imag]) for c in curves]
    # Euclidean length of a hyperbolic distance cap is at most cap * (1 - |z|^2) / 2 * e^cap
    reach = [cap * math.exp(cap) * float(np.max(1 - np.abs(c._z) ** 2)) / 2 for c in curves]
    lo = [np.array([c._z.real.min(), c._z.imag.min()]) for c in curves]
    hi = [np.array([c._z.real.max(), c._z.imag.max()]) for c in curves]
    for i, c in enumerate(curves):
        xy = np.c_[c._z.real, c._z.imag]
        for j in range(n):
            if j == i or (j - i) % n in (1, n - 1):
                continue
            gap = np.maximum(0.0, np.maximum(lo[j] - hi[i], lo[i] - hi[j]))
            if np.hypot(*gap) > reach[i]:
                continue
            dist, idx = trees[j].query(xy, k=4, distance_upper_bound=reach[i])
            hit = np.isfinite(dist).any(axis=1)
            if not np.any(hit):
                continue
            idx = np.where(np.isfinite(dist[hit]), idx[hit], 0)
            d = distance_array(c._z[hit, None], curves[j]._z[idx]).min(axis=1)
            out[i][hit] = np.minimum(out[i][hit], d)
    return out


def _boundary_loop(spec: DomainSpec, curves, h: float, lfs_factor: float = 0.45):
    """Sample the boundary into a closed counterclockwise polyline.

    Returns point list, per-edge tag, curve index, and end parameters.
    """
    lfs = _lfs_estimates(curves, h / lfs_factor)
    total = sum(c.length for c in curves)
    offsets = np.concatenate([[0.0], np.cumsum([c.length for c in curves])])

    arc = spec.dirichlet
    if arc is not None:
        a0 = arc.start % total
        alen = arc.end - arc.start
        if alen >= total - 1e-12:
            a0, alen = 0.0, total

    def in_arc(s):
        if arc is None:
            return False
        return (s - a0) % total < alen

    pts, tags, cidx, params = [], [], [], []
    for ci, c in enumerate(curves):
        spacing = np.minimum(h, lfs_factor * lfs[ci])
        if c.curvature > 0:
            spacing = np.minimum(spacing, h * math.sqrt(8.0 / c.curvature))
        # breakpoints inside this curve
        s_lo, s_hi = offsets[ci], offsets[ci + 1]
        breaks = [0.0, c.length]
        if arc is not None and alen < total:
            for b in (a0, (a0 + alen) % total):
                if s_lo + 1e-12 < b < s_hi - 1e-12:
                    breaks.append(b - s_lo)
        breaks = sorted(breaks)
        density = 1.0 / spacing
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (density[1:] + density[:-1]) * np.diff(c._s))])
        for k in range(len(breaks) - 1):
            sa, sb = breaks[k], breaks[k + 1]
            ca, cb = np.interp([sa, sb], c._s, cum)
            nseg = max(1, int(math.ceil(cb - ca - 1e-9)))
            levels = ca + (cb - ca) * np.arange(nseg + 1) / nseg
            s_pts = np.interp(levels, cum, c._s)
            s_pts[0], s_pts[-1] = sa, sb
            t_pts = c.t_at(s_pts)
            z = np.asarray(c.gamma(t_pts), dtype=complex)
            mids = s_lo + 0.5 * (s_pts[1:] + s_pts[:-1])
            for e in range(nseg):
                pts.append(z[e])
                tag = DIRICHLET if in_arc(mids[e]) else c.tag
                tags.append(tag)
                cidx.append(ci)
                params.append((t_pts[e], t_pts[e + 1]))
    return np.array(pts), np.array(tags), np.array(cidx), np.array(params)


def _size_euclidean(z: np.ndarray, h: float) -> np.ndarray:
    return h * (1.0 - np.abs(z) ** 2) / 2.0


def _triangulate_pslg(points: np.ndarray, segments: np.ndarray, markers: np.ndarray,
                      size_fn: Callable[[np.ndarray], np.ndarray], max_passes: int = 40,
                      holes=None):
    """Constrained quality Delaunay mesh with graded area bounds.

    Boundary segments are never split (``Y``) so boundary vertices keep
    their curve parameters.
    """
    data = {
        "vertices": points,
        "segments": segments,
        "segment_markers": markers[:, None],
    }
    if holes is not None:
        data["holes"] = holes
    flags = f"pq{MIN_ANGLE:g}YQ"
    out = tr.triangulate(data, flags)
    for _ in range(max_passes):
        p = out["vertices"]
        t = out["triangles"]
        c = p[t].mean(axis=1)
        target = (math.sqrt(3) / 4.0) * size_fn(c[:, 0] + 1j * c[:, 1]) ** 2
        pt = p[t]
        area = 0.5 * np.abs((pt[:, 1, 0] - pt[:, 0, 0]) * (pt[:, 2, 1] - pt[:, 0, 1])
                            - (pt[:, 1, 1] - pt[:, 0, 1]) * (pt[:, 2, 0] - pt[:, 0, 0]))
        if np.all(area <= 1.0001 * target):
            return out
        out["triangle_max_area"] = target
        out = tr.triangulate(out, "r" + flags + "a")
    raise MeshError("area refinement did not converge")


def triangulate(spec: DomainSpec, h: float) -> TriMesh:
    """Quality triangulation of ``spec`` with hyperbolic edge-length target ``h``."""
    if not h > 0:
        raise MeshError("h must be positive")
    curves = boundary_curves(spec)
    last_bad = None
    for attempt in range(4):
        factor = 0.8 ** attempt
        z, tags, cidx, params = _boundary_loop(spec, curves, h * factor)
        nb = len(z)
        segs = np.c_[np.arange(nb), (np.arange(nb) + 1) % nb]
        out = _triangulate_pslg(np.c_[z.real, z.imag], segs, tags, lambda x: _size_euclidean(x, h))
        pts = out["vertices"]
        if len(pts) < nb or not np.allclose(pts[:nb], np.c_[z.real, z.imag], rtol=0, atol=0):
            raise MeshError("triangle reordered the boundary vertices")
        m = TriMesh(
            points=pts,
            triangles=out["triangles"].astype(np.int64),
            boundary_edges=segs,
            boundary_tags=tags,
            target_h=float(h),
            edge_curve=cidx,
            edge_params=params,
            curves=tuple(curves),
            spec=spec,
        )
        _check_mesh(m)
        worst = float(m.min_angles().min())
        if worst >= MIN_ANGLE - 1e-6:
            return m
        last_bad = worst
    raise MeshError(f"minimum-angle bound {MIN_ANGLE} deg unreachable (worst {last_bad:.2f} deg)")


def _check_mesh(m: TriMesh):
    if np.any(m.euclidean_areas() <= 0):
        raise MeshError("mesh contains non-positively oriented triangles")
    if np.any(np.hypot(m.points[:, 0], m.points[:, 1]) >= 1.0 - 1e-9):
        raise MeshError("mesh vertex on or outside the unit circle")


# --------------------------------------------------------------------------
# refinement


def red_refine(m: TriMesh, project: bool = True) -> TriMesh:
    """Split every triangle into four through its edge midpoints.

    With ``project=False`` the midpoints are the Euclidean midpoints, so the
    P1 spaces are nested.  With ``project=True`` midpoints of boundary edges
    are moved onto the exact boundary curve.
    """
    t = m.triangles
    e_all = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    key = np.sort(e_all, axis=1)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    inv = inv.ravel()
    n0 = len(m.points)
    mids = 0.5 * (m.points[uniq[:, 0]] + m.points[uniq[:, 1]])
    mid_index = n0 + np.arange(len(uniq))

    b = m.boundary_edges
    bkey = np.sort(b, axis=1)
    lookup = {tuple(k): i for i, k in enumerate(uniq)}
    b_mid = np.array([lookup[tuple(k)] for k in bkey])
    new_params = None
    if m.edge_params is not None:
        tmid = 0.5 * (m.edge_params[:, 0] + m.edge_params[:, 1])
        if project:
            for i, (ci, tm) in enumerate(zip(m.edge_curve, tmid)):
                zc = complex(np.asarray(m.curves[ci].gamma(np.array([tm])))[0])
                mids[b_mid[i]] = (zc.real, zc.imag)
        new_params = np.concatenate(
            [np.c_[m.edge_params[:, 0], tmid], np.c_[tmid, m.edge_params[:, 1]]]
        )
    points = np.concatenate([m.points, mids])

    M = len(t)
    e01 = mid_index[inv[:M]]
    e12 = mid_index[inv[M:2 * M]]
    e20 = mid_index[inv[2 * M:]]
    tris = np.concatenate([
        np.c_[t[:, 0], e01, e20],
        np.c_[e01, t[:, 1], e12],
        np.c_[e20, e12, t[:, 2]],
        np.c_[e01, e12, e20],
    ])
    bm = mid_index[b_mid]
    bedges = np.concatenate([np.c_[b[:, 0], bm], np.c_[bm, b[:, 1]]])
    # interleave so each original edge's halves stay adjacent in loop order
    order = np.ravel(np.c_[np.arange(len(b)), len(b) + np.arange(len(b))])
    bedges = bedges[order]
    tags = np.repeat(m.boundary_tags, 2)
    curve = np.repeat(m.edge_curve, 2) if m.edge_curve is not None else None
    if new_params is not None:
        new_params = new_params[order]
    out = TriMesh(points, tris, bedges, tags, m.target_h / 2.0, curve, new_params, m.curves, m.spec)
    _check_mesh(out)
    return out


# --------------------------------------------------------------------------
# export


def write_vtk(m: TriMesh, path, point_data: dict | None = None, title: str = "hypspots mesh"):
    """Legacy ASCII VTK unstructured grid.

    Cells are the triangles followed by the boundary edges; the ``tag`` cell
    field is 0 on triangles and the boundary tag on edges.
    """
    n = len(m.points)
    nt = len(m.triangles)
    nb = len(m.boundary_edges)
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID", f"POINTS {n} double"]
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in m.points]
    lines.append(f"CELLS {nt + nb} {4 * nt + 3 * nb}")
    lines += [f"3 {a} {b} {c}" for a, b, c in m.triangles]
    lines += [f"2 {a} {b}" for a, b in m.boundary_edges]
    lines.append(f"CELL_TYPES {nt + nb}")
    lines += ["5"] * nt + ["3"] * nb
    lines += [f"CELL_DATA {nt + nb}", "SCALARS tag int 1", "LOOKUP_TABLE default"]
    lines += ["0"] * nt + [str(int(t)) for t in m.boundary_tags]
    if point_data:
        lines.append(f"POINT_DATA {n}")
        for name, values in point_data.items():
            values = np.asarray(values, dtype=float)
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [f"{v:.17g}" for v in values]
    Path(path).write_text("\n".join(lines) + "\n")


def read_vtk_points(path) -> np.ndarray:
    """Read back the POINTS block of a file written by :func:`write_vtk`."""
    text = Path(path).read_text().splitlines()
    i = next(k for k, line in enumerate(text) if line.startswith("POINTS"))
    n = int(text[i].split()[1])
    return np.array([[float(v) for v in line.split()[:2]] for line in text[i + 1:i + 1 + n]])
