"""Exact computations in the Poincare disk model of the hyperbolic plane.

Points are stored as model coordinates. Internally everything is done with
complex numbers ``z = x + iy``; the public helpers accept :class:`DiskPoint`,
complex numbers or ``(x, y)`` pairs interchangeably.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

#: Interior points closer than this to the unit circle are rejected.
RIM_TOL = 1e-9
IDEAL_TOL = 1e-12


class GeometryError(ValueError):
    """Raised on invalid hyperbolic-geometry input."""


@dataclass(frozen=True)
class DiskPoint:
    x: float
    y: float
    ideal: bool = False

    def __post_init__(self):
        r2 = self.x * self.x + self.y * self.y
        if self.ideal:
            if abs(r2 - 1.0) > 2 * IDEAL_TOL + 1e-15:
                raise GeometryError(f"ideal point ({self.x}, {self.y}) is not on the unit circle")
        elif r2 >= (1.0 - RIM_TOL) ** 2:
            raise GeometryError(f"point ({self.x}, {self.y}) is not interior to the unit disk")

    @property
    def z(self) -> complex:
        return complex(self.x, self.y)

    @classmethod
    def from_complex(cls, z: complex, ideal: bool = False) -> "DiskPoint":
        if ideal:
            z = z / abs(z)
        return cls(float(z.real), float(z.imag), ideal)

    @classmethod
    def ideal_at(cls, angle: float) -> "DiskPoint":
        return cls(math.cos(angle), math.sin(angle), True)


def as_complex(p) -> complex:
    if isinstance(p, DiskPoint):
        return p.z
    if isinstance(p, (complex, float, int)):
        return complex(p)
    x, y = p
    return complex(x, y)


def _check_interior(z: complex):
    if abs(z) >= 1.0 - RIM_TOL:
        raise GeometryError(f"point {z} is not an interior point")


def hyp_distance(p, q) -> float:
    """Hyperbolic distance between two interior points."""
    if getattr(p, "ideal", False) or getattr(q, "ideal", False):
        raise GeometryError("hyp_distance is undefined for ideal points")
    zp, zq = as_complex(p), as_complex(q)
    _check_interior(zp)
    _check_interior(zq)
    return float(distance_array(zp, zq))


def distance_array(zp, zq):
    """Vectorized distance on complex arrays (no validation).

    Uses ``2 artanh |(q - p) / (1 - conj(p) q)|`` which is accurate for close
    points, unlike the arccosh form.
    """
    zp = np.asarray(zp)
    zq = np.asarray(zq)
    ratio = np.abs((zq - zp) / (1.0 - np.conj(zp) * zq))
    return 2.0 * np.arctanh(np.minimum(ratio, 1.0))


def distance_from_origin(rho):
    """Hyperbolic distance from 0 to a point of Euclidean radius ``rho``."""
    return 2.0 * np.arctanh(rho)


def radius_to_model(r):
    """Euclidean model radius of the hyperbolic circle of radius ``r`` about 0."""
    return np.tanh(np.asarray(r) / 2.0)


def conformal_factor(z):
    """lambda(x) = 2 / (1 - |x|^2)."""
    z = np.asarray(z)
    return 2.0 / (1.0 - np.abs(z) ** 2)


@dataclass(frozen=True)
class MobiusIsometry:
    """Orientation-preserving isometry z -> (a z + b) / (conj(b) z + conj(a))."""

    a: complex
    b: complex

    def __post_init__(self):
        det = abs(self.a) ** 2 - abs(self.b) ** 2
        if abs(det - 1.0) > 1e-12:
            raise GeometryError(f"|a|^2 - |b|^2 = {det!r}, expected 1")

    @classmethod
    def identity(cls) -> "MobiusIsometry":
        return cls(1.0 + 0j, 0j)

    @classmethod
    def rotation(cls, angle: float) -> "MobiusIsometry":
        return cls(complex(math.cos(angle / 2), math.sin(angle / 2)), 0j)

    def __call__(self, z):
        if isinstance(z, DiskPoint):
            w = self.apply(z.z)
            return DiskPoint.from_complex(complex(w), ideal=z.ideal)
        return self.apply(z)

    def apply(self, z):
        a, b = self.a, self.b
        return (a * z + b) / (np.conj(b) * z + np.conj(a))

    def compose(self, other: "MobiusIsometry") -> "MobiusIsometry":
        """Return ``self o other`` (apply ``other`` first)."""
        a, b, c, d = self.a, self.b, other.a, other.b
        na = a * c + b * d.conjugate()
        nb = a * d + b * c.conjugate()
        # renormalize against drift in long chains
        s = math.sqrt(abs(na) ** 2 - abs(nb) ** 2)
        return MobiusIsometry(na / s, nb / s)

    def inverse(self) -> "MobiusIsometry":
        return MobiusIsometry(self.a.conjugate(), -self.b)

    def derivative(self, z):
        a, b = self.a, self.b
        return 1.0 / (np.conj(b) * z + np.conj(a)) ** 2


def translate_to_origin(p) -> MobiusIsometry:
    """Hyperbolic translation taking ``p`` to the origin."""
    zp = as_complex(p)
    _check_interior(zp)
    s = math.sqrt(1.0 - abs(zp) ** 2)
    return MobiusIsometry(complex(1.0 / s), -zp / s)


@dataclass(frozen=True)
class GeodesicSegment:
    a: DiskPoint
    b: DiskPoint
    kind: str  # "diameter-line" or "circular-arc"
    center: complex | None = None
    radius: float | None = None

    def sample(self, n: int = 64) -> np.ndarray:
        """Points along the segment as a complex array, endpoints included."""
        za, zb = self.a.z, self.b.z
        if self.kind == "diameter-line":
            t = np.linspace(0.0, 1.0, n)
            return za + t * (zb - za)
        c, rad = self.center, self.radius
        ta = np.angle(za - c)
        tb = np.angle(zb - c)
        d = np.angle(np.exp(1j * (tb - ta)))  # short way round
        t = ta + np.linspace(0.0, 1.0, n) * d
        return c + rad * np.exp(1j * t)


def geodesic_between(p, q) -> GeodesicSegment:
    """Geodesic through two interior or ideal points."""
    pa = p if isinstance(p, DiskPoint) else DiskPoint.from_complex(as_complex(p))
    qa = q if isinstance(q, DiskPoint) else DiskPoint.from_complex(as_complex(q))
    zp, zq = pa.z, qa.z
    if abs(zp - zq) < 1e-14:
        raise GeometryError("geodesic_between needs two distinct points")
    # center c of the orthogonal circle: 2 Re(c conj(z)) = 1 + |z|^2 for z in {p, q}
    det = zp.real * zq.imag - zp.imag * zq.real
    scale = max(abs(zp), abs(zq), 1e-300)
    if abs(det) <= 1e-13 * scale * scale:
        return GeodesicSegment(pa, qa, "diameter-line")
    rhs_p = 0.5 * (1.0 + abs(zp) ** 2)
    rhs_q = 0.5 * (1.0 + abs(zq) ** 2)
    cx = (rhs_p * zq.imag - rhs_q * zp.imag) / det
    cy = (zp.real * rhs_q - zq.real * rhs_p) / det
    c = complex(cx, cy)
    rad = math.sqrt(abs(c) ** 2 - 1.0)
    return GeodesicSegment(pa, qa, "circular-arc", c, rad)


def geodesic_point(p: complex, q: complex, t) -> np.ndarray:
    """Point at fraction ``t`` of the hyperbolic length along the geodesic p -> q.

    Both endpoints must be interior.
    """
    g = translate_to_origin(p)
    w = complex(g.apply(q))
    d = distance_from_origin(abs(w))
    u = w / abs(w)
    pts = np.tanh(np.asarray(t) * d / 2.0) * u
    return g.inverse().apply(pts)


def tangent_direction(p: complex, q: complex) -> complex:
    """Unit tangent at interior ``p`` of the geodesic running to ``q``.

    Translating ``p`` to 0 has positive real derivative at ``p``, so the
    direction of the image of ``q`` is the tangent direction.
    """
    w = (q - p) / (1.0 - np.conj(p) * q)
    return w / abs(w)


def polygon_area(angles: Sequence[float]) -> float:
    """Area of a geodesic polygon from its interior angles (Gauss-Bonnet)."""
    angles = list(angles)
    n = len(angles)
    if n < 3:
        raise GeometryError("a polygon needs at least three angles")
    for a in angles:
        if not 0.0 <= a < math.pi:
            raise GeometryError(f"interior angle {a} outside [0, pi)")
    area = (n - 2) * math.pi - math.fsum(angles)
    if area <= 0:
        raise GeometryError("angle sum too large for a hyperbolic polygon")
    return area


def interior_angles(vertices: Sequence[DiskPoint]) -> list[float]:
    """Interior angles of a counterclockwise geodesic polygon.

    Angles at ideal vertices are exactly 0.
    """
    n = len(vertices)
    out = []
    for i in range(n):
        v = vertices[i]
        if v.ideal:
            out.append(0.0)
            continue
        prev = vertices[i - 1].z
        nxt = vertices[(i + 1) % n].z
        d_prev = _tangent_any(v.z, prev)
        d_next = _tangent_any(v.z, nxt)
        ang = np.angle(d_prev / d_next) % (2 * math.pi)
        out.append(float(ang))
    return out


def _tangent_any(p: complex, q: complex) -> complex:
    # geodesic tangents toward ideal points use the same formula
    return tangent_direction(p, q)


def geodesic_polygon_boundary(vertices: Sequence[DiskPoint], per_edge: int = 64) -> np.ndarray:
    pts = []
    n = len(vertices)
    for i in range(n):
        seg = geodesic_between(vertices[i], vertices[(i + 1) % n])
        pts.append(seg.sample(per_edge)[:-1])
    return np.concatenate(pts)


def is_geodesically_convex(vertices: Sequence[DiskPoint]) -> bool:
    """True iff the geodesic polygon has every interior angle <= pi.

    Raises :class:`GeometryError` when the boundary self-intersects.
    """
    from shapely.geometry import Polygon

    if len(vertices) < 3:
        raise GeometryError("a polygon needs at least three vertices")
    ring = geodesic_polygon_boundary(vertices)
    poly = Polygon(np.c_[ring.real, ring.imag])
    if not poly.is_valid:
        raise GeometryError("polygon boundary is self-intersecting")
    signed = 0.5 * np.sum(ring.real * np.roll(ring.imag, -1) - np.roll(ring.real, -1) * ring.imag)
    if signed <= 0:
        raise GeometryError("polygon vertices must be counterclockwise")
    return all(a <= math.pi + 1e-12 for a in interior_angles(vertices))


def regular_polygon(n: int, angle: float, center=0j) -> list[DiskPoint]:
    """Vertices of the regular geodesic n-gon with the given interior angle."""
    cosh_rc = 1.0 / (math.tan(math.pi / n) * math.tan(angle / 2.0))
    if cosh_rc <= 1.0:
        raise GeometryError("no regular hyperbolic polygon with these angles")
    rho = math.tanh(math.acosh(cosh_rc) / 2.0)
    zs = rho * np.exp(2j * math.pi * np.arange(n) / n)
    if center != 0:
        zs = translate_to_origin(center).inverse().apply(zs)
    return [DiskPoint.from_complex(complex(z)) for z in zs]
