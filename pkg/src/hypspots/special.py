"""Radial Laplace eigenfunctions on the hyperbolic plane.

The radial solution of ``-Delta J = mu J`` about a point is the Legendre
function ``P_nu(cosh r)`` with ``nu (nu + 1) = -mu``.  For ``mu <= 1/4`` the
degree is real, for ``mu > 1/4`` it is conical, ``nu = -1/2 + i t`` with
``t = sqrt(mu - 1/4)``.

Evaluation goes through the Laplace integral

    P_nu(z) = 1/pi int_0^pi (z + sqrt(z^2 - 1) cos(theta))^nu dtheta.

With ``z = cosh r`` and the substitution ``log(z + sinh(r) cos(theta)) =
r cos(2a)`` it becomes

    P_nu(cosh r) = 2/pi int_0^{pi/2} exp((nu + 1/2) u) / sqrt(q(r cos^2 a) q(r sin^2 a)) da

with ``u = r cos(2a)`` and ``q(x) = sinh(x)/x``.  The integrand is smooth and
bounded for every ``r >= 0``, so plain Gauss-Legendre converges quickly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .geometry import DiskPoint, as_complex, distance_array

QUAD_TOL = 1e-12
MAX_NODES = 4096


class SpecialFunctionError(ValueError):
    pass


class RootNotFoundError(RuntimeError):
    pass


@dataclass(frozen=True)
class DegreeMap:
    """Eigenvalue ``mu`` and the degree parameters solving ``-mu = s (s - 1)``.

    For ``mu <= 1/4`` ``s`` is the larger real root; for ``mu > 1/4``
    ``s = 1/2 + i t``.  Evaluation uses the degree ``nu = s - 1``; since
    ``P_{-s} = P_{s-1}`` this is the same function, and for small ``mu`` it
    keeps ``nu`` near 0 so the derivative integral does not cancel.
    """

    mu: float

    def __post_init__(self):
        if not self.mu > 0:
            raise SpecialFunctionError(f"mu must be positive, got {self.mu}")

    @property
    def conical(self) -> bool:
        return self.mu > 0.25

    @property
    def t(self) -> float:
        return math.sqrt(self.mu - 0.25) if self.conical else 0.0

    @property
    def s(self) -> complex | float:
        if self.conical:
            return complex(0.5, self.t)
        return 0.5 + math.sqrt(0.25 - self.mu)

    @property
    def nu(self) -> complex | float:
        if self.conical:
            return complex(-0.5, self.t)
        return self.s - 1.0

    def other_root(self) -> complex | float:
        s = self.s
        return 1 - s if not self.conical else complex(0.5, -self.t)


@lru_cache(maxsize=None)
def _gauss_half_pi(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    a = (x + 1.0) * (math.pi / 4.0)
    return a, w * (math.pi / 4.0)


def _q(x):
    # sinh(x)/x, stable at 0
    x = np.asarray(x, dtype=float)
    out = np.ones_like(x)
    big = x > 1e-8
    out[big] = np.sinh(x[big]) / x[big]
    small = ~big
    out[small] = 1.0 + x[small] ** 2 / 6.0
    return out


def _split_degree(nu):
    """Return (kappa, t) where nu + 1/2 = kappa for real degree or i t for conical."""
    if isinstance(nu, complex) or np.iscomplexobj(nu):
        nu = complex(nu)
        if abs(nu.real + 0.5) > 1e-14:
            raise SpecialFunctionError("complex degrees must have real part -1/2")
        if nu.imag == 0.0:
            return 0.0, None
        return None, abs(nu.imag)
    return float(nu) + 0.5, None


def _integrate(kernel, r, tol=QUAD_TOL):
    """Gauss-Legendre over a in [0, pi/2] with node doubling.

    ``kernel(a, r)`` gets ``a`` shaped (n, 1) and ``r`` shaped (1, m).
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))[None, :]
    n = 16
    prev = None
    while True:
        a, w = _gauss_half_pi(n)
        val = (w[:, None] * kernel(a[:, None], r)).sum(axis=0)
        if prev is not None:
            err = np.abs(val - prev)
            if np.all(err <= tol * np.maximum(1.0, np.abs(val))):
                return val
        if n >= MAX_NODES:
            raise SpecialFunctionError(
                f"Laplace-integral quadrature did not converge (max change {np.max(err):.3e})"
            )
        prev = val
        n *= 2


def _weight(a, r):
    c2 = np.cos(a) ** 2
    s2 = np.sin(a) ** 2
    return 1.0 / np.sqrt(_q(r * c2) * _q(r * s2))


def _legendre_cosh(nu, r, tol=QUAD_TOL):
    """P_nu(cosh r) for an array of r >= 0."""
    kappa, t = _split_degree(nu)

    def kernel(a, rr):
        u = rr * np.cos(2.0 * a)
        osc = np.cos(t * u) if t is not None else np.exp(kappa * u)
        return osc * _weight(a, rr)

    return (2.0 / math.pi) * _integrate(kernel, r, tol)


def _legendre_cosh_dr(nu, r, tol=QUAD_TOL):
    """d/dr P_nu(cosh r) for an array of r >= 0."""
    kappa, t = _split_degree(nu)
    r = np.atleast_1d(np.asarray(r, dtype=float))
    out = np.zeros_like(r)
    pos = r > 0
    if not np.any(pos):
        return out
    rp = r[pos]

    def kernel(a, rr):
        u = rr * np.cos(2.0 * a)
        tail = np.cosh(rr) - np.exp(-u)
        if t is not None:
            # Re[(-1/2 + i t) exp(i t u)]
            osc = -0.5 * np.cos(t * u) - t * np.sin(t * u)
        else:
            osc = (kappa - 0.5) * np.exp(kappa * u)
        return osc * tail * _weight(a, rr)

    out[pos] = (2.0 / math.pi) * _integrate(kernel, rp, tol) / np.sinh(rp)
    return out


def legendre_P(nu, z, tol: float = QUAD_TOL):
    """Legendre function ``P_nu(z)`` for ``z >= 1``.

    ``nu`` is a real degree or a conical degree ``-1/2 + i t`` (passed as a
    complex number); in both cases the result is real.
    """
    z_arr = np.asarray(z, dtype=float)
    if np.any(z_arr < 1.0):
        raise SpecialFunctionError("legendre_P requires z >= 1")
    r = np.arccosh(z_arr)
    val = _legendre_cosh(nu, r.ravel(), tol).reshape(r.shape)
    return float(val) if val.ndim == 0 else val


def conical_P(t: float, z, tol: float = QUAD_TOL):
    """Conical function ``P_{-1/2 + i t}(z)``."""
    return legendre_P(complex(-0.5, t), z, tol)


def legendre_P_series(nu, z, max_terms: int = 20000):
    """Hypergeometric series ``2F1(-nu, nu + 1; 1; (1 - z)/2)``.

    Converges for ``1 <= z < 3``; used as an independent check of the
    quadrature.
    """
    if z < 1 or z >= 3:
        raise SpecialFunctionError("series needs 1 <= z < 3")
    nu = complex(nu)
    x = (1.0 - z) / 2.0
    term = 1.0 + 0j
    total = term
    for k in range(max_terms):
        term *= (-nu + k) * (nu + 1 + k) / ((k + 1) ** 2) * x
        total += term
        if abs(term) < 1e-17 * max(1.0, abs(total)):
            break
    else:
        raise SpecialFunctionError("hypergeometric series did not converge")
    return total.real


def _mu_of_degree(nu) -> float:
    nu = complex(nu)
    mu = -(nu * (nu + 1))
    return float(mu.real)


def assoc_legendre_P1(nu, r):
    """``P^1_nu(cosh r)`` in the convention ``P^1_nu(z) = sqrt(z^2 - 1) P_nu'(z)``.

    No Condon-Shortley phase; this equals ``d/dr P_nu(cosh r)``.
    """
    r = np.asarray(r, dtype=float)
    return _legendre_cosh_dr(nu, r.ravel()).reshape(r.shape)


def assoc_legendre_P1_dr(nu, r):
    """``d/dr [P^1_nu(cosh r)]`` for ``r > 0``.

    ``P^1_nu(cosh r)`` is the radial part of the angular-frequency-one
    eigenfunction on a disk; its derivative vanishing at ``r = R`` is the
    Neumann condition.  Uses the radial equation
    ``J'' = -coth(r) J' - mu J``.
    """
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr <= 0):
        raise SpecialFunctionError("assoc_legendre_P1_dr requires r > 0")
    rr = r_arr.ravel()
    mu = _mu_of_degree(nu)
    val = -_legendre_cosh_dr(nu, rr) / np.tanh(rr) - mu * _legendre_cosh(nu, rr)
    val = val.reshape(r_arr.shape)
    return float(val) if val.ndim == 0 else val


@dataclass(frozen=True)
class RadialEigenfunction:
    """``J_{p, mu}``: radial solution of ``-Delta J = mu J`` with ``J(p) = 1``."""

    degree: DegreeMap
    basepoint: DiskPoint = DiskPoint(0.0, 0.0)

    @classmethod
    def from_mu(cls, mu: float, basepoint=None) -> "RadialEigenfunction":
        bp = DiskPoint(0.0, 0.0) if basepoint is None else basepoint
        if not isinstance(bp, DiskPoint):
            bp = DiskPoint.from_complex(as_complex(bp))
        return cls(DegreeMap(mu), bp)

    @property
    def mu(self) -> float:
        return self.degree.mu

    def _nu(self):
        return self.degree.nu

    def value(self, r):
        return eval_J(self, r)

    def dr(self, r):
        return eval_J_dr(self, r)

    def at_points(self, z):
        """Evaluate at model points (complex array)."""
        r = distance_array(self.basepoint.z, np.asarray(z))
        return eval_J(self, r)


def eval_J(f: RadialEigenfunction, r):
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0):
        raise SpecialFunctionError("r must be non-negative")
    val = _legendre_cosh(f._nu(), r_arr.ravel()).reshape(r_arr.shape)
    return float(val) if val.ndim == 0 else val


def eval_J_dr(f: RadialEigenfunction, r):
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0):
        raise SpecialFunctionError("r must be non-negative")
    val = _legendre_cosh_dr(f._nu(), r_arr.ravel()).reshape(r_arr.shape)
    return float(val) if val.ndim == 0 else val


def radial_ode_solution(mu: float, r, r_start: float = 1e-3):
    """Integrate ``J'' + coth(r) J' + mu J = 0`` with ``J(0) = 1, J'(0) = 0``.

    Independent of the Legendre evaluation; starts from the Taylor expansion
    ``1 - mu r^2/4 + mu (2/3 + mu) r^4 / 64`` to step over the singular point.
    Returns ``(J, J')`` on the sorted grid ``r``.
    """
    from scipy.integrate import solve_ivp

    r = np.asarray(r, dtype=float)
    a2 = -mu / 4.0
    a4 = mu * (2.0 / 3.0 + mu) / 64.0
    j0 = 1.0 + a2 * r_start**2 + a4 * r_start**4
    dj0 = 2 * a2 * r_start + 4 * a4 * r_start**3

    def rhs(x, y):
        return [y[1], -y[1] / np.tanh(x) - mu * y[0]]

    inside = r >= r_start
    J = np.empty_like(r)
    dJ = np.empty_like(r)
    J[~inside] = 1.0 + a2 * r[~inside] ** 2 + a4 * r[~inside] ** 4
    dJ[~inside] = 2 * a2 * r[~inside] + 4 * a4 * r[~inside] ** 3
    if np.any(inside):
        sol = solve_ivp(rhs, (r_start, float(r[inside].max())), [j0, dj0], method="DOP853",
                        t_eval=r[inside], rtol=1e-13, atol=1e-15)
        J[inside] = sol.y[0]
        dJ[inside] = sol.y[1]
    return J, dJ


def _scan_bracket(fn, grid):
    prev_x, prev_v = grid[0], fn(grid[0])
    for x in grid[1:]:
        v = fn(x)
        if prev_v == 0.0:
            return prev_x, prev_x
        if np.sign(v) != np.sign(prev_v):
            return prev_x, x
        prev_x, prev_v = x, v
    return None


def threshold_radius(tol: float = 1e-10, r_max: float = 20.0, step: float = 0.1) -> float:
    """Radius of the hyperbolic disk whose second Neumann eigenvalue is 1/4.

    Smallest ``r > 0`` where ``d/dr P^1_{-1/2}(cosh r)`` vanishes.
    """
    def fn(r):
        return assoc_legendre_P1_dr(-0.5, r)

    grid = np.arange(1, int(round(r_max / step)) + 1) * step
    values = assoc_legendre_P1_dr(-0.5, grid)
    change = np.nonzero(np.sign(values[1:]) != np.sign(values[:-1]))[0]
    if len(change) == 0:
        raise RootNotFoundError(f"no sign change of d/dr P^1_(-1/2)(cosh r) on (0, {r_max}]")
    i = change[0]
    return brentq(fn, grid[i], grid[i + 1], xtol=tol, rtol=4 * np.finfo(float).eps)


def disk_area(r) -> float:
    """Area ``2 pi (cosh r - 1)`` of a hyperbolic disk of radius ``r``."""
    return 2.0 * math.pi * (math.cosh(r) - 1.0)


def disk_radius_for_area(area: float) -> float:
    return math.acosh(1.0 + area / (2.0 * math.pi))


def threshold_area(tol: float = 1e-10) -> float:
    return disk_area(threshold_radius(tol))


def neumann_m1_condition(mu: float, R: float) -> float:
    """Value whose zeros in ``mu`` are the m = 1 Neumann eigenvalues of the disk of radius R."""
    return assoc_legendre_P1_dr(DegreeMap(mu).nu, R)


def disk_mu2(R: float, tol: float = 1e-12, log_step: float = 0.1,
             mu_min: float = 1e-13, mu_max: float = 1e9) -> float:
    """Second Neumann eigenvalue of the hyperbolic disk of radius ``R``.

    Scans ``log(mu)`` upward from ``mu_min`` for the first sign change of the
    m = 1 Neumann condition, then refines with Brent's method.
    """
    if not R > 0:
        raise SpecialFunctionError("radius must be positive")

    def fn(log_mu):
        return neumann_m1_condition(math.exp(log_mu), R)

    lo = math.log(mu_min)
    hi_lim = math.log(mu_max)
    v_lo = fn(lo)
    x = lo
    while x < hi_lim:
        x_next = x + log_step
        v_next = fn(x_next)
        if v_next == 0.0:
            return math.exp(x_next)
        if np.sign(v_next) != np.sign(v_lo):
            a, b = math.exp(x), math.exp(x_next)
            return brentq(lambda m: neumann_m1_condition(m, R), a, b,
                          xtol=tol * a, rtol=4 * np.finfo(float).eps)
        x, v_lo = x_next, v_next
    raise RootNotFoundError(
        f"no m=1 Neumann eigenvalue found for R={R} in mu in [{mu_min:g}, {mu_max:g}]"
    )
