"""Symmetric quadrature rules on triangles (Dunavant).

Rules are returned as barycentric points ``(q, 3)`` and weights summing to 1,
so an integral over a triangle of area ``A`` is ``A * sum(w * f(points))``.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np


def _orbit3(a: float):
    b = 1.0 - 2.0 * a
    return [(a, a, b), (a, b, a), (b, a, a)]


def _orbit6(a: float, b: float):
    c = 1.0 - a - b
    return [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]


@lru_cache(maxsize=None)
def triangle_rule(degree: int):
    if degree <= 1:
        pts, w = [(1 / 3, 1 / 3, 1 / 3)], [1.0]
    elif degree == 2:
        pts, w = _orbit3(1 / 6), [1 / 3] * 3
    elif degree <= 4:
        pts = _orbit3(0.445948490915965) + _orbit3(0.091576213509771)
        w = [0.223381589678011] * 3 + [0.109951743655322] * 3
    elif degree <= 7:
        pts = ([(1 / 3, 1 / 3, 1 / 3)] + _orbit3(0.260345966079040) + _orbit3(0.065130102902216)
               + _orbit6(0.048690315425316, 0.312865496004874))
        w = ([-0.149570044467682] + [0.175615257433208] * 3 + [0.053347235608838] * 3
             + [0.077113760890257] * 6)
    else:
        raise ValueError(f"no triangle rule of degree {degree}")
    bary = np.array(pts, dtype=float)
    weights = np.array(w, dtype=float)
    weights /= weights.sum()
    bary.setflags(write=False)
    weights.setflags(write=False)
    return bary, weights
