import math

import numpy as np
import pytest

from hypspots.quadrature import triangle_rule


def monomial_exact(a, b):
    # integral of x^a y^b over the unit right triangle
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


@pytest.mark.parametrize("degree", [1, 2, 4, 7])
def test_exactness(degree):
    bary, w = triangle_rule(degree)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.allclose(bary.sum(axis=1), 1.0)
    x, y = bary[:, 1], bary[:, 2]
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            got = 0.5 * np.sum(w * x**a * y**b)
            assert got == pytest.approx(monomial_exact(a, b), rel=1e-12, abs=1e-15)


def test_degree4_not_exact_for_degree6():
    bary, w = triangle_rule(4)
    x = bary[:, 1]
    assert abs(0.5 * np.sum(w * x**6) - monomial_exact(6, 0)) > 1e-8


def test_point_counts():
    assert len(triangle_rule(4)[1]) == 6
    assert len(triangle_rule(7)[1]) == 13


def test_unsupported_degree():
    with pytest.raises(ValueError):
        triangle_rule(9)
