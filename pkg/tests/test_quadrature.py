import math

import numpy as np
import pytest

from cfop.quadrature import GAUSS_WEIGHTS, KRONROD_WEIGHTS, NODES, QuadratureError, gk15_intervals


def test_rule_integrates_polynomials():
    # Kronrod is exact to degree 22, the embedded Gauss rule to degree 13
    for deg in range(0, 23, 3):
        exact = (1 - (-1) ** (deg + 1)) / (deg + 1)
        assert KRONROD_WEIGHTS @ NODES**deg == pytest.approx(exact, abs=1e-14)
        if deg <= 13:
            assert GAUSS_WEIGHTS @ NODES**deg == pytest.approx(exact, abs=1e-14)


def test_known_integrals_per_owner():
    funcs = [np.exp, np.sin, lambda x: 1.0 / (1.0 + x * x)]
    exact = [math.e - 1.0, 1.0 - math.cos(2.0), math.atan(5.0) + math.atan(5.0)]
    a = np.array([0.0, 0.0, -5.0])
    b = np.array([1.0, 2.0, 5.0])

    def f(x, owner):
        out = np.empty_like(x)
        for j, g in enumerate(funcs):
            out[owner == j] = g(x[owner == j])
        return out

    val, err = gk15_intervals(f, np.arange(3), a, b, 3, tol=1e-12)
    np.testing.assert_allclose(val, exact, rtol=0, atol=1e-12)
    assert np.all(err <= 1e-12)


def test_pieces_sum_per_owner():
    # one owner split over three disjoint pieces, another left empty
    owner = np.array([0, 0, 0, 1])
    a = np.array([0.0, 1.0, 3.0, 2.0])
    b = np.array([1.0, 3.0, 4.0, 2.0])
    val, _ = gk15_intervals(lambda x, o: x**2, owner, a, b, 2)
    assert val[0] == pytest.approx(64.0 / 3.0, abs=1e-12)
    assert val[1] == 0.0


def test_steep_feature_is_resolved():
    # smooth step of width 1e-4 at x = 0.3
    w = 1e-4

    def f(x, owner):
        return 0.5 * (1 + np.tanh((x - 0.3) / w))

    val, _ = gk15_intervals(f, np.array([0]), np.array([0.0]), np.array([1.0]), 1, tol=1e-10)
    assert val[0] == pytest.approx(0.7, abs=1e-9)


def test_unresolvable_integrand_raises():
    with pytest.raises(QuadratureError) as info:
        gk15_intervals(lambda x, o: 1.0 / np.sqrt(np.abs(x - 0.123456789)), np.array([0]),
                       np.array([0.0]), np.array([1.0]), 1, tol=1e-14, max_rounds=5)
    assert info.value.achieved > 0
