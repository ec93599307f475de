import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surfns import dual


def test_first_derivatives():
    val, (dx, dy) = dual.partials(lambda x, y: x * x * y + 3.0 * y, 2.0, 5.0)
    assert val == pytest.approx(35.0)
    assert dx == pytest.approx(20.0) and dy == pytest.approx(7.0)


def test_quotient_and_sqrt():
    _, (d,) = dual.partials(lambda x: 1.0 / dual.sqrt(x), 4.0)
    assert d == pytest.approx(-0.5 * 4.0**-1.5)
    _, (d,) = dual.partials(lambda x: (x**3) / (1.0 + x), 2.0)
    assert d == pytest.approx((3 * 4 * 3 - 8) / 9)


def test_nested_second_derivative():
    def first(x, y):
        _, d = dual.partials(lambda a, b: a * a * a * b * b, x, y)
        return d

    _, dd = dual.partials(first, 1.5, 2.0)
    # d/dx of (3 x^2 y^2, 2 x^3 y) and d/dy of the same
    assert dd[0][0] == pytest.approx(6 * 1.5 * 4.0)
    assert dd[0][1] == pytest.approx(6 * 1.5**2 * 2.0)
    assert dd[1][0] == pytest.approx(6 * 1.5**2 * 2.0)
    assert dd[1][1] == pytest.approx(2 * 1.5**3)


def test_no_perturbation_confusion():
    # d/dx [ x * d/dy (x + y) ] = 1, the classic nesting pitfall
    def g(x):
        _, (d,) = dual.partials(lambda y: x + y, 3.0)
        return x * d

    _, (d,) = dual.partials(g, 2.0)
    assert d == pytest.approx(1.0)


def test_vectorized_arguments():
    x = np.linspace(0.5, 2.0, 7)
    _, (d,) = dual.partials(lambda a: a * a - 2.0 * a, x)
    np.testing.assert_allclose(d, 2 * x - 2)


def test_constant_output_has_zero_tangent():
    _, (d,) = dual.partials(lambda x: 4.0, 1.0)
    assert d == 0.0


def test_non_integer_power_rejected():
    with pytest.raises(TypeError):
        dual.partials(lambda x: x**0.5, 1.0)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.3, 3.0), st.floats(-2.0, 2.0), st.floats(-2.0, 2.0))
def test_matches_central_differences(x, y, z):
    def f(a, b, c):
        r = dual.sqrt(a * a + b * b + c * c)
        return (a * b - c) / r + a**3 * c

    def fn(a, b, c):
        return (a * b - c) / np.sqrt(a * a + b * b + c * c) + a**3 * c

    _, d = dual.partials(f, x, y, z)
    h = 1e-6
    p = np.array([x, y, z])
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        fd = (fn(*(p + e)) - fn(*(p - e))) / (2 * h)
        assert d[k] == pytest.approx(fd, rel=1e-7, abs=1e-7)
