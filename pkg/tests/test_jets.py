import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from schnull.jets import Jet

T, X = sp.symbols("t x")


def check(expr_sym, build, ot=2, ox=4):
    t = np.array([0.3, 0.7, 1.1])
    x = np.array([-0.4, 0.2, 0.9])
    j = build(Jet.var_t(t, ot, ox), Jet.var_x(x, ot, ox))
    f = sp.lambdify((T, X), expr_sym)
    for a in range(j.ot + 1):
        for b in range(j.ox + 1):
            d = sp.diff(expr_sym, T, a, X, b) if a or b else expr_sym
            ref = np.broadcast_to(sp.lambdify((T, X), d)(t, x), t.shape)
            assert np.allclose(j[a, b], ref, rtol=1e-11, atol=1e-11), (a, b)
    assert np.allclose(j.val, f(t, x))


def test_products_and_powers():
    check(T**2 * X**3 - 2 * X + 1, lambda t, x: t**2 * x**3 - 2 * x + 1)


def test_exp_sin_cos_compositions():
    check(sp.exp(T * X) * sp.sin(3 * X + T), lambda t, x: (t * x).exp() * (3 * x + t).sin())
    check(sp.cos(X**2) - sp.exp(-T), lambda t, x: (x * x).cos() - (-t).exp())


@given(st.lists(st.floats(-2, 2), min_size=3, max_size=3))
def test_polynomial_coefficients(c):
    a, b, d = c
    check(a * X**4 + b * T * X**2 + d * T**2, lambda t, x: a * x**4 + b * t * x**2 + d * t**2)


def test_derivative_and_truncation_orders():
    j = Jet.var_x(np.zeros(2), 1, 4) ** 3
    assert j.dx(2).ox == 2 and j.dt().ot == 0
    assert j.trunc(0, 1).data.shape[:2] == (1, 2)
    with pytest.raises(ValueError):
        j.dx(5)
    with pytest.raises(IndexError):
        j[2, 0]
    with pytest.raises(ValueError):
        j ** 0


def test_mixed_order_arithmetic_keeps_smaller_order():
    a = Jet.var_x(np.ones(1), 2, 4)
    b = Jet.var_x(np.ones(1), 1, 2)
    assert (a * b).ot == 1 and (a + b).ox == 2
