import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from schnull.grid import Grid

BCS = ["clamped", "simply_supported"]
# first clamped-clamped beam eigenvalue: root of cos(b) cosh(b) = 1
BEAM_ROOT = 4.730040744862704


@pytest.mark.parametrize("bad", [dict(N=3), dict(N=8.5), dict(N=8, bc="free")])
def test_rejects_bad_grids(bad):
    with pytest.raises(ValueError):
        Grid(**bad)


@pytest.mark.parametrize("bc", BCS)
def test_d4_symmetric_positive_definite(bc):
    A = Grid(16, bc).dense("D4")
    assert np.allclose(A, A.T)
    assert np.linalg.eigvalsh(A).min() > 0


@pytest.mark.parametrize("bc", BCS)
def test_summation_by_parts(bc, rng):
    g = Grid(20, bc)
    f, w = rng.standard_normal((2, g.n))
    lhs = g.h * f @ g.d4(w)
    Df, Dw = g.D2_full @ f, g.D2_full @ w
    assert lhs == pytest.approx(float(np.sum(g.trapezoid * Df * Dw)), rel=1e-12)


def test_simply_supported_sine_is_exact_eigenvector():
    g = Grid(32, "simply_supported")
    v = np.sin(np.pi * g.x)
    lam = (2 - 2 * np.cos(np.pi * g.h)) ** 2 / g.h**4
    assert np.allclose(g.d4(v), lam * v, rtol=1e-10, atol=1e-8)


def test_lowest_eigenvalues_converge_at_second_order():
    exact = {"clamped": BEAM_ROOT**4, "simply_supported": np.pi**4}
    for bc, ref in exact.items():
        errs = [abs(np.linalg.eigvalsh(Grid(N, bc).dense("D4")).min() - ref) for N in (32, 64, 128)]
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(orders > 1.9), (bc, errs)


@pytest.mark.parametrize("bc", BCS)
def test_stencils_exact_on_quadratics_in_interior(bc):
    g = Grid(16, bc)
    f = g.x**2
    assert np.allclose(g.d1(f)[1:-1], 2 * g.x[1:-1])
    assert np.allclose(g.d2(f)[1:-1], 2.0)
    q = g.x**4
    assert np.allclose(g.d4(q)[2:-2], 24.0)


@pytest.mark.parametrize("bc", BCS)
def test_transposes_are_adjoints(bc, rng):
    g = Grid(12, bc)
    f, w = rng.standard_normal((2, 3, g.n))
    assert np.allclose(g.inner(g.d1(f), w), g.inner(f, g.d1_t(w)))
    assert np.allclose(g.inner(g.d2(f), w), g.inner(f, g.d2_t(w)))


@given(st.sampled_from(BCS), st.integers(4, 40), st.floats(1e-8, 1.0))
def test_implicit_solve_matches_dense(bc, N, dt):
    g = Grid(N, bc)
    b = np.random.default_rng(N).standard_normal((2, 3, g.n))
    x = g.implicit_solve(b, dt)
    A = np.eye(g.n) + dt * g.dense("D4")
    assert x.shape == b.shape
    assert np.allclose(np.einsum("ij,abj->abi", A, x), b, rtol=1e-9, atol=1e-9)


def test_implicit_solve_rejects_nonpositive_dt():
    with pytest.raises(ValueError):
        Grid(8).implicit_solve(np.ones(7), 0.0)
