import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import G0, gradient_fd_error, node_field, practical_evaluator, random_data, random_problem
from schnull.filtration import Tree
from schnull.grid import Grid
from schnull.hum import (
    CostWeights,
    LQProblem,
    duality_identity_check,
    eps_schedule,
    solve_lq,
    terminal_norm_sq,
)
from schnull.oracles import dense_kkt
from schnull.spde import solve_backward
from schnull.weights import WeightEvaluator, WeightParams


def test_problem_validation():
    ev = practical_evaluator()
    g = Grid(8)
    with pytest.raises(ValueError):
        LQProblem(g, Tree(1, 0.5), ev, G0, 0.0)
    with pytest.raises(ValueError):
        LQProblem(g, Tree(1, 0.4), ev, G0, 1e-2)
    with pytest.raises(ValueError):
        LQProblem(g, Tree(1, 0.5), ev, (0.51, 0.52), 1e-2)


def test_problem_shifts_weights_by_eps():
    prob = random_problem(np.random.default_rng(0), eps=0.05)
    assert prob.evaluator.params.eps_shift == 0.05


def test_zero_data_gives_zero_controls():
    prob = random_problem(np.random.default_rng(0))
    sol = solve_lq(prob, np.zeros(prob.grid.n))
    assert sol.J == 0.0 and sol.converged and sol.iterations == 0
    assert sol.u.max_abs() == 0.0 and sol.U.max_abs() == 0.0
    assert sol.terminal_norm_sq == 0.0


@given(st.integers(0, 10**6), st.sampled_from(["full", "state_only"]), st.integers(0, 2))
def test_adjoint_gradient_matches_central_difference(seed, cost, depth):
    rng = np.random.default_rng(seed)
    prob = random_problem(rng, depth=depth, cost=cost)
    assert gradient_fd_error(prob, rng, *random_data(prob, rng)) <= 1e-6


def test_gradient_outside_region_is_zero(rng):
    prob = random_problem(rng)
    g = prob.evaluate(rng.standard_normal(prob.size), *random_data(prob, rng))[1]
    assert np.all(g[prob.mask == 0] == 0)


def test_hessian_is_symmetric_positive(rng):
    prob = random_problem(rng, depth=2)
    a, b = (rng.standard_normal(prob.size) * prob.mask for _ in range(2))
    Ha, Hb = prob.hessian_apply(a), prob.hessian_apply(b)
    assert prob.inner(Ha, b) == pytest.approx(prob.inner(a, Hb), rel=1e-10)
    assert prob.inner(Ha, a) > 0


@pytest.mark.parametrize("bc", ["clamped", "simply_supported"])
@pytest.mark.parametrize("depth", [0, 1])
@pytest.mark.parametrize("cost", ["full", "state_only"])
def test_cg_matches_dense_kkt(bc, depth, cost):
    rng = np.random.default_rng(7)
    prob = random_problem(rng, depth=depth, S=2, bc=bc, cost=cost)
    y0, phi, K = random_data(prob, rng)
    sol = solve_lq(prob, y0, phi, K, tol=1e-14, max_iter=3000)
    ref = dense_kkt(prob, y0, phi, K)
    x = prob.pack(sol.u, sol.U)
    half = prob.size // 2
    for part in (slice(0, half), slice(half, None)):
        assert np.linalg.norm(x[part] - ref["controls"][part]) <= 1e-8 * np.linalg.norm(ref["controls"][part])
    assert np.linalg.norm(sol.y.terminal - ref["terminal"]) <= 1e-8 * np.linalg.norm(ref["terminal"])


def test_solution_satisfies_feedback_law(rng):
    prob = random_problem(rng, depth=2)
    sol = solve_lq(prob, *random_data(prob, rng), tol=1e-12, max_iter=2000)
    assert sol.converged
    assert sol.optimality_residual < 1e-6
    Js = [h["J"] for h in sol.history]
    assert all(b <= a + 1e-12 * Js[0] for a, b in zip(Js, Js[1:]))


def test_terminal_norm_is_expected_l2(rng):
    prob = random_problem(rng, depth=2)
    sol = solve_lq(prob, *random_data(prob, rng), tol=1e-6)
    yT = sol.y.terminal
    assert terminal_norm_sq(sol.y) == pytest.approx(np.mean(np.sum(yT**2, axis=1)) * prob.grid.h)


@given(st.integers(0, 10**6), st.sampled_from(["clamped", "simply_supported"]), st.integers(0, 3))
def test_duality_identity(seed, bc, depth):
    rng = np.random.default_rng(seed)
    prob = random_problem(rng, N=int(rng.integers(8, 17)), depth=depth, bc=bc, cost="state_only", eps=1e-1)
    g, t = prob.grid, prob.tree
    p0, p1, p2 = (node_field(t, g.n, rng) for _ in range(3))
    rT = rng.standard_normal((t.level_size(t.n_intervals), g.n))
    rsol = solve_backward(g, t, rT, p0, p1, p2)
    out = duality_identity_check(prob, rsol, p0, p1, p2, tol=1e-13, max_iter=2000)
    assert out["mismatch"] <= 1e-8


def test_eps_schedule_decreases_terminal_norm():
    ev = practical_evaluator()
    g, t = Grid(16), Tree(2, 0.5, 2)
    y0 = np.sin(np.pi * g.x) ** 2
    make = lambda e: LQProblem(g, t, ev, G0, e, CostWeights.full())  # noqa: E731
    levels = eps_schedule(make, y0, 0.1, 4, tol=1e-12, max_iter=2000)
    norms = [lv.terminal_norm_sq for lv in levels]
    assert all(b <= a for a, b in zip(norms, norms[1:]))
    assert [lv.eps for lv in levels] == [0.1, 0.05, 0.025, 0.0125]
    with pytest.raises(ValueError):
        eps_schedule(make, y0, 0.0, 2)
