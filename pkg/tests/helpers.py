"""Random small instances shared by the unit and acceptance tests."""

import numpy as np

from schnull.filtration import AdaptedField, Tree
from schnull.grid import Grid
from schnull.hum import CostWeights, LQProblem
from schnull.weights import WeightEvaluator, WeightParams

G0 = (0.3, 0.7)


def practical_evaluator(T=0.5, sigma=4.0):
    return WeightEvaluator.build(WeightParams(T=T, scaling="practical", sigma_override=sigma), G0)


def node_field(tree, n, rng, scale=1.0):
    return AdaptedField([scale * rng.standard_normal((tree.level_size(k), n)) for k in range(tree.n_intervals)])


def substep_field(tree, n, rng, scale=1.0):
    S = tree.substeps
    return AdaptedField([scale * rng.standard_normal((tree.level_size(k), S, n)) for k in range(tree.n_intervals)])


def random_problem(rng, N=8, depth=1, S=2, bc="clamped", eps=1e-2, cost="full", ev=None):
    ev = ev or practical_evaluator()
    weights = CostWeights.full() if cost == "full" else CostWeights.state_only()
    return LQProblem(Grid(N, bc), Tree(depth, ev.params.T, S), ev, G0, eps, weights)


def random_data(prob, rng):
    """(y0, phi, K) with every part nonzero so both controls are active."""
    g, t = prob.grid, prob.tree
    return rng.standard_normal(g.n), substep_field(t, g.n, rng), node_field(t, g.n, rng)


def gradient_fd_error(prob, rng, y0, phi, K, step=1e-3):
    """Relative gap between <grad J, d> and a central difference of J along d."""
    x = rng.standard_normal(prob.size) * prob.mask
    d = rng.standard_normal(prob.size) * prob.mask
    J = lambda z: prob.evaluate(z, y0, phi, K)[0]["total"]  # noqa: E731
    g = prob.evaluate(x, y0, phi, K)[1]
    ana = prob.inner(g, d)
    fd = (J(x + step * d) - J(x - step * d)) / (2 * step)
    return abs(ana - fd) / max(abs(ana), abs(fd))
