import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from schnull.filtration import AdaptedField, Tree, TreeTooLarge, tree_pairing
from schnull.oracles import path_expectation


@pytest.mark.parametrize("depth, nodes", [(0, 2), (1, 3), (3, 15), (6, 127)])
def test_node_counts(depth, nodes):
    assert Tree(depth, 0.5).node_count == nodes


def test_depth_zero_is_deterministic():
    t = Tree(0, 0.5, 4)
    assert not t.stochastic and t.n_intervals == 1 and t.dt == pytest.approx(0.125)
    assert np.all(t.brownian(1) == 0)
    with pytest.raises(ValueError):
        t.increment_diff(np.zeros((1, 3)), 0)


def test_invalid_trees():
    with pytest.raises(ValueError):
        Tree(-1, 0.5)
    with pytest.raises(ValueError):
        Tree(2, 0.5, substeps=0)
    with pytest.raises(ValueError):
        Tree(2, 0.0)
    with pytest.raises(TreeTooLarge):
        Tree(20, 0.5)
    assert Tree(20, 0.5, max_nodes=2**22).node_count == 2**21 - 1


@given(st.integers(1, 7), st.data())
def test_brownian_value_matches_level_arrays(depth, data):
    t = Tree(depth, 0.5)
    k = data.draw(st.integers(0, depth))
    j = data.draw(st.integers(0, t.level_size(k) - 1))
    assert t.brownian_value(k, j) == pytest.approx(t.brownian(k)[j])


@pytest.mark.parametrize("depth", [1, 4, 7])
def test_brownian_is_a_martingale_with_right_variance(depth):
    t = Tree(depth, 0.7)
    for k in range(depth):
        B, Bn = t.brownian(k), t.brownian(k + 1)
        assert np.allclose(t.cond_expectation(Bn, k), B)
        assert np.allclose(t.increment_diff(Bn, k), 1.0)
        assert np.allclose(Bn - B[t.parent_index(k)], math.sqrt(t.dt_noise) * t.sign(k))
    assert np.mean(t.brownian(depth) ** 2) == pytest.approx(t.T)


@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_tower_property(depth, seed):
    t = Tree(depth, 0.5)
    X = np.random.default_rng(seed).standard_normal((t.level_size(depth), 3))
    Y = X
    for k in range(depth - 1, -1, -1):
        Y = t.cond_expectation(Y, k)
    assert np.allclose(Y[0], path_expectation(t, X))
    assert np.allclose(t.expectation(X), path_expectation(t, X))


def test_adapted_field_algebra(rng):
    t = Tree(3, 0.5, 2)
    a = AdaptedField([rng.standard_normal((t.level_size(k), 2, 5)) for k in range(t.n_intervals)])
    b = a.map(np.sin)
    assert np.allclose((a + b - b).flat(), a.flat())
    assert np.allclose((2 * a).flat(), (a * 2.0).flat())
    assert np.allclose((-a).flat(), -a.flat())
    assert np.allclose((a * b).flat(), a.flat() * b.flat())
    back = a.unflat(a.flat())
    assert all(np.array_equal(x, y) for x, y in zip(back.levels, a.levels))
    assert a.max_abs() == pytest.approx(np.abs(a.flat()).max())
    c = a.copy()
    c.levels[0][:] = np.nan
    assert a.is_finite() and not c.is_finite()
    z = AdaptedField.zeros(t, (5,), leaves=True)
    assert [x.shape[0] for x in z.levels] == t.sizes


def test_from_function_uses_brownian_values():
    t = Tree(3, 0.5)
    f = AdaptedField.from_function(t, lambda k, B: B[:, None] * np.ones(2), leaves=True)
    assert np.allclose(f.levels[3][:, 0], t.brownian(3))


def test_tree_pairing_is_weighted_bilinear(rng):
    t = Tree(2, 0.5)
    a = AdaptedField([rng.standard_normal((t.level_size(k), 4)) for k in range(t.n_intervals)])
    b = a.map(np.cos)
    ref = sum(t.prob(k) * float(np.sum(x * y)) for k, (x, y) in enumerate(zip(a.levels, b.levels))) * 0.1 * 0.2
    assert tree_pairing(t, a, b, 0.1, 0.2) == pytest.approx(ref)
    assert tree_pairing(t, a, 3 * b, 0.1, 0.2) == pytest.approx(3 * ref)


def test_memory_estimate_counts_doubles():
    t = Tree(2, 0.5, 3)
    # levels 0, 1 hold 4 states per node; the leaf level one
    assert t.memory_estimate(10) == 8 * 10 * ((1 + 2) * 4 + 4)
