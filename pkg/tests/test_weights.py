import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from schnull.weights import (
    LogSum,
    WeightError,
    WeightEvaluator,
    WeightParams,
    check_invariants,
    gamma,
    gamma_derivatives,
    glue_check_fd,
    glue_jumps,
    log_gamma,
    logsum_from_arrays,
    make_beta,
    weighted_form,
)


@pytest.mark.parametrize(
    "kw",
    [
        dict(lam=0.5),
        dict(mu=1.5),
        dict(m=0.9),
        dict(T=0.0),
        dict(T=1.0),
        dict(eps_shift=-0.1),
        dict(T=0.4, eps_shift=0.1),
        dict(scaling="other"),
        dict(sigma_override=0.0),
        dict(ell_magnitude=0.0),
    ],
)
def test_params_reject_out_of_range(kw):
    with pytest.raises(WeightError):
        WeightParams(**kw)


def test_closed_form_sigma():
    p = WeightParams(lam=2, mu=2, m=1)
    assert p.sigma == pytest.approx(8 * 16 * math.exp(48))
    assert p.sigma_mode == "closed_form"
    assert WeightParams(sigma_override=4.0).sigma_mode == "override"


def test_gamma_plateau_and_blowup():
    p = WeightParams(T=0.5, sigma_override=4.0)
    t = np.linspace(p.T / 4, p.T / 2, 50, endpoint=False)
    assert np.all(gamma(t, p) == 1.0)
    assert gamma(0.0, p) == pytest.approx(2.0)
    near = p.T - np.logspace(-2, -6, 5)
    assert np.all(np.diff(gamma(near, p)) > 0)
    assert gamma(near[-1], p) > 1e5
    with pytest.raises(WeightError):
        gamma(p.T, p)
    with pytest.raises(WeightError):
        gamma(-0.1, p)


def test_gamma_equals_power_law_on_last_quarter():
    p = WeightParams(T=0.5, m=2, sigma_override=4.0)
    t = np.linspace(3 * p.T / 4, p.T * 0.99, 20)
    assert np.allclose(gamma(t, p), (p.T - t) ** -p.m)


@given(st.floats(0.01, 0.99), st.floats(1.0, 3.0), st.floats(0.02, 0.98))
def test_gamma_derivatives_match_central_differences(T, m, frac):
    p = WeightParams(T=T, m=m, sigma_override=4.0)
    L = T / 4
    # stay clear of the knots, where one-sided pieces differ
    t0 = T * 0.98 * frac
    if min(abs(t0 - k * L) for k in (1, 2, 3)) < 0.02 * L:
        return
    h = 1e-4 * L
    g, g1, g2 = gamma_derivatives(np.array([t0]), p)
    gp, gm = gamma(t0 + h, p), gamma(t0 - h, p)
    scale = max(abs(g[0]), 1.0)
    assert abs((gp - gm) / (2 * h) - g1[0]) * L <= 1e-6 * max(scale, abs(g1[0]) * L)
    assert abs((gp - 2 * g[0] + gm) / h**2 - g2[0]) * L**2 <= 1e-4 * max(scale, abs(g2[0]) * L**2)


@pytest.mark.parametrize("T", [0.05, 0.2, 0.5, 0.95])
@pytest.mark.parametrize("m", [1, 2.5])
def test_gluing_is_c2(T, m):
    p = WeightParams(T=T, m=m, sigma_override=4.0)
    assert max(max(v) for v in glue_jumps(p).values()) < 1e-12
    assert max(max(v) for v in glue_check_fd(p).values()) < 1e-6


def test_fd_gluing_check_detects_kinks():
    p = WeightParams(T=0.5, sigma_override=4.0)
    L = p.T / 4
    slope_kink = lambda t: log_gamma(t, p) + 1e-4 * np.maximum(t - 3 * L, 0) / L
    curv_kink = lambda t: log_gamma(t, p) + 1e-4 * np.maximum(t - 2 * L, 0) ** 2 / L**2
    assert glue_check_fd(p, log_fn=slope_kink)[3 * L][0] == pytest.approx(1e-4, rel=1e-2)
    assert glue_check_fd(p, log_fn=curv_kink)[2 * L][1] == pytest.approx(2e-4, rel=1e-2)


def test_sigma_two_glues_only_c1():
    # z^sigma has a second-derivative jump at T/4 unless sigma > 2
    p = WeightParams(T=0.5, sigma_override=2.0)
    j = glue_jumps(p)[p.T / 4]
    assert j[0] < 1e-14 and j[1] < 1e-14 and j[2] > 1e-3


def test_shifted_gamma():
    p = WeightParams(T=0.5, sigma_override=4.0, eps_shift=0.05)
    t = np.linspace(0, p.T, 401)
    ge = gamma(t, p, shifted=True)
    assert np.all(np.isfinite(ge))
    assert ge.max() <= gamma(p.T - p.eps_shift, p) * (1 + 1e-12)
    early = t < p.T / 2
    assert np.array_equal(ge[early], gamma(t[early], p))
    plateau = (t >= p.T / 2) & (t < p.T / 2 + p.eps_shift)
    assert np.all(ge[plateau] == 1.0)
    with pytest.raises(WeightError):
        gamma(p.T, WeightParams(T=0.5), shifted=True)


def test_beta_profile():
    prof = make_beta((0.3, 0.7), (0.4, 0.6))
    x = np.linspace(0, 1, 1001)
    b = prof.beta(x)
    assert abs(b[0]) < 1e-15 and abs(b[-1]) < 1e-15
    assert b.max() == pytest.approx(1.0, abs=1e-6)
    assert prof.beta(prof.x0) == pytest.approx(1.0)
    h = 1e-5
    for k in (1, 2, 3):
        fd = (prof.derivative(x[1:-1] + h, k - 1) - prof.derivative(x[1:-1] - h, k - 1)) / (2 * h)
        assert np.allclose(fd, prof.derivative(x[1:-1], k), rtol=1e-6, atol=1e-6)
    with pytest.raises(WeightError):
        make_beta((0.3, 0.7), (0.2, 0.6))


@pytest.mark.parametrize("scaling", ["exact", "practical"])
def test_invariants_default(scaling):
    ev = WeightEvaluator.build(WeightParams(scaling=scaling, eps_shift=0.05))
    bad = {k: v for k, v in check_invariants(ev).items() if v > 0}
    assert not bad


def test_alpha_scaled_consistent_with_full_alpha():
    p = WeightParams(lam=1, mu=2, m=1, scaling="exact")
    ev = WeightEvaluator.build(p)
    x = np.linspace(0, 1, 11)
    assert np.allclose(ev.alpha_scaled(x), ev.alpha(x), rtol=1e-12)
    assert np.all(ev.alpha(x) < 0)


def test_practical_scaling_bounds_ell(practical_ev):
    t = np.linspace(0, 0.49, 50)
    ell = practical_ev.ell(t, practical_ev.profile.beta(np.linspace(0, 1, 5)))
    assert np.all(ell < 0)
    assert np.abs(ell[t < 0.375]).max() < 1e-1


def test_exact_weights_overflow_float64(exact_ev):
    with pytest.raises(WeightError):
        exact_ev.weight(np.array([0.3]), np.array([0.5]))


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=8), st.lists(st.floats(-5, 5), min_size=1, max_size=8))
def test_logsum_combine_matches_direct_sum(majors, minors):
    k = min(len(majors), len(minors))
    parts = [LogSum(a, b) for a, b in zip(majors[:k], minors[:k])]
    direct = math.log(sum(math.exp(a + b) for a, b in zip(majors[:k], minors[:k])))
    assert LogSum.combine(parts).log_value == pytest.approx(direct, rel=1e-12, abs=1e-12)


def test_logsum_zero_rules():
    z = LogSum.zero()
    assert LogSum.combine([z, z]).is_zero
    assert LogSum(1.0, 0.0) - z == math.inf
    assert z - LogSum(1.0, 0.0) == -math.inf
    assert math.isnan(z - z)
    assert logsum_from_arrays(np.zeros(3), np.zeros(3), np.zeros(3)).is_zero


def test_logsum_survives_exact_magnitudes():
    # exp(1e25) is not representable; the difference of two such sums is
    big = np.full(2, -1e25)
    a = logsum_from_arrays(big, np.array([0.0, 3.0]), np.ones(2))
    b = logsum_from_arrays(big[:1], np.zeros(1), np.ones(1))
    assert a.major == -1e25
    assert a - b == pytest.approx(math.log(1 + math.exp(3.0)))


def test_weighted_form_scaling(practical_ev):
    rng = np.random.default_rng(1)
    x = np.linspace(0.05, 0.95, 19)
    v = rng.standard_normal((4, x.size))
    t = np.array([0.0, 0.1, 0.1, 0.3])
    m = np.full(4, 0.25)
    a = weighted_form(v, t, m, x, 0.05, practical_ev, k=3, c_log=1.0)
    b = weighted_form(3 * v, t, m, x, 0.05, practical_ev, k=3, c_log=1.0)
    assert b - a == pytest.approx(2 * math.log(3))
    w = practical_ev.weight(t, x, k=3, c_log=1.0)
    direct = float(np.sum(w * v**2) * 0.05 * 0.25)
    assert a.log_value == pytest.approx(math.log(direct), rel=1e-12)
    with pytest.raises(WeightError):
        weighted_form(v, t, m, x, 0.05, practical_ev, region=(0.96, 0.99))
