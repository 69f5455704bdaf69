"""Penalties and proximal operators against independent oracles."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from wakescan.prox import (
    PriorSpec,
    ScalingMatrixSpec,
    generalized_huber,
    gst_prox_lp,
    gst_threshold,
    huber,
    mc_penalty,
    nuclear_norm,
    nuclear_prox,
    soft_threshold,
    tv_norm,
    tv_prox,
    twist_gamma,
)
from wakescan.transform import RadonOperator

finite = st.floats(-50, 50, allow_nan=False)


def scalar_argmin(f, lo, hi):
    """Two-stage grid search for a scalar minimizer on ``[lo, hi]``."""
    xs = np.linspace(lo, hi, 20001)
    k = int(np.argmin(f(xs)))
    h = xs[1] - xs[0]
    xs = np.linspace(max(lo, xs[k] - h), min(hi, xs[k] + h), 20001)
    return xs[int(np.argmin(f(xs)))]


def gst_oracle(u, lam, p):
    a = abs(u)
    x = scalar_argmin(lambda x: 0.5 * (x - a) ** 2 + lam * x ** p, 0.0, a)
    if 0.5 * a * a <= 0.5 * (x - a) ** 2 + lam * x ** p:
        x = 0.0
    return math.copysign(x, u)


def tv_objective(z, f, lam):
    return 0.5 * np.sum((z - f) ** 2) + lam * tv_norm(z)


# soft threshold


def test_soft_threshold_examples():
    assert soft_threshold(3.0, 1.0) == 2.0
    assert soft_threshold(-0.5, 1.0) == 0.0
    u = np.random.default_rng(0).standard_normal(50)
    assert np.array_equal(soft_threshold(u, 0.0), u)
    with pytest.raises(ValueError):
        soft_threshold(1.0, -0.1)


def test_soft_threshold_is_the_exact_minimizer(rng):
    for _ in range(200):
        u, t = rng.uniform(-5, 5), rng.uniform(0, 3)
        res = minimize_scalar(lambda x: 0.5 * (x - u) ** 2 + t * abs(x), bounds=(-6, 6),
                              method="bounded", options={"xatol": 1e-10})
        assert soft_threshold(u, t) == pytest.approx(res.x, abs=1e-6)


@settings(max_examples=100, deadline=None)
@given(finite, finite, st.floats(0, 10))
def test_soft_threshold_nonexpansive(a, b, t):
    assert abs(soft_threshold(a, t) - soft_threshold(b, t)) <= abs(a - b) + 1e-12


# minimax concave penalty


def test_mc_penalty_examples():
    assert mc_penalty(0.0) == 0.0
    assert mc_penalty(1.0) == 0.5
    assert mc_penalty(2.0) == 0.5
    assert mc_penalty(-2.0) == 0.5


def test_mc_penalty_is_abs_minus_huber():
    t = np.linspace(-4, 4, 2001)
    np.testing.assert_allclose(mc_penalty(t), np.abs(t) - huber(t), atol=1e-15)


def test_mc_penalty_continuous_with_bounded_slope():
    t = np.linspace(-3, 3, 60001)
    v = mc_penalty(t)
    slope = np.abs(np.diff(v) / np.diff(t))
    assert slope.max() <= 1 + 1e-9
    assert np.abs(np.diff(v)).max() <= np.diff(t).max() + 1e-12


# generalized Huber function


def toy_operator(rng):
    """A two-column slice of the single-angle FBP of an 8x8 image."""
    op = RadonOperator(8, n_angles=1)
    idx = rng.choice(op.shape[0], size=2, replace=False)
    cols = []
    for i in idx:
        s = np.zeros(op.shape)
        s[i, 0] = 1.0
        cols.append(op.inverse_radon(s).ravel())
    F = np.stack(cols, axis=1)
    return F, (lambda v: F @ v), (lambda y: F.T @ y)


def huber_grid_oracle(t, F, b2):
    G = F.T @ F
    span = np.abs(t).max() + 1.0

    def cost(v1, v2):
        d1, d2 = t[0] - v1, t[1] - v2
        quad = G[0, 0] * d1 * d1 + 2 * G[0, 1] * d1 * d2 + G[1, 1] * d2 * d2
        return np.abs(v1) + np.abs(v2) + 0.5 * b2 * quad

    g = np.linspace(-span, span, 1201)
    v1, v2 = np.meshgrid(g, g, indexing="ij")
    c = cost(v1, v2)
    k = np.unravel_index(np.argmin(c), c.shape)
    h = g[1] - g[0]
    f1 = np.linspace(g[k[0]] - h, g[k[0]] + h, 801)
    f2 = np.linspace(g[k[1]] - h, g[k[1]] + h, 801)
    v1, v2 = np.meshgrid(f1, f2, indexing="ij")
    return float(cost(v1, v2).min())


def test_generalized_huber_trivial_cases(rng):
    op = RadonOperator(8, 4)
    fwd, adj = op.inverse_radon, op.inverse_radon_adjoint
    assert generalized_huber(np.zeros(op.shape), fwd, adj, ScalingMatrixSpec(0.6, 1.0)).value == 0.0
    t = rng.standard_normal(op.shape)
    assert generalized_huber(t, fwd, adj, ScalingMatrixSpec(0.0, 1.0)).value == 0.0


def test_generalized_huber_matches_grid_search(rng):
    for _ in range(10):
        F, fwd, adj = toy_operator(rng)
        scale = ScalingMatrixSpec(rng.uniform(0.3, 1.0), rng.uniform(0.002, 0.02))
        t = rng.uniform(-3, 3, size=2)
        res = generalized_huber(t, fwd, adj, scale, inner_iters=20000, tol=1e-14)
        assert res.value == pytest.approx(huber_grid_oracle(t, F, scale.factor ** 2), abs=1e-3)
        assert res.value <= np.abs(t).sum() + 1e-12


def test_gmc_penalty_nonnegative(rng):
    op = RadonOperator(8, 6)
    for _ in range(10):
        t = rng.standard_normal(op.shape) * rng.uniform(0.1, 5)
        res = generalized_huber(t, op.inverse_radon, op.inverse_radon_adjoint, ScalingMatrixSpec(0.7, 0.5))
        assert np.abs(t).sum() - res.value >= -1e-9


def test_generalized_huber_reports_nonconvergence(rng):
    op = RadonOperator(8, 6)
    t = rng.standard_normal(op.shape)
    res = generalized_huber(t, op.inverse_radon, op.inverse_radon_adjoint, ScalingMatrixSpec(0.9, 0.05),
                            inner_iters=2, tol=1e-15)
    assert not res.converged
    assert res.iterations == 2
    assert 0 <= res.value <= np.abs(t).sum()


# generalized soft thresholding


def test_gst_examples():
    assert gst_prox_lp(0.0, 1.0, 0.5) == 0.0
    assert gst_prox_lp(2.0, 1.0, 0.5) == pytest.approx(gst_oracle(2.0, 1.0, 0.5), abs=1e-4)
    u, lam, p = 60.0, 1.0, 0.5
    assert gst_prox_lp(u, lam, p) == pytest.approx(u - lam * p * u ** (p - 1), abs=1e-3)


@pytest.mark.parametrize("p", [0.2, 0.5, 0.8])
def test_gst_matches_brute_force(p, rng):
    for _ in range(100):
        lam, u = rng.uniform(0.1, 2), rng.uniform(-6, 6)
        assert gst_prox_lp(u, lam, p) == pytest.approx(gst_oracle(u, lam, p), abs=1e-4)


def test_gst_threshold_is_where_zero_stops_winning():
    lam, p = 0.8, 0.5
    tau = gst_threshold(lam, p)
    assert gst_prox_lp(tau * (1 - 1e-6), lam, p) == 0.0
    assert gst_prox_lp(tau * (1 + 1e-3), lam, p) > 0.0


@settings(max_examples=200, deadline=None)
@given(st.floats(-20, 20), st.floats(-20, 20), st.floats(0.05, 3), st.sampled_from([0.2, 0.5, 0.8]))
def test_gst_monotone_and_odd(a, b, lam, p):
    lo, hi = min(a, b), max(a, b)
    assert gst_prox_lp(lo, lam, p) <= gst_prox_lp(hi, lam, p) + 1e-12
    assert gst_prox_lp(-a, lam, p) == -gst_prox_lp(a, lam, p)


def test_gst_rejects_bad_p():
    for p in (0.0, 1.0, 1.5):
        with pytest.raises(ValueError):
            gst_prox_lp(1.0, 1.0, p)


# total variation


def test_tv_constant_and_zero_lambda(rng):
    const = np.full((12, 12), 3.7)
    np.testing.assert_allclose(tv_prox(const, 2.0), const, atol=1e-12)
    f = rng.standard_normal((10, 10))
    assert np.array_equal(tv_prox(f, 0.0), f)


def test_tv_step_image_against_longer_run():
    f = np.zeros((16, 16))
    f[:, 8:] = 1.0
    z = tv_prox(f, 0.5, inner_iters=200)
    ref = tv_prox(f, 0.5, inner_iters=2000, tol=0.0)
    a, b = tv_objective(z, f, 0.5), tv_objective(ref, f, 0.5)
    assert abs(a - b) <= 1e-3 * b
    # each row is a 1-D step whose exact optimum closes the jump by lam / 8 per side
    assert b == pytest.approx(7.5, rel=1e-6)


def test_tv_random_grids_against_longer_run(rng):
    for _ in range(20):
        n = int(rng.integers(6, 20))
        f = rng.standard_normal((n, n)) * rng.uniform(0.5, 3)
        lam = rng.uniform(0.1, 1.5)
        a = tv_objective(tv_prox(f, lam, inner_iters=200), f, lam)
        b = tv_objective(tv_prox(f, lam, inner_iters=2000, tol=0.0), f, lam)
        assert abs(a - b) <= 1e-3 * b


def test_tv_output_never_increases_tv(rng):
    for _ in range(20):
        f = rng.standard_normal((9, 11))
        assert tv_norm(tv_prox(f, rng.uniform(0.01, 2))) <= tv_norm(f) + 1e-9


def test_tv_nonexpansive(rng):
    for _ in range(10):
        a, b = rng.standard_normal((2, 10, 10))
        da = tv_prox(a, 0.4, inner_iters=2000, tol=0.0)
        db = tv_prox(b, 0.4, inner_iters=2000, tol=0.0)
        assert np.linalg.norm(da - db) <= np.linalg.norm(a - b) + 1e-4


# nuclear norm


def test_nuclear_examples(rng):
    np.testing.assert_allclose(nuclear_prox(np.diag([3.0, 1.0]), 2.0), np.diag([1.0, 0.0]), atol=1e-12)
    u = rng.standard_normal((5, 7))
    assert np.array_equal(nuclear_prox(u, 0.0), u)


def test_nuclear_local_optimality(rng):
    for _ in range(20):
        u = rng.standard_normal((6, 6))
        lam = 0.7
        z = nuclear_prox(u, lam)

        def obj(w):
            return 0.5 * np.sum((w - u) ** 2) + lam * nuclear_norm(w)

        best = obj(z)
        for _ in range(1000):
            pert = z + rng.standard_normal((6, 6)) * rng.choice([1e-4, 1e-2, 1e-1])
            assert best <= obj(pert) + 1e-12


def test_nuclear_norm_shrinks(rng):
    for _ in range(20):
        u = rng.standard_normal((7, 5))
        lam = rng.uniform(0.1, 1.5)
        z = nuclear_prox(u, lam)
        s = np.linalg.svd(u, compute_uv=False)
        survivors = int(np.sum(s > lam))
        assert nuclear_norm(z) <= nuclear_norm(u) - lam * survivors + 1e-9


def test_nuclear_nonexpansive(rng):
    for _ in range(20):
        a, b = rng.standard_normal((2, 6, 4))
        assert np.linalg.norm(nuclear_prox(a, 0.5) - nuclear_prox(b, 0.5)) <= np.linalg.norm(a - b) + 1e-9


# TwIST shrink/denoise operators


def test_twist_gamma_l1():
    spec = PriorSpec("l1", 1.0)
    assert not np.any(twist_gamma(np.zeros((4, 4)), spec))
    # soft(3, 1) = 2 and 2 / (2 + 1) * 3 = 2
    assert twist_gamma(3.0, spec) == pytest.approx(2.0)


def test_twist_gamma_passes_through_denoisers(rng):
    u = rng.standard_normal((8, 8))
    assert np.array_equal(twist_gamma(u, PriorSpec("tv", 0.3)), tv_prox(u, 0.3, 40))
    assert np.array_equal(twist_gamma(u, PriorSpec("nuclear", 0.3)), nuclear_prox(u, 0.3))


def test_twist_gamma_lp_uses_gst(rng):
    u = rng.standard_normal(20) * 3
    spec = PriorSpec("lp", 0.5, p=0.5)
    px = np.abs(gst_prox_lp(u, 0.5, 0.5))
    np.testing.assert_allclose(twist_gamma(u, spec), px / (px + 0.5) * u)


def test_twist_gamma_rejects_gmc():
    with pytest.raises(ValueError):
        twist_gamma(np.ones(3), PriorSpec("gmc", 1.0))


def test_prior_spec_validation():
    with pytest.raises(ValueError):
        PriorSpec("l1", 0.0)
    with pytest.raises(ValueError):
        PriorSpec("lp", 1.0)
    with pytest.raises(ValueError):
        PriorSpec("lp", 1.0, p=1.0)
    with pytest.raises(ValueError):
        PriorSpec("l1", 1.0, p=0.5)
    with pytest.raises(ValueError):
        PriorSpec("gmc", 1.0, gamma=1.5)
    with pytest.raises(ValueError):
        PriorSpec("tv", 1.0, gamma=0.5)
    assert PriorSpec("gmc", 1.0).gamma == 0.6
    assert ScalingMatrixSpec(0.6, 1.0).convex
    assert not ScalingMatrixSpec(1.2, 1.0).convex
