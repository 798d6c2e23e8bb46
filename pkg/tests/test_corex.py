import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tempcov import corex, dlr, evaluation, synthetic
from tempcov.corex import (R_CLAMP, compute_moments, corex_objective, corex_value_and_grad,
                           covariance_estimate, fit_linear_corex, standardize_columns)
from tempcov.exceptions import ZeroVariance
from tempcov.tcorex import FitConfig


def naive_objective(w, blocks, noise):
    """Sample-by-sample recomputation of the objective with explicit loops.

    ``noise`` is the (n, m) latent noise in stacked block order, or None for
    the analytic unit-variance correction.
    """
    rows, weights = [], []
    for x, alpha in blocks:
        for row in x:
            rows.append(row)
            weights.append(alpha)
    total = sum(weights)
    weights = [a / total for a in weights]
    m, p = w.shape
    z = []
    for ell, row in enumerate(rows):
        zl = [sum(w[j, i] * row[i] for i in range(p)) for j in range(m)]
        if noise is not None:
            zl = [zl[j] + noise[ell, j] for j in range(m)]
        z.append(zl)
    ez2 = [sum(a * zl[j] ** 2 for a, zl in zip(weights, z)) for j in range(m)]
    if noise is None:
        ez2 = [v + 1.0 for v in ez2]
    exz = [[sum(a * row[i] * zl[j] for a, row, zl in zip(weights, rows, z)) for i in range(p)]
           for j in range(m)]
    total_obj = 0.5 * sum(np.log(v) for v in ez2)
    for i in range(p):
        R = [min(max(exz[j][i] / np.sqrt(ez2[j]), -R_CLAMP), R_CLAMP) for j in range(m)]
        B = [R[j] / (1 - R[j] ** 2) for j in range(m)]
        r = sum(R[j] * B[j] for j in range(m))
        coef = [B[j] / ((1 + r) * np.sqrt(ez2[j])) for j in range(m)]
        resid = 0.0
        for a, row, zl in zip(weights, rows, z):
            nu = sum(coef[j] * zl[j] for j in range(m))
            resid += a * (row[i] - nu) ** 2
        if noise is None:
            resid += sum(c * c for c in coef)
        total_obj += 0.5 * np.log(max(resid, corex.RESIDUAL_FLOOR))
    return total_obj


def _instance(seed, n=12, p=5, m=3, scale=0.7):
    rng = np.random.default_rng(seed)
    x, _, _ = standardize_columns(rng.standard_normal((n, p)))
    return x, scale * rng.standard_normal((m, p))


# -- moments -------------------------------------------------------------------


def test_moments_zero_weights_large_sample():
    rng = np.random.default_rng(0)
    x, _, _ = standardize_columns(rng.standard_normal((40000, 6)))
    stats = compute_moments(np.zeros((3, 6)), [(x, 1.0)], rng=1)
    assert np.max(np.abs(stats.exz)) < 0.03
    assert np.allclose(stats.ez2, 1.0, atol=0.03)
    assert np.max(np.abs(stats.r_corr)) < 0.03
    assert np.max(stats.r_vec) < 3e-3


def test_moments_noise_disabled_match_sample_statistics():
    x, w = _instance(1)
    stats = compute_moments(w, [(x, 1.0)], noise=False)
    z = x @ w.T
    assert np.allclose(stats.ez2, np.mean(z ** 2, axis=0) + 1.0, rtol=1e-13)
    assert np.allclose(stats.exz, (z.T @ x) / len(x), rtol=1e-12, atol=1e-14)


def test_zero_weight_block_is_excluded():
    x, w = _instance(2)
    other = np.random.default_rng(3).standard_normal((7, x.shape[1]))
    a = compute_moments(w, [(x, 1.0)], rng=5)
    b = compute_moments(w, [(x, 1.0), (other, 0.0)], rng=5)
    for name in ("exz", "ez2", "r_corr", "b", "r_vec"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_clamping_bounds_correlations():
    # huge weights make Z almost a copy of X, pushing |R| to 1
    rng = np.random.default_rng(4)
    x, _, _ = standardize_columns(rng.standard_normal((30, 3)))
    w = 1e6 * np.eye(3)
    stats = compute_moments(w, [(x, 1.0)], noise=False)
    assert np.max(np.abs(stats.r_corr)) <= R_CLAMP
    assert np.all(np.isfinite(stats.b))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(1, 4), st.integers(1, 6),
       st.floats(0.01, 5.0), st.booleans())
def test_moment_invariants(seed, m, p, scale, noise):
    x, w = _instance(seed, n=15, p=p, m=m, scale=scale)
    stats = compute_moments(w, [(x, 1.0)], rng=seed, noise=noise)
    assert np.max(np.abs(stats.r_corr)) <= R_CLAMP
    assert np.all(stats.r_vec >= 0)
    if not noise:
        assert np.all(stats.ez2 >= 1.0)


# -- objective -----------------------------------------------------------------


def test_objective_zero_weights_is_near_zero():
    rng = np.random.default_rng(6)
    x, _, _ = standardize_columns(rng.standard_normal((50000, 5)))
    assert abs(corex_objective(np.zeros((2, 5)), [(x, 1.0)], rng=7)) < 0.02


@pytest.mark.parametrize("c", [-3.0, -0.4, 0.0, 0.25, 1.0, 10.0])
def test_scalar_objective_closed_form(c):
    # p = m = 1, E[x^2] = 1, analytic noise: E[z^2] = 1 + c^2, R^2 = c^2/(1+c^2),
    # r = c^2, and the residual variance 1 - 2kc + k^2(1+c^2) with k = c/(1+c^2)
    # is 1/(1+c^2); the two log terms cancel.
    x = np.array([[-1.0], [1.0]])
    ez2 = 1.0 + c * c
    R = c / np.sqrt(ez2)
    B = R / (1.0 - R * R)
    r = R * B
    k = B / ((1.0 + r) * np.sqrt(ez2))
    resid = 1.0 - 2.0 * k * c + k * k * ez2
    scalar = 0.5 * np.log(resid) + 0.5 * np.log(ez2)
    got = corex_objective(np.array([[c]]), [(x, 1.0)], noise=False)
    assert got == pytest.approx(scalar, abs=1e-12)
    assert got == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("noise", [True, False])
def test_objective_matches_naive_loops(seed, noise):
    x, w = _instance(seed, n=9, p=4, m=2)
    other = np.random.default_rng(seed + 100).standard_normal((5, 4))
    blocks = [(x, 1.0), (other, 0.3)]
    z_noise = None
    if noise:
        z_noise = np.random.default_rng(seed).standard_normal((1, 14, 2))[0]
    got = corex_objective(w, blocks, rng=seed, noise=noise)
    assert got == pytest.approx(naive_objective(w, blocks, z_noise), abs=1e-10)


@pytest.mark.parametrize("seed", range(10))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    m, p = int(rng.integers(1, 4)), int(rng.integers(1, 9))
    x, w = _instance(seed, n=10, p=p, m=m)
    blocks = [(x, 1.0)]
    _, grad = corex_value_and_grad(w, blocks, rng=seed)
    for idx in np.ndindex(w.shape):
        h = 1e-4 * abs(w[idx]) + 1e-6
        wp, wm = w.copy(), w.copy()
        wp[idx] += h
        wm[idx] -= h
        fd = (corex_objective(wp, blocks, rng=seed) - corex_objective(wm, blocks, rng=seed)) / (2 * h)
        assert abs(grad[idx] - fd) <= 1e-4 * max(abs(fd), 1e-5)


# -- covariance estimate -------------------------------------------------------


def test_covariance_zero_b_is_identity():
    stats = compute_moments(np.zeros((2, 4)), [(np.eye(4), 1.0)], noise=False)
    cov = covariance_estimate(stats)
    assert np.array_equal(dlr.to_dense(cov), np.eye(4))


@pytest.mark.parametrize("rho", [-0.7, 0.1, 0.5, 0.9])
def test_covariance_single_factor_hand_algebra(rho):
    R = np.array([[rho, rho]])
    B = R / (1 - R * R)
    stats = corex.MomentStats(exz=R, ez2=np.ones(1), r_corr=R, b=B,
                              r_vec=np.sum(R * B, axis=0), ezz=np.eye(1), ex2=np.ones(2))
    dense = dlr.to_dense(covariance_estimate(stats))
    assert dense[0, 1] == pytest.approx(rho * rho, rel=1e-12)
    assert np.allclose(np.diag(dense), 1.0, atol=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_covariance_matches_loop_formula(seed):
    rng = np.random.default_rng(seed)
    x, _, _ = standardize_columns(rng.standard_normal((60, 32)))
    w = 0.15 * rng.standard_normal((4, 32))
    stats = compute_moments(w, [(x, 1.0)], noise=False)
    cov = covariance_estimate(stats)
    dense = dlr.to_dense(cov)
    B, r = stats.b, stats.r_vec
    for i in range(32):
        for k in range(32):
            if i != k:
                want = sum(B[j, i] * B[j, k] for j in range(4)) / ((1 + r[i]) * (1 + r[k]))
                assert abs(dense[i, k] - want) <= 1e-12
    unclamped = cov.d > corex.DIAG_FLOOR
    assert np.allclose(np.diag(dense)[unclamped], 1.0, atol=1e-12)


# -- standardization and fitting ----------------------------------------------


def test_standardize_columns_rejects_constant_column():
    x = np.column_stack([np.arange(5.0), np.ones(5)])
    with pytest.raises(ZeroVariance) as info:
        standardize_columns(x)
    assert info.value.column == 1


def test_fit_recovers_modular_covariance():
    model = synthetic.sample_modular_model(32, 4, seed=11)
    train = synthetic.sample_data(model, 1000, seed=12)
    test = synthetic.sample_data(model, 5000, seed=13)
    x, mean, std = standardize_columns(train)
    _, cov = fit_linear_corex(x, 4, seed=0)
    fitted = evaluation.gaussian_nll(cov.scale(std), test, mean)
    truth = evaluation.gaussian_nll(synthetic.model_covariance(model), test)
    assert fitted <= 1.05 * truth


@pytest.mark.parametrize("seed", range(3))
def test_fit_on_independent_noise_stays_near_identity(seed):
    rng = np.random.default_rng(seed)
    x, _, _ = standardize_columns(rng.standard_normal((2000, 16)))
    _, cov = fit_linear_corex(x, 2, seed=seed)
    dense = dlr.to_dense(cov)
    off = dense - np.diag(np.diag(dense))
    assert np.max(np.abs(off)) < 0.15


def test_fit_single_sample_is_finite():
    x = np.random.default_rng(0).standard_normal((1, 6))
    w, cov = fit_linear_corex(x, 2, FitConfig(m=2, steps_per_round=20), seed=0)
    assert np.all(np.isfinite(w))
    assert np.all(np.isfinite(cov.d)) and np.all(np.isfinite(cov.u))


def test_fit_is_deterministic():
    x, _ = _instance(8, n=30, p=6, m=2)
    config = FitConfig(m=2, steps_per_round=30)
    w1, _ = fit_linear_corex(x, 2, config, seed=3)
    w2, _ = fit_linear_corex(x, 2, config, seed=3)
    assert np.array_equal(w1, w2)
