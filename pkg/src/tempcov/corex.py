"""Linear CorEx: moments, objective, gradient and covariance estimate.

Data are assumed standardized. Latent factors are ``Z = W x + noise`` with
unit-variance Gaussian noise, and the objective minimized is

    sum_i 1/2 log E[(X_i - nu_i)^2] + sum_j 1/2 log E[Z_j^2]

where ``nu_i`` is the conditional mean of ``X_i`` given ``Z`` under the
non-synergy constraint. All expectations are weighted sample averages, so
the same code serves a single data set, a pooled data set, and the
cross-period weighted estimates used by :mod:`tempcov.tcorex`.

The functions prefixed with ``batch_`` work on a stack of weight matrices
of shape (T, m, p) sharing one sample matrix ``x`` of shape (n, p); the
weights ``a`` of shape (T, n) say how much each sample counts for each
stack entry and each row of ``a`` sums to one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dlr import DiagLowRank
from .exceptions import DimensionError, ZeroVariance

R_CLAMP = 1.0 - 1e-6
RESIDUAL_FLOOR = 1e-12
DIAG_FLOOR = 1e-6


@dataclass(frozen=True)
class MomentStats:
    """Weighted moments of one CorEx model.

    Attributes
    ----------
    exz : (m, p) array
        ``E[X_i Z_j]`` stored as ``exz[j, i]``.
    ez2 : (m,) array
        ``E[Z_j^2]``.
    r_corr : (m, p) array
        Clamped correlations ``R[j, i] = E[X_i Z_j] / sqrt(E[Z_j^2])``.
    b : (m, p) array
        ``R / (1 - R^2)``.
    r_vec : (p,) array
        ``sum_j R[j, i] * b[j, i]``.
    ezz : (m, m) array
        Full second-moment matrix of Z (its diagonal is ``ez2``).
    ex2 : (p,) array
        ``E[X_i^2]``.
    """

    exz: np.ndarray
    ez2: np.ndarray
    r_corr: np.ndarray
    b: np.ndarray
    r_vec: np.ndarray
    ezz: np.ndarray
    ex2: np.ndarray


# -- batched kernels ---------------------------------------------------------


def batch_moments(w, x, a, z_noise=None):
    """Weighted moments for a stack of weight matrices.

    Parameters
    ----------
    w : (T, m, p) array
    x : (n, p) array
    a : (T, n) array of sample weights, rows summing to one.
    z_noise : (T, n, m) array or None
        Noise added to the latent factors. ``None`` uses the analytic
        expectation instead: the unit noise variance is added to the
        diagonal of ``E[Z Z^T]`` and ``E[X Z]`` is unaffected.

    Returns
    -------
    exz : (T, m, p), ezz : (T, m, m), ex2 : (T, p)
    """
    z = x @ w.transpose(0, 2, 1)
    if z_noise is not None:
        z = z + z_noise
    az = (a[:, :, None] * z).transpose(0, 2, 1)
    exz = az @ x
    ezz = az @ z
    ezz = 0.5 * (ezz + ezz.transpose(0, 2, 1))
    if z_noise is None:
        ezz = ezz + np.eye(w.shape[1])
    ex2 = a @ (x * x)
    return exz, ezz, ex2


def _derived(exz, ezz):
    ez2 = np.einsum("tjj->tj", ezz)
    s = np.sqrt(ez2)
    r0 = exz / s[:, :, None]
    r = np.clip(r0, -R_CLAMP, R_CLAMP)
    inv = 1.0 / (1.0 - r * r)
    b = r * inv
    rvec = np.sum(r * b, axis=1)
    return ez2, s, r0, r, inv, b, rvec


def batch_objective(exz, ezz, ex2, with_grad=False):
    """Per-entry CorEx objective from moments, optionally with its gradient.

    Returns ``obj`` of shape (T,), and when ``with_grad`` also the partial
    derivatives with respect to ``exz`` and ``ezz`` (treated as independent
    inputs; ``ez2`` is the diagonal of ``ezz``).
    """
    ez2, s, r0, r, inv, b, rvec = _derived(exz, ezz)
    denom = (1.0 + rvec)[:, None, :] * s[:, :, None]
    c = b / denom
    ezz_c = ezz @ c
    resid = (ex2 - 2.0 * np.sum(c * exz, axis=1)
             + np.sum(c * ezz_c, axis=1))
    floored = resid <= RESIDUAL_FLOOR
    resid_f = np.where(floored, RESIDUAL_FLOOR, resid)
    obj = 0.5 * np.sum(np.log(resid_f), axis=1) + 0.5 * np.sum(np.log(ez2), axis=1)
    if not with_grad:
        return obj

    g_v = np.where(floored, 0.0, 0.5 / resid_f)[:, None, :]
    g_exz = -2.0 * c * g_v
    g_c = g_v * (2.0 * ezz_c - 2.0 * exz)
    g_ezz = (c * g_v) @ c.transpose(0, 2, 1)

    g_b = g_c / denom
    g_cc = g_c * c
    g_rvec = -np.sum(g_cc, axis=1) / (1.0 + rvec)
    g_s = -np.sum(g_cc, axis=2) / s

    inv2 = inv * inv
    g_r = g_b * (1.0 + r * r) * inv2 + g_rvec[:, None, :] * 2.0 * r * inv2
    g_r0 = np.where(np.abs(r0) < R_CLAMP, g_r, 0.0)
    g_exz += g_r0 / s[:, :, None]
    g_s -= np.sum(g_r0 * r0, axis=2) / s
    g_ez2 = 0.5 / ez2 + g_s / (2.0 * s)
    idx = np.arange(ezz.shape[1])
    g_ezz[:, idx, idx] += g_ez2
    return obj, g_exz, g_ezz


def batch_value_and_grad(w, x, a, z_noise=None):
    """Objective of each stack entry and its gradient with respect to ``w``.

    The noise is held fixed, so the gradient is exact for the sampled
    objective. Cost is O(T n m p).
    """
    exz, ezz, ex2 = batch_moments(w, x, a, z_noise)
    obj, g_exz, g_ezz = batch_objective(exz, ezz, ex2, with_grad=True)
    # d exz / dW contracts against the weighted second moment of x
    y = x @ g_exz.transpose(0, 2, 1)
    grad = (a[:, :, None] * y).transpose(0, 2, 1) @ x
    grad += (g_ezz + g_ezz.transpose(0, 2, 1)) @ exz
    return obj, grad


def stats_from_moments(exz, ezz, ex2) -> MomentStats:
    ez2, _, _, r, _, b, rvec = _derived(exz[None], ezz[None])
    return MomentStats(exz=exz, ez2=ez2[0], r_corr=r[0], b=b[0], r_vec=rvec[0],
                       ezz=ezz, ex2=ex2)


# -- single-model API --------------------------------------------------------


def stack_blocks(blocks):
    """Concatenate ``[(samples, weight), ...]`` into data and per-row weights.

    Zero-weight blocks are dropped. Row weights are normalized to sum to one,
    i.e. divided by ``sum(weight * n_samples)``.
    """
    blocks = [(np.asarray(x, dtype=np.float64), float(alpha)) for x, alpha in blocks]
    if not blocks:
        raise ValueError("at least one data block is required")
    p = blocks[0][0].shape[1]
    for x, alpha in blocks:
        if x.ndim != 2 or x.shape[1] != p:
            raise DimensionError("all blocks must be 2-d with the same number of columns")
        if alpha < 0:
            raise ValueError("block weights must be non-negative")
        if not np.all(np.isfinite(x)):
            raise ValueError("data contain non-finite values")
    kept = [(x, alpha) for x, alpha in blocks if alpha > 0 and len(x)]
    total = sum(alpha * len(x) for x, alpha in kept)
    if total <= 0:
        raise ValueError("total block weight must be positive")
    x = np.vstack([x for x, _ in kept])
    a = np.concatenate([np.full(len(x_), alpha / total) for x_, alpha in kept])
    return x, a


def _as_rng(rng):
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def _latent_noise(rng, w, n, noise):
    if not noise:
        return None
    return _as_rng(rng).standard_normal((1, n, w.shape[0]))


def compute_moments(w, blocks, rng=None, noise=True) -> MomentStats:
    """Weighted moments of ``Z = W x + noise`` over ``blocks``.

    Parameters
    ----------
    w : (m, p) array
    blocks : list of (samples, weight)
    rng : Generator or seed, optional
        Source of the latent noise.
    noise : bool
        If False, the unit noise variance is accounted for analytically and
        the result is deterministic.
    """
    w = np.asarray(w, dtype=np.float64)
    x, a = stack_blocks(blocks)
    z_noise = _latent_noise(rng, w, len(x), noise)
    exz, ezz, ex2 = batch_moments(w[None], x, a[None], z_noise)
    return stats_from_moments(exz[0], ezz[0], ex2[0])


def corex_objective(w, blocks, rng=None, noise=True) -> float:
    """CorEx objective of weights ``w`` on weighted ``blocks``."""
    return corex_value_and_grad(w, blocks, rng, noise)[0]


def corex_value_and_grad(w, blocks, rng=None, noise=True):
    w = np.asarray(w, dtype=np.float64)
    x, a = stack_blocks(blocks)
    z_noise = _latent_noise(rng, w, len(x), noise)
    obj, grad = batch_value_and_grad(w[None], x, a[None], z_noise)
    return float(obj[0]), grad[0]


def covariance_estimate(stats: MomentStats) -> DiagLowRank:
    """Covariance implied by the fitted factors, as diagonal plus low rank.

    Off-diagonal entries are ``(B^T B)_{ik} / ((1 + r_i)(1 + r_k))`` and the
    diagonal is one, so ``u[j, i] = B[j, i] / (1 + r_i)`` and
    ``d_i = 1 - sum_j u[j, i]^2`` (floored at ``DIAG_FLOOR``).
    """
    b = np.asarray(stats.b, dtype=np.float64)
    rvec = np.asarray(stats.r_vec, dtype=np.float64)
    if not (np.all(np.isfinite(b)) and np.all(np.isfinite(rvec))):
        raise ValueError("moment statistics contain non-finite values")
    u = b / (1.0 + rvec)
    d = np.maximum(1.0 - np.sum(u * u, axis=0), DIAG_FLOOR)
    return DiagLowRank(d, u, 1)


def standardize_columns(x):
    """Column-standardize with the population convention. Returns (z, mean, std)."""
    x = np.asarray(x, dtype=np.float64)
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    bad = np.flatnonzero(~(std > 0))
    if len(x) > 1 and bad.size:
        raise ZeroVariance(f"column {int(bad[0])} has zero variance", column=int(bad[0]))
    std = np.where(std > 0, std, 1.0)
    return (x - mean) / std, mean, std


def fit_linear_corex(data, m, config=None, seed=None, w0=None, steps_per_round=None,
                     log=None):
    """Fit a static linear CorEx model.

    Parameters
    ----------
    data : (n, p) array
        Standardized samples.
    m : int
        Number of latent factors.
    config : FitConfig, optional
        Annealing schedule and Adam settings; ``m`` and ``seed`` here
        override the config.
    w0 : (m, p) array, optional
        Starting weights; random small weights by default.

    Returns
    -------
    w : (m, p) array
    cov : DiagLowRank
        Covariance estimate from noise-free moments of the fitted weights.
    """
    from .optim import minimize_annealed
    from .tcorex import FitConfig

    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2 or len(x) < 1:
        raise ValueError("data must be a non-empty 2-d array")
    if config is None:
        config = FitConfig(m=m)
    seed = config.seed if seed is None else seed
    steps = config.steps_per_round if steps_per_round is None else steps_per_round
    rng = np.random.default_rng(seed)
    if w0 is None:
        w0 = initial_weights(rng, m, x)
    a = np.full((1, len(x)), 1.0 / len(x))

    def value_and_grad(w, eps, step_rng):
        xt = x
        if eps > 0:
            xt = np.sqrt(1.0 - eps * eps) * x + eps * step_rng.standard_normal(x.shape)
        z_noise = step_rng.standard_normal((1, len(x), m))
        obj, grad = batch_value_and_grad(w, xt, a, z_noise)
        return float(obj[0]), grad, obj

    w = minimize_annealed(value_and_grad, np.asarray(w0, dtype=np.float64)[None],
                          config, steps, rng, log=log)[0]
    return w, covariance_estimate(compute_moments(w, [(x, 1.0)], noise=False))


def initial_weights(rng, m, x, scale=0.1):
    """Random weights scaled so each factor carries a small variance ``scale**2``."""
    w = rng.standard_normal((m, x.shape[1]))
    norm = np.sqrt(np.mean((x @ w.T) ** 2, axis=0)) if len(x) > 1 else None
    if norm is None or not np.all(norm > 0):
        norm = np.sqrt(np.sum(w * w, axis=1))
    return scale * w / norm[:, None]
