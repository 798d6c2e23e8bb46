"""Adam and the annealed training loop shared by CorEx and T-CorEx."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionError, DivergenceError


@dataclass(frozen=True)
class AdamState:
    """First/second moment accumulators and the number of steps taken."""

    m1: np.ndarray
    m2: np.ndarray
    step: int = 0

    @classmethod
    def zeros_like(cls, w):
        return cls(np.zeros_like(w, dtype=np.float64), np.zeros_like(w, dtype=np.float64), 0)


def adam_step(w, grad, state, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update. Returns ``(new_w, new_state)``."""
    w = np.asarray(w, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != w.shape or state.m1.shape != w.shape:
        raise DimensionError(
            f"shape mismatch: weights {w.shape}, gradient {grad.shape}, "
            f"state {state.m1.shape}")
    step = state.step + 1
    m1 = beta1 * state.m1 + (1.0 - beta1) * grad
    m2 = beta2 * state.m2 + (1.0 - beta2) * grad * grad
    m1_hat = m1 / (1.0 - beta1 ** step)
    m2_hat = m2 / (1.0 - beta2 ** step)
    new_w = w - lr * m1_hat / (np.sqrt(m2_hat) + eps)
    return new_w, AdamState(m1, m2, step)


def check_gradient(grad):
    """Raise :class:`DivergenceError` naming the first non-finite entry.

    ``grad`` has shape (T, m, p); the location is reported as (t, j, i).
    """
    bad = ~np.isfinite(grad)
    if bad.any():
        t, j, i = (int(k) for k in np.argwhere(bad)[0])
        raise DivergenceError(
            f"non-finite gradient at period {t}, factor {j}, variable {i}",
            period=t)


def smoothed(values, window=10):
    values = np.asarray(values, dtype=np.float64)
    if len(values) < window:
        return values.copy()
    kernel = np.ones(window) / window
    return np.convolve(values, kernel, mode="valid")


def trend_violation(values, window=10):
    """Largest rise of the window-smoothed curve, as a fraction of its range.

    Zero means the smoothed curve never rose. The sampled objective is
    noisy, so fits record this diagnostic rather than abort on it.
    """
    s = smoothed(values, window)
    if len(s) < 2:
        return 0.0
    spread = float(np.max(s) - np.min(s))
    if spread == 0.0:
        return 0.0
    # rise of each point above the lowest point reached before it
    running_min = np.minimum.accumulate(s)
    return float(np.max(s - running_min) / spread)


def converged(history, window=10, tol=1e-6):
    """Relative change of the window-averaged objective below ``tol``."""
    if tol is None or tol <= 0 or len(history) < 2 * window:
        return False
    recent = np.mean(history[-window:])
    previous = np.mean(history[-2 * window:-window])
    return abs(recent - previous) <= tol * max(abs(previous), 1e-12)


def minimize_annealed(value_and_grad, w0, config, steps_per_round, rng, log=None):
    """Minimize a noisy objective with Adam over an annealing schedule.

    Parameters
    ----------
    value_and_grad : callable
        ``value_and_grad(w, eps, rng) -> (value, grad, per_period_values)``
        for weights of shape (T, m, p) and noise level ``eps``.
    w0 : (T, m, p) array
    config : FitConfig
        Supplies the schedule, Adam constants and convergence tolerance.
    steps_per_round : int
        Iteration budget for each annealing round.
    rng : numpy Generator
        Drives every noise draw, in order.
    log : dict, optional
        Filled with ``rounds``: one entry per round holding the noise level,
        the objective at every step, the smoothed-trend diagnostic and the
        wall-clock time.

    Returns
    -------
    w : (T, m, p) array
    """
    w = np.array(w0, dtype=np.float64)
    state = AdamState.zeros_like(w)
    rounds = [] if log is None else log.setdefault("rounds", [])
    for k, eps in enumerate(config.anneal_schedule):
        history = []
        start = time.perf_counter()
        for step in range(steps_per_round):
            value, grad, per_period = value_and_grad(w, eps, rng)
            if not np.isfinite(value):
                per_period = np.asarray(per_period, dtype=np.float64)
                bad = np.flatnonzero(~np.isfinite(per_period))
                period = int(bad[0]) if bad.size else None
                raise DivergenceError(
                    f"non-finite objective in annealing round {k} (eps={eps:g}), "
                    f"step {step}, period {period}",
                    round=k, step=step, period=period)
            try:
                check_gradient(grad)
            except DivergenceError as exc:
                raise DivergenceError(f"{exc} in annealing round {k}, step {step}",
                                      round=k, step=step, period=exc.period) from None
            history.append(value)
            w, state = adam_step(w, grad, state, lr=config.adam_lr,
                                 beta1=config.adam_beta1, beta2=config.adam_beta2,
                                 eps=config.adam_eps)
            if converged(history, tol=config.convergence_tol):
                break
        rounds.append({
            "eps": float(eps),
            "steps": len(history),
            "objective": [float(v) for v in history],
            "trend_violation": trend_violation(history),
            "seconds": time.perf_counter() - start,
        })
    return w
