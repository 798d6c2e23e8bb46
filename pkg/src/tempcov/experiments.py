"""Grid search and timing drivers used by the command line and the demos."""

from __future__ import annotations

import itertools
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import evaluation, synthetic, tcorex
from .optim import AdamState, adam_step
from .tcorex import FitConfig

# hyperparameter grids of the synthetic benchmarks
SUDDEN_GRID = {
    "phi": ["l1"],
    "lambda": [0.0, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0],
    "beta": [1e-9, 0.1, 0.3, 0.4, 0.5, 0.6, 0.7],
}
SMOOTH_GRID = {
    "phi": ["l2"],
    "lambda": [0.0, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0, 300.0],
    "beta": [1e-9, 0.1, 0.3, 0.4, 0.5, 0.6, 0.7],
}


def default_grid(kind: str) -> dict:
    return {"sudden": SUDDEN_GRID, "smooth": SMOOTH_GRID}[kind]


def max_workers() -> int:
    try:
        return max(1, int(os.environ.get("TEMPCOV_THREADS", "1")))
    except ValueError:
        return 1


def grid_cells(grid: dict, base: FitConfig):
    """Expand a grid spec (keys ``lambda``, ``beta``, ``m``, ``phi``) into configs."""
    keys = {"lambda": "lam", "beta": "beta", "m": "m", "phi": "phi"}
    unknown = set(grid) - set(keys)
    if unknown:
        raise ValueError(f"unknown grid keys: {sorted(unknown)}")
    axes = []
    for key, attr in keys.items():
        values = grid.get(key, [getattr(base, attr)])
        if not values:
            raise ValueError(f"grid axis {key!r} is empty")
        axes.append([(attr, v) for v in values])
    return [base.replace(**dict(combo)) for combo in itertools.product(*axes)]


@dataclass
class CellResult:
    config: FitConfig
    val_nll: float
    model: tcorex.TCorexModel = None
    seconds: float = 0.0

    def to_json(self) -> dict:
        c = self.config
        return {"lambda": c.lam, "beta": c.beta, "m": c.m, "phi": c.phi,
                "val_nll": self.val_nll, "seconds": self.seconds}


def _run_cell(args):
    train, val, config = args
    start = time.perf_counter()
    model = tcorex.fit(train, config)
    val_nll = evaluation.nll(model, val).mean_nll
    return CellResult(config, val_nll, model, time.perf_counter() - start)


def grid_search(train, val, grid: dict, base: FitConfig, workers=None):
    """Fit every grid cell on ``train`` and score it on ``val``.

    Returns all :class:`CellResult` objects in grid order. Test data never
    enter this function.
    """
    cells = grid_cells(grid, base)
    workers = max_workers() if workers is None else workers
    jobs = [(train, val, c) for c in cells]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            return list(pool.map(_run_cell, jobs))
    return [_run_cell(job) for job in jobs]


def select(results, where=None) -> CellResult:
    """Cell with the lowest validation NLL, optionally among ``where(config)``."""
    pool = [r for r in results if where is None or where(r.config)]
    if not pool:
        raise ValueError("no grid cell satisfies the selection filter")
    return min(pool, key=lambda r: r.val_nll)


def time_steps(p, m=64, T=10, s=16, steps=10, seed=0, config=None):
    """Wall-clock seconds per T-CorEx optimizer step at dimension ``p``.

    Data come from a modular model with ``max(1, p // 16)`` latent factors.
    Returns ``(seconds_per_step, total_seconds)``.
    """
    m_true = max(1, p // 16)
    model = synthetic.sample_modular_model(p, m_true, seed)
    raw = tcorex.TemporalDataset(
        [synthetic.sample_data(model, s, [seed, t]) for t in range(T)])
    config = config or FitConfig(m=m, lam=0.1, beta=0.5, seed=seed)
    data = tcorex.standardize(raw, config.beta, config.weight_cutoff)
    problem = tcorex._Problem(data, config)
    rng = np.random.default_rng(seed)
    w = 0.01 * rng.standard_normal((T, m, p)) / np.sqrt(p)
    state = AdamState.zeros_like(w)
    problem.value_and_grad(w, 0.5, rng)  # warm-up
    start = time.perf_counter()
    for _ in range(steps):
        _, grad, _ = problem.value_and_grad(w, 0.5, rng)
        w, state = adam_step(w, grad, state, lr=config.adam_lr)
    total = time.perf_counter() - start
    return total / steps, total


def scaling_slope(ps, seconds) -> float:
    """Least-squares slope of log(seconds) against log(p)."""
    return float(np.polyfit(np.log(ps), np.log(seconds), 1)[0])
