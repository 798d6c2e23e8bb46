"""Synthetic data from modular latent factor models.

In a modular model every observed variable has exactly one latent parent:

    x_i = sigma_i * (rho_i * z[pi_i] + sqrt(1 - rho_i^2) * eps_i)

with independent standard normal ``z`` and ``eps``. Parent indices ``pi``
are 0-based here and 1-based in exported files.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .dlr import DiagLowRank
from .tcorex import TemporalDataset

N_VAL = 16
N_TEST = 1000


@dataclass(frozen=True)
class ModularModel:
    """Parent index, parent correlation and scale of each observed variable."""

    pi: np.ndarray
    rho: np.ndarray
    sigma: np.ndarray
    m: int

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=np.int64)
        rho = np.asarray(self.rho, dtype=np.float64)
        sigma = np.asarray(self.sigma, dtype=np.float64)
        if not (pi.shape == rho.shape == sigma.shape) or pi.ndim != 1:
            raise ValueError("pi, rho and sigma must be vectors of equal length")
        if np.any(np.abs(rho) >= 1):
            raise ValueError("correlations must satisfy |rho| < 1")
        if np.any(sigma <= 0):
            raise ValueError("scales must be positive")
        if np.any((pi < 0) | (pi >= self.m)):
            raise ValueError(f"parent indices must lie in [0, {self.m})")
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "sigma", sigma)

    @property
    def p(self) -> int:
        return len(self.pi)


def _seed_seq(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def rho_from_snr(snr, xi):
    """Correlation with the parent for a given signal-to-noise ratio."""
    snr = np.asarray(snr, dtype=np.float64)
    return np.sign(xi) * np.sqrt(snr / (snr + 1.0))


def sample_modular_model(p: int, m: int, seed=None) -> ModularModel:
    """Random model: uniform parents, sigma ~ U[1/4, 4], snr ~ U[0, 5]."""
    if p < 1 or m < 1:
        raise ValueError("p and m must be positive")
    rng = np.random.default_rng(seed)
    pi = rng.integers(0, m, size=p)
    sigma = rng.uniform(0.25, 4.0, size=p)
    snr = rng.uniform(0.0, 5.0, size=p)
    xi = rng.standard_normal(p)
    return ModularModel(pi, rho_from_snr(snr, xi), sigma, m)


def model_covariance(model: ModularModel) -> DiagLowRank:
    """Exact covariance: diagonal ``sigma^2 (1 - rho^2)`` plus one factor per latent."""
    load = model.sigma * model.rho
    u = np.zeros((model.m, model.p))
    u[model.pi, np.arange(model.p)] = load
    d = model.sigma ** 2 * (1.0 - model.rho ** 2)
    return DiagLowRank(d, u, 1)


def sample_data(model: ModularModel, n: int, seed=None) -> np.ndarray:
    """Draw ``n`` samples of the observed variables."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, model.m))
    eps = rng.standard_normal((n, model.p))
    return model.sigma * (model.rho * z[:, model.pi]
                          + np.sqrt(1.0 - model.rho ** 2) * eps)


@dataclass(frozen=True, eq=False)
class ScenarioDataset:
    """Train/validation/test blocks per period plus the generating truth."""

    train: List[np.ndarray]
    val: List[np.ndarray]
    test: List[np.ndarray]
    models: List[ModularModel]
    params: dict = field(default_factory=dict)

    @property
    def T(self) -> int:
        return len(self.train)

    @property
    def p(self) -> int:
        return self.train[0].shape[1]

    @property
    def truth(self) -> List[DiagLowRank]:
        return [model_covariance(mdl) for mdl in self.models]

    @property
    def labels(self) -> np.ndarray:
        """(T, p) parent indices, 0-based."""
        return np.stack([mdl.pi for mdl in self.models])

    def split(self, name: str) -> TemporalDataset:
        return TemporalDataset(getattr(self, name))


def _draw_splits(models, s, seed, n_val, n_test):
    seqs = _seed_seq(seed).spawn(len(models))
    train, val, test = [], [], []
    for mdl, seq in zip(models, seqs):
        a, b, c = seq.spawn(3)
        train.append(sample_data(mdl, s, a))
        val.append(sample_data(mdl, n_val, b))
        test.append(sample_data(mdl, n_test, c))
    return train, val, test


def sudden_change_dataset(p, m, s, T=10, seed=None, n_val=N_VAL, n_test=N_TEST):
    """First half of the periods from one model, second half from another."""
    if T < 2 or T % 2:
        raise ValueError("T must be even and at least 2")
    k1, k2, kd = _seed_seq(seed).spawn(3)
    first = sample_modular_model(p, m, k1)
    second = sample_modular_model(p, m, k2)
    models = [first] * (T // 2) + [second] * (T // 2)
    train, val, test = _draw_splits(models, s, kd, n_val, n_test)
    params = dict(kind="sudden", p=p, m=m, s=s, T=T, seed=seed,
                  n_val=n_val, n_test=n_test)
    return ScenarioDataset(train, val, test, models, params)


def interpolate_models(first: ModularModel, last: ModularModel, switch, T):
    """Models for periods 0..T-1 moving linearly from ``first`` to ``last``.

    ``switch[i]`` is the 0-based period from which variable ``i`` takes its
    parent from ``last``. With 1-based periods t, the mixing weight of the
    first model is (T - t) / (T - 1).
    """
    models = []
    for k in range(T):
        w = (T - 1 - k) / (T - 1)
        rho = w * first.rho + (1.0 - w) * last.rho
        sigma = w * first.sigma + (1.0 - w) * last.sigma
        pi = np.where(k < switch, first.pi, last.pi)
        models.append(ModularModel(pi, rho, sigma, first.m))
    return models


def smooth_change_dataset(p, m, s, T=10, seed=None, n_val=N_VAL, n_test=N_TEST):
    """Parameters drift linearly from one model to another; parents switch once."""
    if T < 2:
        raise ValueError("T must be at least 2")
    k1, k2, ks, kd = _seed_seq(seed).spawn(4)
    first = sample_modular_model(p, m, k1)
    last = sample_modular_model(p, m, k2)
    # switch times uniform on {2..T} (1-based) -> {1..T-1} 0-based
    switch = np.random.default_rng(ks).integers(1, T, size=p)
    models = interpolate_models(first, last, switch, T)
    train, val, test = _draw_splits(models, s, kd, n_val, n_test)
    params = dict(kind="smooth", p=p, m=m, s=s, T=T, seed=seed,
                  n_val=n_val, n_test=n_test)
    return ScenarioDataset(train, val, test, models, params)


def make_scenario(kind, p, m, s, T=10, seed=None, **kw) -> ScenarioDataset:
    if kind == "sudden":
        return sudden_change_dataset(p, m, s, T, seed, **kw)
    if kind == "smooth":
        return smooth_change_dataset(p, m, s, T, seed, **kw)
    raise ValueError(f"unknown scenario kind {kind!r}; expected 'sudden' or 'smooth'")


# -- export / import -----------------------------------------------------------


def _write_csv(path, x):
    header = ",".join(f"x{i + 1}" for i in range(x.shape[1]))
    np.savetxt(path, x, delimiter=",", header=header, comments="", fmt="%.17g")


def read_csv(path) -> np.ndarray:
    """Read a headed numeric CSV (rows = samples). Missing values are rejected."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                vals = [float(v) for v in row]
            except ValueError:
                raise ValueError(f"{path}:{lineno}: missing or non-numeric value") from None
            if not all(np.isfinite(vals)):
                raise ValueError(f"{path}:{lineno}: missing or non-finite value")
            rows.append(vals)
    if not rows:
        return np.zeros((0, len(header)))
    return np.asarray(rows, dtype=np.float64)


def export_scenario(scenario: ScenarioDataset, out) -> None:
    """Write the scenario directory layout (CSV splits, truth, parameters)."""
    out = os.fspath(out)
    os.makedirs(os.path.join(out, "truth"), exist_ok=True)
    for t in range(scenario.T):
        pdir = os.path.join(out, f"period_{t + 1}")
        os.makedirs(pdir, exist_ok=True)
        for name in ("train", "val", "test"):
            _write_csv(os.path.join(pdir, f"{name}.csv"), getattr(scenario, name)[t])
        with open(os.path.join(out, "truth", f"period_{t + 1}.dlr.json"), "w") as fh:
            json.dump(model_covariance(scenario.models[t]).to_json(), fh)
    with open(os.path.join(out, "truth", "labels.csv"), "w") as fh:
        fh.write(",".join(f"x{i + 1}" for i in range(scenario.p)) + "\n")
        for labels in scenario.labels:
            fh.write(",".join(str(int(v) + 1) for v in labels) + "\n")
    params = dict(scenario.params, version=1, models=[
        {"pi": (mdl.pi + 1).tolist(), "rho": mdl.rho.tolist(),
         "sigma": mdl.sigma.tolist(), "m": mdl.m}
        for mdl in scenario.models])
    with open(os.path.join(out, "scenario.json"), "w") as fh:
        json.dump(params, fh, indent=1)


def load_scenario(path) -> ScenarioDataset:
    """Read a directory written by :func:`export_scenario`."""
    path = os.fspath(path)
    with open(os.path.join(path, "scenario.json")) as fh:
        params = json.load(fh)
    models = [ModularModel(np.asarray(d["pi"]) - 1, d["rho"], d["sigma"], d["m"])
              for d in params.pop("models")]
    params.pop("version", None)
    T = len(models)
    splits = {name: [read_csv(os.path.join(path, f"period_{t + 1}", f"{name}.csv"))
                     for t in range(T)] for name in ("train", "val", "test")}
    return ScenarioDataset(splits["train"], splits["val"], splits["test"], models, params)
