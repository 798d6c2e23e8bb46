"""Evaluation: Gaussian NLL, clustering agreement and change-point scores."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .dlr import DiagLowRank, frobenius_diff_sq, invert, log_det, per_variable_change
from .exceptions import DimensionError, NotPositiveDefinite
from .tcorex import TCorexModel, TemporalDataset

LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class EvalReport:
    """Per-period scores and their time averages."""

    nll: np.ndarray
    ari: Optional[np.ndarray] = None
    changepoints: Optional[np.ndarray] = None

    @property
    def mean_nll(self) -> float:
        return float(np.mean(self.nll))

    @property
    def mean_ari(self) -> Optional[float]:
        return None if self.ari is None else float(np.mean(self.ari))

    def to_json(self) -> dict:
        out = {"version": 1, "nll": self.nll.tolist(), "mean_nll": self.mean_nll}
        if self.ari is not None:
            out.update(ari=self.ari.tolist(), mean_ari=self.mean_ari)
        if self.changepoints is not None:
            out["changepoints"] = self.changepoints.tolist()
        return out


def gaussian_nll(cov: DiagLowRank, x, mean=None) -> float:
    """Mean negative log-likelihood of the rows of ``x`` under N(mean, cov)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != cov.p:
        raise DimensionError(f"data have {x.shape[1]} variables, covariance has {cov.p}")
    r = x if mean is None else x - mean
    prec = invert(cov)
    quad = np.sum(r * r * prec.d, axis=1) + prec.sign * np.sum((r @ prec.u.T) ** 2, axis=1)
    return float(0.5 * (cov.p * LOG_2PI + log_det(cov) + np.mean(quad)))


def nll_per_period(covariances: Sequence[DiagLowRank], test: TemporalDataset,
                   means=None) -> np.ndarray:
    """NLL of each test block under the matching raw-space covariance."""
    if len(covariances) != test.T:
        raise DimensionError(f"{len(covariances)} covariances for {test.T} test periods")
    out = np.empty(test.T)
    for t, (cov, block) in enumerate(zip(covariances, test.periods)):
        try:
            out[t] = gaussian_nll(cov, block, None if means is None else means[t])
        except NotPositiveDefinite as exc:
            raise NotPositiveDefinite(f"estimate for period {t} is not positive definite: {exc}") from exc
    return out


def nll(model: TCorexModel, test: TemporalDataset) -> EvalReport:
    """Time-averaged NLL of the model's estimates on raw-scale test data.

    Each period's covariance is rescaled by the stored standard deviations
    and centred on the stored means before evaluation.
    """
    if test.p != model.p:
        raise DimensionError(f"model has p={model.p}, test data have p={test.p}")
    covs = [model.covariance(t, raw=True) for t in range(model.T)]
    return EvalReport(nll_per_period(covs, test, model.period_means))


def cluster(model: TCorexModel, t: int) -> np.ndarray:
    """Assign each variable to the latent factor most informative about it.

    For jointly Gaussian pairs the mutual information ``-1/2 log(1 - R^2)``
    is increasing in ``|R|``, and the covariance factor
    ``u[j, i] = B[j, i] / (1 + r_i)`` is increasing in ``|R[j, i]|`` for a
    fixed ``i``, so the argmax over ``|u|`` is the argmax over mutual
    information. Ties go to the smallest factor index. Labels are 0-based.
    """
    return np.argmax(np.abs(model.covariances[t].u), axis=0)


def cluster_from_correlations(r_corr) -> np.ndarray:
    """Labels from an (m, p) correlation matrix by maximal mutual information."""
    r = np.asarray(r_corr, dtype=np.float64)
    return np.argmax(-0.5 * np.log1p(-np.minimum(r * r, 1.0 - 1e-16)), axis=0)


def _comb2(n):
    n = np.asarray(n, dtype=np.float64)
    return n * (n - 1.0) / 2.0


def ari(labels, truth) -> float:
    """Adjusted Rand index between two partitions given as label vectors."""
    labels = np.asarray(labels)
    truth = np.asarray(truth)
    if labels.shape != truth.shape or labels.ndim != 1:
        raise DimensionError("label vectors must be 1-d and of equal length")
    _, a = np.unique(labels, return_inverse=True)
    _, b = np.unique(truth, return_inverse=True)
    table = np.zeros((a.max(initial=-1) + 1, b.max(initial=-1) + 1))
    np.add.at(table, (a, b), 1)
    index = _comb2(table).sum()
    rows = _comb2(table.sum(axis=1)).sum()
    cols = _comb2(table.sum(axis=0)).sum()
    total = _comb2(len(labels))
    if total == 0:
        return 1.0
    expected = rows * cols / total
    max_index = 0.5 * (rows + cols)
    if max_index == expected:
        return 1.0
    return float((index - expected) / (max_index - expected))


def time_averaged_ari(model: TCorexModel, truth_labels) -> np.ndarray:
    return np.array([ari(cluster(model, t), truth_labels[t]) for t in range(model.T)])


def precisions(covariances: Sequence[DiagLowRank]):
    out = []
    for t, cov in enumerate(covariances):
        try:
            out.append(invert(cov))
        except NotPositiveDefinite as exc:
            raise NotPositiveDefinite(f"estimate for period {t} is not positive definite: {exc}") from exc
    return out


def changepoint_scores(model_or_covs) -> np.ndarray:
    """Frobenius norm of the change in inverse correlation between neighbours.

    Accepts a fitted model (standardized-space estimates are used) or a
    list of covariance matrices. Entry ``t`` compares periods ``t`` and
    ``t + 1``.
    """
    covs = getattr(model_or_covs, "covariances", model_or_covs)
    if len(covs) < 2:
        raise ValueError("change-point scores need at least two periods")
    thetas = precisions(covs)
    sq = [frobenius_diff_sq(thetas[t + 1], thetas[t]) for t in range(len(thetas) - 1)]
    return np.sqrt(np.maximum(sq, 0.0))


def top_changed_variables(model_or_covs, t: int, k: int) -> np.ndarray:
    """Indices of the ``k`` variables whose precision rows change most from t to t+1."""
    covs = getattr(model_or_covs, "covariances", model_or_covs)
    if not 0 <= t < len(covs) - 1:
        raise IndexError(f"t must lie in [0, {len(covs) - 1})")
    p = covs[t].p
    if k > p:
        raise ValueError(f"k={k} exceeds the number of variables {p}")
    change = per_variable_change(invert(covs[t + 1]), invert(covs[t]))
    return np.argsort(-change, kind="stable")[:k]
