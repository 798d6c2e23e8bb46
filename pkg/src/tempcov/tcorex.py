"""T-CorEx: one linear CorEx per time period, tied together over time.

Two mechanisms couple the periods. Moments for period ``t`` are estimated
from every period ``tau``, with the samples of ``tau`` down-weighted by
``beta ** |t - tau|``; and a penalty ``lam * sum_t phi(W[t+1] - W[t])``
discourages the weights from jumping between neighbouring periods.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from . import corex
from .dlr import DiagLowRank
from .exceptions import (CorruptModel, DimensionError, UnsupportedVersion,
                         ZeroVariance)
from .optim import minimize_annealed

FORMAT_NAME = "tcorex-model"
FORMAT_VERSION = 1
DEFAULT_SCHEDULE = tuple([0.6 ** k for k in range(1, 7)] + [0.0])
L2_FLOOR = 1e-12


@dataclass(frozen=True)
class FitConfig:
    """Hyperparameters of a T-CorEx (or linear CorEx) fit.

    ``lam`` is the regularization coefficient (``--lambda`` on the command
    line), ``beta`` the sample-weight decay and ``phi`` the penalty, ``"l1"``
    or ``"l2"``. ``init_steps_per_round`` is the per-round budget of the
    pooled linear CorEx used for initialization; by default half of
    ``steps_per_round``.
    """

    m: int = 8
    lam: float = 0.0
    beta: float = 0.5
    phi: str = "l1"
    anneal_schedule: Sequence[float] = DEFAULT_SCHEDULE
    steps_per_round: int = 500
    init_steps_per_round: Optional[int] = None
    adam_lr: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    weight_cutoff: float = 1e-9
    convergence_tol: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "anneal_schedule",
                           tuple(float(e) for e in self.anneal_schedule))
        if self.m < 1:
            raise ValueError("m must be at least 1")
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")
        if self.lam < 0:
            raise ValueError(f"lambda must be non-negative, got {self.lam}")
        if self.phi not in ("l1", "l2"):
            raise ValueError(f"phi must be 'l1' or 'l2', got {self.phi!r}")
        if not self.anneal_schedule or self.anneal_schedule[-1] != 0.0:
            raise ValueError("the annealing schedule must end in 0")
        if any(not 0.0 <= e <= 1.0 for e in self.anneal_schedule):
            raise ValueError("annealing noise levels must lie in [0, 1]")
        if self.steps_per_round < 1:
            raise ValueError("steps_per_round must be positive")

    @property
    def init_steps(self) -> int:
        if self.init_steps_per_round is not None:
            return self.init_steps_per_round
        return max(1, self.steps_per_round // 2)

    def replace(self, **changes) -> "FitConfig":
        return FitConfig(**{**asdict(self), **changes})

    def to_json(self) -> dict:
        out = asdict(self)
        out["anneal_schedule"] = list(self.anneal_schedule)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "FitConfig":
        return cls(**obj)


@dataclass(frozen=True)
class TemporalDataset:
    """An ordered list of sample blocks, one (s_t, p) array per period.

    After :func:`standardize`, ``period_means`` and ``period_stds`` hold the
    (T, p) statistics that were used, so estimates can be mapped back to
    the raw scale.
    """

    periods: List[np.ndarray]
    period_means: Optional[np.ndarray] = None
    period_stds: Optional[np.ndarray] = None

    def __post_init__(self):
        periods = [np.asarray(b, dtype=np.float64) for b in self.periods]
        if not periods:
            raise ValueError("a temporal dataset needs at least one period")
        p = periods[0].shape[1] if periods[0].ndim == 2 else None
        for t, block in enumerate(periods):
            if block.ndim != 2 or block.shape[1] != p:
                raise DimensionError(f"period {t} has shape {block.shape}, expected (s, {p})")
            if block.shape[0] < 1:
                raise ValueError(f"period {t} is empty")
            if not np.all(np.isfinite(block)):
                raise ValueError(f"period {t} contains non-finite values")
        object.__setattr__(self, "periods", periods)

    @property
    def T(self) -> int:
        return len(self.periods)

    @property
    def p(self) -> int:
        return self.periods[0].shape[1]

    @property
    def sizes(self) -> np.ndarray:
        return np.array([len(b) for b in self.periods])

    @property
    def standardized(self) -> bool:
        return self.period_means is not None


@dataclass(frozen=True, eq=False)
class TCorexModel:
    """Fitted weights and per-period covariance estimates.

    ``covariances[t]`` lives in the standardized space of period ``t``; use
    :meth:`covariance` with ``raw=True`` to get it on the data scale.
    """

    weights: np.ndarray
    covariances: List[DiagLowRank]
    period_means: np.ndarray
    period_stds: np.ndarray
    config: FitConfig = field(default_factory=FitConfig)

    @property
    def T(self) -> int:
        return self.weights.shape[0]

    @property
    def m(self) -> int:
        return self.weights.shape[1]

    @property
    def p(self) -> int:
        return self.weights.shape[2]

    def covariance(self, t: int, raw: bool = False) -> DiagLowRank:
        cov = self.covariances[t]
        return cov.scale(self.period_stds[t]) if raw else cov


def window(series, w: int) -> TemporalDataset:
    """Cut an (n, p) series into floor(n / w) periods of w rows; the rest is dropped."""
    series = np.asarray(series, dtype=np.float64)
    if series.ndim != 2:
        raise DimensionError("series must be a 2-d (samples, variables) array")
    n = len(series)
    if w < 1:
        raise ValueError("period length must be at least 1")
    if w > n:
        raise ValueError(f"period length {w} exceeds series length {n}")
    T = n // w
    return TemporalDataset([series[k * w:(k + 1) * w] for k in range(T)])


def sample_weights(t: int, T: int, beta: float, cutoff: float = 1e-9):
    """Weights ``beta ** |t - tau|`` of every period used for period ``t``.

    Indices are 0-based. Periods whose weight falls below ``cutoff`` are
    omitted. Returns a list of ``(tau, weight)``.
    """
    if not 0 <= t < T:
        raise IndexError(f"period {t} outside [0, {T})")
    out = []
    for tau in range(T):
        alpha = 1.0 if tau == t else beta ** abs(t - tau)
        if alpha >= cutoff:
            out.append((tau, alpha))
    return out


def weight_matrix(sizes, beta, cutoff=1e-9) -> np.ndarray:
    """(T, n) matrix of normalized per-row weights over the stacked periods."""
    sizes = np.asarray(sizes)
    T = len(sizes)
    owner = np.repeat(np.arange(T), sizes)
    a = np.zeros((T, len(owner)))
    for t in range(T):
        for tau, alpha in sample_weights(t, T, beta, cutoff):
            a[t, owner == tau] = alpha
        a[t] /= a[t].sum()
    return a


def standardize(raw: TemporalDataset, beta: float, cutoff: float = 1e-9) -> TemporalDataset:
    """Standardize each period with its own cross-period weighted statistics.

    The mean and variance for period ``t`` are weighted averages over all
    periods with weights ``beta ** |t - tau|``; only the block of period ``t``
    is transformed with them. Population convention (no n - 1).
    """
    x = np.vstack(raw.periods)
    a = weight_matrix(raw.sizes, beta, cutoff)
    means = a @ x
    variances = np.einsum("tn,tnp->tp", a, (x[None, :, :] - means[:, None, :]) ** 2)
    stds = np.sqrt(variances)
    bad = np.argwhere(~(stds > 0))
    if bad.size:
        t, i = (int(k) for k in bad[0])
        raise ZeroVariance(f"variable {i} has zero weighted variance in period {t}",
                           column=i, period=t)
    blocks = [(block - means[t]) / stds[t] for t, block in enumerate(raw.periods)]
    return TemporalDataset(blocks, period_means=means, period_stds=stds)


def temporal_penalty(weights, phi: str = "l1", with_grad: bool = False):
    """Sum over neighbours of ``phi(W[t+1] - W[t])``.

    ``phi="l1"`` is the entrywise absolute sum (subgradient 0 at 0);
    ``phi="l2"`` the Euclidean norm of the flattened difference, computed
    as ``sqrt(sum d^2 + 1e-12)`` so its gradient stays finite.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 3:
        raise DimensionError(f"weights must have shape (T, m, p), got {w.shape}")
    grad = np.zeros_like(w)
    if w.shape[0] < 2:
        return (0.0, grad) if with_grad else 0.0
    diff = w[1:] - w[:-1]
    if phi == "l1":
        value = float(np.sum(np.abs(diff)))
        g = np.sign(diff)
    elif phi == "l2":
        norms = np.sqrt(np.sum(diff * diff, axis=(1, 2)) + L2_FLOOR)
        value = float(np.sum(norms))
        g = diff / norms[:, None, None]
    else:
        raise ValueError(f"unknown penalty {phi!r}")
    if not with_grad:
        return value
    grad[1:] += g
    grad[:-1] -= g
    return value, grad


class _Problem:
    """Stacked standardized data plus the cross-period weight matrix."""

    def __init__(self, data: TemporalDataset, config: FitConfig):
        self.x = np.vstack(data.periods)
        self.a = weight_matrix(data.sizes, config.beta, config.weight_cutoff)
        self.config = config

    def value_and_grad(self, w, eps, rng, noise=True):
        x = self.x
        if eps > 0:
            x = np.sqrt(1.0 - eps * eps) * x + eps * rng.standard_normal(x.shape)
        z_noise = rng.standard_normal((w.shape[0], len(x), w.shape[1])) if noise else None
        per_period, grad = corex.batch_value_and_grad(w, x, self.a, z_noise)
        value = float(np.sum(per_period))
        if self.config.lam > 0:
            pen, pen_grad = temporal_penalty(w, self.config.phi, with_grad=True)
            value += self.config.lam * pen
            grad = grad + self.config.lam * pen_grad
        return value, grad, per_period

    def final_stats(self, w):
        exz, ezz, ex2 = corex.batch_moments(w, self.x, self.a, None)
        return [corex.stats_from_moments(exz[t], ezz[t], ex2[t]) for t in range(len(w))]


def _weights_array(weights, data=None):
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 3:
        raise DimensionError(f"weights must have shape (T, m, p), got {w.shape}")
    if data is not None and (w.shape[0] != data.T or w.shape[2] != data.p):
        raise DimensionError(
            f"weights of shape {w.shape} do not match T={data.T}, p={data.p}")
    return w


def tcorex_objective(weights, data: TemporalDataset, config: FitConfig, eps: float = 0.0,
                     rng=None, noise: bool = True) -> float:
    """Full T-CorEx objective on standardized ``data`` at noise level ``eps``.

    ``rng`` (Generator or seed) supplies both the annealing noise on the data
    and the latent noise; ``noise=False`` uses analytic latent moments.
    """
    w = _weights_array(weights, data)
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    return _Problem(data, config).value_and_grad(w, eps, rng, noise)[0]


def tcorex_value_and_grad(weights, data, config, eps=0.0, rng=None, noise=True):
    w = _weights_array(weights, data)
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    value, grad, _ = _Problem(data, config).value_and_grad(w, eps, rng, noise)
    return value, grad


def fit(raw: TemporalDataset, config: FitConfig, log: Optional[dict] = None) -> TCorexModel:
    """Fit T-CorEx.

    Steps: standardize each period with cross-period weighted statistics;
    fit one linear CorEx on all periods pooled (globally standardized) and
    copy its weights to every period; run Adam on the full objective over
    the annealing schedule; finally compute each period's covariance from
    noise-free weighted moments.

    Parameters
    ----------
    raw : TemporalDataset
        Unstandardized training data.
    config : FitConfig
    log : dict, optional
        Receives ``init`` and ``main`` training traces (see
        :func:`tempcov.optim.minimize_annealed`).

    Raises
    ------
    DivergenceError
        If the objective or its gradient becomes non-finite.
    """
    data = standardize(raw, config.beta, config.weight_cutoff)
    init_seq, main_seq = np.random.SeedSequence(config.seed).spawn(2)

    pooled, _, _ = corex.standardize_columns(np.vstack(raw.periods))
    init_log = {} if log is not None else None
    w_pooled, _ = corex.fit_linear_corex(
        pooled, config.m, config, seed=np.random.default_rng(init_seq),
        steps_per_round=config.init_steps, log=init_log)
    w0 = np.repeat(w_pooled[None], data.T, axis=0)

    problem = _Problem(data, config)
    main_log = {} if log is not None else None
    w = minimize_annealed(problem.value_and_grad, w0, config, config.steps_per_round,
                          np.random.default_rng(main_seq), log=main_log)
    if log is not None:
        log["init"] = init_log
        log["main"] = main_log
    covariances = [corex.covariance_estimate(s) for s in problem.final_stats(w)]
    return TCorexModel(weights=w, covariances=covariances,
                       period_means=data.period_means, period_stds=data.period_stds,
                       config=config)


def fit_independent(raw: TemporalDataset, config: FitConfig) -> TCorexModel:
    """Linear CorEx fitted to each period separately (no temporal coupling)."""
    weights, covs, means, stds = [], [], [], []
    for t, block in enumerate(raw.periods):
        x, mu, sd = corex.standardize_columns(block)
        w, cov = corex.fit_linear_corex(x, config.m, config, seed=[config.seed, t])
        weights.append(w)
        covs.append(cov)
        means.append(mu)
        stds.append(sd)
    return TCorexModel(np.stack(weights), covs, np.stack(means), np.stack(stds), config)


# -- persistence -------------------------------------------------------------


def _array_section(arr):
    return np.ascontiguousarray(arr, dtype="<f8").tobytes()


def save_model(model: TCorexModel, path, binary: bool = False) -> None:
    """Write ``model`` as a JSON envelope, optionally with a binary sidecar.

    With ``binary=True`` the large arrays go to ``<path>.bin`` and the JSON
    declares each one by byte offset and length. Weights, means and stds are
    raw little-endian float64 arrays; each covariance is a ``DLR1`` record.
    """
    path = os.fspath(path)
    envelope = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "config": model.config.to_json(),
        "T": model.T,
        "p": model.p,
        "m": model.m,
    }
    if not binary:
        envelope.update(
            period_means=model.period_means.tolist(),
            period_stds=model.period_stds.tolist(),
            weights=model.weights.tolist(),
            covariances=[c.to_json() for c in model.covariances],
        )
    else:
        sidecar = path + ".bin"
        sections = {}
        offset = 0
        with open(sidecar, "wb") as fh:
            def put(name, buf, **meta):
                nonlocal offset
                fh.write(buf)
                sections[name] = {"offset": offset, "length": len(buf), **meta}
                offset += len(buf)

            put("period_means", _array_section(model.period_means),
                shape=list(model.period_means.shape))
            put("period_stds", _array_section(model.period_stds),
                shape=list(model.period_stds.shape))
            put("weights", _array_section(model.weights), shape=list(model.weights.shape))
            for t, cov in enumerate(model.covariances):
                put(f"covariance/{t}", cov.to_bytes())
        envelope["sidecar"] = {"file": os.path.basename(sidecar), "sections": sections}
    with open(path, "w") as fh:
        json.dump(envelope, fh)


def load_model(path) -> TCorexModel:
    """Read a model written by :func:`save_model`.

    Raises
    ------
    CorruptModel
        On unparseable or inconsistent content, including truncated files.
    UnsupportedVersion
        If the file declares a format version newer than this library.
    """
    path = os.fspath(path)
    try:
        with open(path) as fh:
            envelope = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CorruptModel(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(envelope, dict) or envelope.get("format") != FORMAT_NAME:
        raise CorruptModel(f"{path}: not a {FORMAT_NAME} file")
    version = envelope.get("version")
    if not isinstance(version, int) or version > FORMAT_VERSION or version < 1:
        raise UnsupportedVersion(f"{path}: format version {version!r} is not supported")
    try:
        T, p, m = int(envelope["T"]), int(envelope["p"]), int(envelope["m"])
        config = FitConfig.from_json(envelope["config"])
        if "sidecar" in envelope:
            sidecar = os.path.join(os.path.dirname(path), envelope["sidecar"]["file"])
            with open(sidecar, "rb") as fh:
                blob = fh.read()
            sections = envelope["sidecar"]["sections"]

            def section(name):
                sec = sections[name]
                end = sec["offset"] + sec["length"]
                if end > len(blob):
                    raise CorruptModel(f"{sidecar}: section {name} runs past end of file")
                return blob[sec["offset"]:end]

            def array(name, shape):
                return np.frombuffer(section(name), dtype="<f8").astype(np.float64).reshape(shape)

            means = array("period_means", (T, p))
            stds = array("period_stds", (T, p))
            weights = array("weights", (T, m, p))
            covs = [DiagLowRank.from_bytes(section(f"covariance/{t}")) for t in range(T)]
        else:
            means = np.asarray(envelope["period_means"], dtype=np.float64).reshape(T, p)
            stds = np.asarray(envelope["period_stds"], dtype=np.float64).reshape(T, p)
            weights = np.asarray(envelope["weights"], dtype=np.float64).reshape(T, m, p)
            covs = [DiagLowRank.from_json(c) for c in envelope["covariances"]]
    except CorruptModel:
        raise
    except (KeyError, TypeError, ValueError, OSError) as exc:
        raise CorruptModel(f"{path}: {exc}") from exc
    if len(covs) != T or any(c.p != p for c in covs):
        raise CorruptModel(f"{path}: covariance list does not match T={T}, p={p}")
    return TCorexModel(weights, covs, means, stds, config)
