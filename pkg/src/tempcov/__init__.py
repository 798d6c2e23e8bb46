"""Temporal covariance estimation with T-CorEx.

The usual entry points::

    from tempcov import FitConfig, TemporalDataset, fit, nll

    model = fit(TemporalDataset(blocks), FitConfig(m=8, lam=0.3, beta=0.5))
    report = nll(model, TemporalDataset(test_blocks))
"""

from .corex import fit_linear_corex
from .dlr import DiagLowRank
from .evaluation import (EvalReport, ari, changepoint_scores, cluster, nll,
                         top_changed_variables)
from .exceptions import (CorruptModel, DimensionError, DivergenceError, NotPositiveDefinite,
                         TempCovError, UnsupportedVersion, ZeroVariance)
from .tcorex import (FitConfig, TCorexModel, TemporalDataset, fit, fit_independent, load_model,
                     save_model, standardize, window)

__version__ = "0.1.0"

__all__ = [
    "CorruptModel", "DiagLowRank", "DimensionError", "DivergenceError", "EvalReport",
    "FitConfig", "NotPositiveDefinite", "TCorexModel", "TempCovError", "TemporalDataset",
    "UnsupportedVersion", "ZeroVariance", "ari", "changepoint_scores", "cluster", "fit",
    "fit_independent", "fit_linear_corex", "load_model", "nll", "save_model", "standardize",
    "top_changed_variables", "window",
]
