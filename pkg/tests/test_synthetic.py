import hashlib
import json
import os

import numpy as np
import pytest
from scipy import stats

from tempcov import dlr, evaluation, synthetic
from tempcov.synthetic import (ModularModel, interpolate_models, model_covariance, rho_from_snr,
                               sample_data, sample_modular_model)


def test_rho_boundaries():
    assert rho_from_snr(0.0, 1.3) == 0.0
    assert rho_from_snr(5.0, 0.2) == pytest.approx(np.sqrt(5 / 6))
    assert rho_from_snr(5.0, -0.2) == pytest.approx(-0.9128709291752769)


def test_model_fields_follow_generating_distributions():
    model = sample_modular_model(100_000, 7, seed=0)
    assert set(np.unique(model.pi)) == set(range(7))
    assert model.sigma.min() >= 0.25 and model.sigma.max() <= 4.0
    # rho^2 = snr / (snr + 1) with snr ~ U[0, 5]: P(rho^2 <= y) = y / (5 (1 - y))
    y = model.rho ** 2
    result = stats.kstest(y, lambda v: np.clip(v / (5.0 * (1.0 - v)), 0.0, 1.0))
    assert result.pvalue > 1e-3
    assert 0.45 < np.mean(model.rho > 0) < 0.55


def test_model_validation():
    with pytest.raises(ValueError):
        ModularModel([0], [1.0], [1.0], 1)
    with pytest.raises(ValueError):
        ModularModel([2], [0.1], [1.0], 2)
    with pytest.raises(ValueError):
        ModularModel([0], [0.1], [0.0], 1)


def test_covariance_independent_case():
    model = ModularModel([0, 1, 0], [0.0, 0.0, 0.0], [0.5, 2.0, 3.0], 2)
    assert np.array_equal(dlr.to_dense(model_covariance(model)), np.diag([0.25, 4.0, 9.0]))


def test_covariance_product_formula():
    model = ModularModel([0, 0], [0.6, 0.8], [1.0, 1.0], 1)
    dense = dlr.to_dense(model_covariance(model))
    assert dense[0, 1] == pytest.approx(0.48, abs=1e-15)
    assert np.allclose(np.diag(dense), 1.0)


def test_covariance_matches_monte_carlo():
    model = sample_modular_model(64, 6, seed=1)
    want = dlr.to_dense(model_covariance(model))
    n, acc = 0, np.zeros((64, 64))
    for k in range(10):
        x = sample_data(model, 100_000, seed=[1, k])
        acc += x.T @ x
        n += len(x)
    emp = acc / n
    # The entrywise error is compared on the correlation scale: raw entries
    # reach sigma^2 = 16, where the Monte-Carlo standard error at 1e6
    # samples is itself about 0.02.
    scale = np.sqrt(np.outer(np.diag(want), np.diag(want)))
    assert np.max(np.abs(emp - want) / scale) < 0.01


def test_zero_correlation_columns_independent():
    model = ModularModel(np.zeros(3, int), np.zeros(3), np.array([1.0, 2.0, 0.5]), 1)
    x = sample_data(model, 200_000, seed=2)
    c = np.corrcoef(x.T)
    assert np.max(np.abs(c - np.eye(3))) < 0.01
    assert np.allclose(x.std(axis=0), [1.0, 2.0, 0.5], rtol=0.01)


def test_sample_data_deterministic():
    model = sample_modular_model(10, 3, seed=4)
    assert sample_data(model, 5, seed=9).tobytes() == sample_data(model, 5, seed=9).tobytes()


def test_generated_covariances_are_positive_definite():
    for seed in range(20):
        cov = model_covariance(sample_modular_model(50, 5, seed))
        assert np.all(cov.d > 0)
        assert np.isfinite(dlr.log_det(cov))


# -- scenarios -----------------------------------------------------------------


def test_sudden_change_layout():
    sc = synthetic.sudden_change_dataset(p=20, m=3, s=8, T=10, seed=1)
    assert sc.T == 10
    assert [len(b) for b in sc.train] == [8] * 10
    assert [len(b) for b in sc.val] == [16] * 10
    assert [len(b) for b in sc.test] == [1000] * 10
    assert all(sc.models[t] is sc.models[0] for t in range(5))
    assert all(sc.models[t] is sc.models[5] for t in range(5, 10))
    assert np.array_equal(sc.labels[7], sc.models[7].pi)


def test_sudden_truth_changepoints_only_at_boundary():
    sc = synthetic.sudden_change_dataset(p=30, m=4, s=4, T=10, seed=2)
    scores = evaluation.changepoint_scores(sc.truth)
    assert scores[4] > 1.0
    assert np.all(np.delete(scores, 4) == 0.0)


def test_scenarios_deterministic():
    for kind in ("sudden", "smooth"):
        a = synthetic.make_scenario(kind, 15, 3, 4, seed=5)
        b = synthetic.make_scenario(kind, 15, 3, 4, seed=5)
        for name in ("train", "val", "test"):
            assert all(np.array_equal(x, y) for x, y in zip(getattr(a, name), getattr(b, name)))
        assert np.array_equal(a.labels, b.labels)


def test_unknown_kind():
    with pytest.raises(ValueError):
        synthetic.make_scenario("gradual", 5, 2, 3)


@pytest.mark.parametrize("kind,paper", [("sudden", 196.0), ("smooth", 230.2)])
def test_ground_truth_nll_matches_reported(kind, paper):
    values = []
    for seed in range(5):
        sc = synthetic.make_scenario(kind, 128, 8, 8, seed=seed)
        values.append(np.mean(evaluation.nll_per_period(sc.truth, sc.split("test"))))
    assert abs(np.mean(values) - paper) <= 8.0


def test_smooth_endpoints():
    first = sample_modular_model(40, 4, seed=1)
    last = sample_modular_model(40, 4, seed=2)
    switch = np.random.default_rng(3).integers(1, 10, size=40)
    models = interpolate_models(first, last, switch, 10)
    assert np.array_equal(models[0].rho, first.rho)
    assert np.array_equal(models[0].sigma, first.sigma)
    assert np.array_equal(models[0].pi, first.pi)
    assert np.allclose(models[-1].rho, last.rho, atol=1e-15)
    assert np.allclose(models[-1].sigma, last.sigma, atol=1e-15)
    assert np.array_equal(models[-1].pi, last.pi)
    # parents switch exactly at the drawn period
    for k, mdl in enumerate(models):
        assert np.array_equal(mdl.pi, np.where(k < switch, first.pi, last.pi))


def test_smooth_degenerate_interpolation():
    model = sample_modular_model(25, 3, seed=6)
    models = interpolate_models(model, model, np.full(25, 9), 10)
    for mdl in models:
        assert np.allclose(mdl.rho, model.rho, atol=1e-15)
        assert np.allclose(mdl.sigma, model.sigma, atol=1e-15)
        assert np.array_equal(mdl.pi, model.pi)


def test_smooth_steps_small_relative_to_sudden_jump():
    ratios = []
    for seed in range(5):
        smooth = synthetic.smooth_change_dataset(64, 4, 4, seed=seed)
        sudden = synthetic.sudden_change_dataset(64, 4, 4, seed=seed)
        dense = [dlr.to_dense(c) for c in smooth.truth]
        steps = [np.linalg.norm(dense[t + 1] - dense[t]) for t in range(9)]
        sd = [dlr.to_dense(c) for c in sudden.truth]
        jump = np.linalg.norm(sd[5] - sd[4])
        ratios.append(np.mean(steps) / jump)
    assert np.mean(ratios) < 0.5


# -- export --------------------------------------------------------------------


def _digest(root):
    h = hashlib.sha256()
    for dirpath, _, files in sorted(os.walk(root)):
        for name in sorted(files):
            path = os.path.join(dirpath, name)
            h.update(os.path.relpath(path, root).encode())
            with open(path, "rb") as fh:
                h.update(fh.read())
    return h.hexdigest()


def test_export_and_load(tmp_path):
    sc = synthetic.smooth_change_dataset(p=6, m=2, s=3, T=4, seed=8, n_test=20)
    synthetic.export_scenario(sc, tmp_path / "a")
    root = tmp_path / "a"
    assert (root / "period_1" / "train.csv").read_text().splitlines()[0] == "x1,x2,x3,x4,x5,x6"
    labels = (root / "truth" / "labels.csv").read_text().splitlines()
    assert labels[1].split(",") == [str(v + 1) for v in sc.labels[0]]
    truth = dlr.DiagLowRank.from_json(
        json.loads((root / "truth" / "period_2.dlr.json").read_text()))
    assert np.array_equal(truth.u, sc.truth[1].u)

    loaded = synthetic.load_scenario(root)
    for name in ("train", "val", "test"):
        assert all(np.array_equal(x, y) for x, y in zip(getattr(sc, name), getattr(loaded, name)))
    assert np.array_equal(loaded.labels, sc.labels)
    assert loaded.params["kind"] == "smooth"

    synthetic.export_scenario(sc, tmp_path / "b")
    assert _digest(tmp_path / "a") == _digest(tmp_path / "b")


def test_read_csv_rejects_missing(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("x1,x2\n1,2\n3,\n")
    with pytest.raises(ValueError, match="missing"):
        synthetic.read_csv(path)
