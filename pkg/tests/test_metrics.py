"""Evaluation metric tests: discriminative, predictive (TSTR), aggregation."""

import numpy as np
import pytest

from tsdiff.data import make_sine_dataset
from tsdiff.metrics import (
    MetricError, MetricReport, PostHocModelConfig, aggregate,
    discriminative_score, predictive_score, write_report)

FAST_CLS = PostHocModelConfig(task="classify", hidden=4, layers=2, iters=300)
FAST_FC = PostHocModelConfig(task="forecast", hidden=4, layers=1, iters=300)


def test_config_validation():
    with pytest.raises(ValueError):
        PostHocModelConfig(task="rank", hidden=4)
    with pytest.raises(ValueError):
        PostHocModelConfig(task="classify", hidden=4, cell="rnn")
    with pytest.raises(ValueError):
        PostHocModelConfig(task="classify", hidden=0)


def test_discriminative_copy_is_indistinguishable():
    # large test split so the 0.05 tolerance is several sigma above the
    # accuracy noise floor
    real = make_sine_dataset(1024, 12, 3, seed=0).windows
    score = discriminative_score(real, real.copy(), seed=0, config=FAST_CLS)
    assert score <= 0.05


def test_discriminative_separable_is_half():
    real = np.zeros((32, 8, 2))
    fake = np.ones((32, 8, 2))
    score = discriminative_score(real, fake, seed=0, config=FAST_CLS)
    assert score > 0.45


def test_discriminative_range_and_errors():
    real = make_sine_dataset(16, 8, 2, seed=1).windows
    fake = make_sine_dataset(16, 8, 2, seed=2).windows
    s = discriminative_score(real, fake, seed=0, config=FAST_CLS)
    assert 0.0 <= s <= 0.5
    with pytest.raises(MetricError):
        discriminative_score(real[:1], fake[:1], seed=0)
    with pytest.raises(MetricError):
        discriminative_score(real, fake[:, :4], seed=0)


def test_discriminative_reproducible():
    real = make_sine_dataset(24, 8, 2, seed=3).windows
    fake = make_sine_dataset(24, 8, 2, seed=4).windows
    a = discriminative_score(real, fake, seed=5, config=FAST_CLS)
    b = discriminative_score(real, fake, seed=5, config=FAST_CLS)
    assert a == b


def test_discriminative_lstm_cell():
    cfg = PostHocModelConfig(task="classify", hidden=4, layers=2, iters=100,
                             cell="lstm")
    real = make_sine_dataset(24, 8, 2, seed=3).windows
    s = discriminative_score(real, real.copy(), seed=0, config=cfg)
    assert 0.0 <= s <= 0.5


def test_predictive_same_data_close_to_direct_reference():
    wins = make_sine_dataset(96, 12, 3, seed=6).windows
    fake, real_test = wins[:64], wins[64:]
    tstr = predictive_score(fake, real_test, seed=0, config=FAST_FC)
    direct = predictive_score(real_test, real_test, seed=0, config=FAST_FC)
    assert tstr >= 0.0
    # same distribution: TSTR within 10% (plus slack) of training directly
    assert abs(tstr - direct) <= 0.1 * max(direct, 0.05)


def test_predictive_constant_fake_closed_form():
    # a forecaster trained on constant windows predicts (nearly) that
    # constant, so the MAE equals the mean absolute deviation of the real
    # targets from it
    c = 0.3
    fake = np.full((32, 10, 3), c)
    real = make_sine_dataset(32, 10, 3, seed=7).windows
    cfg = PostHocModelConfig(task="forecast", hidden=4, layers=1, iters=2000)
    mae = predictive_score(fake, real, seed=0, config=cfg)
    expected = np.abs(real[:, 1:, -1:] - c).mean()
    assert abs(mae - expected) < 0.02


def test_predictive_single_feature_fallback():
    wins = make_sine_dataset(32, 10, 1, seed=8).windows
    mae = predictive_score(wins, wins, seed=0, config=FAST_FC)
    assert np.isfinite(mae) and mae >= 0.0


def test_aggregate():
    r = aggregate([0.5] * 10, "discriminative")
    assert r.mean == 0.5 and r.std == 0.0 and r.n_runs == 10
    vals = [0.1, 0.2, 0.4]
    r = aggregate(vals, "predictive")
    # two-pass oracle
    m = sum(vals) / 3
    var = sum((v - m) ** 2 for v in vals) / 2
    assert r.mean == pytest.approx(m, abs=1e-15)
    assert r.std == pytest.approx(var ** 0.5, abs=1e-15)
    with pytest.raises(MetricError):
        aggregate([], "discriminative")


def test_report_json(tmp_path):
    import json
    p = tmp_path / "report.json"
    write_report(p, [aggregate([0.1, 0.2], "discriminative")],
                 config={"n_steps": 100}, seeds=[0, 1])
    doc = json.loads(p.read_text())
    assert doc["metrics"][0]["metric"] == "discriminative"
    assert doc["metrics"][0]["n_runs"] == 2
    assert doc["seeds"] == [0, 1]
