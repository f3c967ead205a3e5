"""Smoke tests for the python bindings: generate, train briefly, evaluate."""

import os
import tempfile

import pytest

tvin = pytest.importorskip("tvin")


@pytest.fixture(scope="module")
def news_data():
    return tvin.generate_dataset("news", maps=6, trajs=3, m=9, density=0.25, seed=3)


@pytest.fixture(scope="module")
def news_model(news_data):
    return tvin.train_vin(news_data, k=10, hidden=16, epochs=4, lr=0.01, seed=1)


def test_dataset_roundtrip(news_data):
    assert news_data.domain == "news"
    assert news_data.num_maps == 6
    assert news_data.num_samples > 0
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "ds.bin")
        news_data.save(path)
        back = tvin.load_dataset(path)
        assert back.num_maps == news_data.num_maps
        assert back.num_samples == news_data.num_samples
        assert back.m == news_data.m


def test_expert_is_perfect(news_data):
    metrics = tvin.expert_metrics(news_data)
    assert metrics["pct_opt"] == 100.0
    assert metrics["pct_suc"] == 100.0


def test_training_and_evaluation(news_model, news_data):
    metrics = tvin.evaluate(news_model, news_data)
    assert 0.0 <= metrics["pct_opt"] <= 100.0
    assert 0.0 <= metrics["pct_suc"] <= 100.0
    assert metrics["n_states"] == news_data.num_samples
    # A briefly trained model should beat uniform guessing on its train set.
    assert metrics["pct_opt"] > 30.0


def test_predictions_and_rollout(news_model, news_data):
    action = news_model.predict_action(news_data, 0, 4, 4)
    assert 0 <= action < 4
    probs = news_model.action_probs(news_data, 0, 4, 4)
    assert len(probs) == 4
    assert abs(sum(probs) - 1.0) < 1e-4
    result = tvin.rollout(news_model, news_data, 0, 4, 4)
    assert result["outcome"] in {"goal", "obstacle", "step_limit"}
    assert len(result["path"]) == result["steps"] + 1


def test_checkpoint_roundtrip(news_model, news_data):
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "model.ck")
        news_model.save(path)
        back = tvin.load_model(path)
        assert isinstance(back, tvin.VinModel)
        assert back.k == news_model.k
        a = tvin.evaluate(news_model, news_data)
        b = tvin.evaluate(back, news_data)
        assert a["pct_opt"] == b["pct_opt"]


def test_transfer_path(news_model):
    moore = tvin.generate_dataset("moore", maps=4, trajs=3, m=9, density=0.25, seed=5)
    t = tvin.train_tvin(news_model, moore, epochs=2, lr=0.01, seed=2)
    assert isinstance(t, tvin.TvinModel)
    assert len(t.theta) == 4  # E, W, N, S transferred
    metrics = tvin.evaluate(t, moore)
    assert 0.0 <= metrics["pct_opt"] <= 100.0
    vin_i = tvin.train_vin_init(news_model, moore, epochs=1, seed=2)
    assert isinstance(vin_i, tvin.VinModel)


def test_gradient_check_quick():
    ok, worst, _log = tvin.gradient_check(seeds=2)
    assert ok, f"gradient suite failed, worst {worst}"
