import numpy as np
import pytest

from fwl.metrics import argmax_predict, classification_report


def test_all_correct():
    r = classification_report([0, 1, 2, 2], [0, 1, 2, 2], 3)
    assert r.f1_micro == r.f1_macro == r.accuracy == 1.0


def test_constant_predictor_hand_values():
    r = classification_report([0, 0, 1, 1], [0, 0, 0, 0], 2)
    assert r.accuracy == 0.5
    assert r.f1_macro == pytest.approx(1 / 3, rel=1e-15)
    assert r.precision == [0.5, 0.0] and r.recall == [1.0, 0.0]


def test_micro_equals_accuracy():
    rng = np.random.default_rng(0)
    gold, pred = rng.integers(0, 5, 200), rng.integers(0, 5, 200)
    r = classification_report(gold, pred, 5)
    assert r.f1_micro == pytest.approx(r.accuracy, abs=1e-15)


def test_macro_against_sklearn():
    metrics = pytest.importorskip("sklearn.metrics")
    rng = np.random.default_rng(1)
    gold, pred = rng.integers(0, 6, 300), rng.integers(0, 4, 300)
    r = classification_report(gold, pred, 8)
    assert r.f1_macro == pytest.approx(metrics.f1_score(gold, pred, average="macro"), rel=1e-12)


def test_ties_go_to_lowest_index():
    assert argmax_predict(np.array([[0.4, 0.4, 0.2], [0.1, 0.45, 0.45]])).tolist() == [0, 1]


def test_empty_rejected():
    with pytest.raises(ValueError):
        classification_report([], [], 2)
