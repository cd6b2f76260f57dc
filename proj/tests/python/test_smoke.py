import json

import numpy as np
import pytest

dyncart = pytest.importorskip("dyncart")


def test_generators_and_ncar():
    ds = dyncart.gen_binary_synthetic(500, 3)
    assert len(ds) == 500
    assert ds.X.shape == (500, 2)
    assert ds.num_classes == 2
    noisy = dyncart.inject_ncar(ds, 0.1, 1)
    assert noisy.noisy_count() == 50
    assert int(noisy.noise_mask.sum()) == 50
    assert int((noisy.y != ds.y).sum()) == 50
    assert noisy.provenance["noise"]["type"] == "ncar"


def test_nnar_pairs_are_even():
    ds = dyncart.gen_multiclass_synthetic(1000, 2)
    noisy = dyncart.inject_nnar(ds, 0.1, seed=4)
    assert noisy.noisy_count() == 100


def test_fit_dynamics_and_serialization():
    ds = dyncart.gen_binary_synthetic(400, 5)
    model = dyncart.fit(ds.X, ds.y, num_iterations=20, max_depth=3)
    p = model.predict_proba(ds.X)
    assert p.shape == (400, 2)
    np.testing.assert_allclose(p.sum(axis=1), 1.0)
    np.testing.assert_array_equal(model.predict_proba_at(ds.X, 20), p)
    back = dyncart.Ensemble.deserialize(model.serialize())
    np.testing.assert_array_equal(back.predict_proba(ds.X), p)

    d = dyncart.compute_dynamics(model, ds.X, ds.y)
    assert d["iterations"] == 20
    for key in ("mu", "sigma", "correctness", "product"):
        assert d[key].shape == (400,)
        assert ((d[key] >= 0) & (d[key] <= 1)).all()
    np.testing.assert_allclose(d["product"], d["correctness"] * d["mu"])


def test_learn_weights_and_threshold():
    ds = dyncart.inject_ncar(dyncart.gen_binary_synthetic(600, 1), 0.1, 2)
    w = dyncart.learn_weights(ds.X, ds.y, rounds=3)
    assert w.shape == (3, 600)
    assert (np.diff(w, axis=0) <= 0).all()
    threshold, fallback = dyncart.auto_valley_threshold(w[-1])
    assert 0.0 <= threshold <= 1.0
    assert isinstance(fallback, bool)
    score = dyncart.detection_score(list(w[-1] < threshold), list(ds.noise_mask))
    assert 0.0 <= score["fpr"] <= 1.0


def test_pr_auc_perfect_ranking():
    assert dyncart.pr_auc([False, True, False, True], np.array([0.1, 0.9, 0.2, 0.8])) == 1.0


def test_errors_surface_as_exceptions():
    ds = dyncart.gen_binary_synthetic(200, 1)
    with pytest.raises(dyncart.DyncartError, match="degenerate labels"):
        dyncart.fit(ds.X, np.zeros(200, dtype=int))
    with pytest.raises(dyncart.DyncartError):
        dyncart.inject_ncar(ds, 1.5)


def test_run_experiment_small():
    report = dyncart.run_experiment(
        {"dataset": "binary", "n": 600, "rate": 0.1, "methods": ["weight_threshold"], "tune_budget": 1, "rounds": 3}
    )
    json.dumps(report)
    assert report["noisy_rows"] == {"train": 48, "validation": 6, "test": 0}
    assert report["methods"][0]["method"] == "weight_threshold"
