import numpy as np
import pytest

from soapnas import cellspace as cs
from soapnas import gbpredictor as gb
from soapnas.errors import (
    BadConfig,
    DimensionMismatch,
    FormatError,
    InsufficientData,
    ShapeMismatch,
)
from soapnas.rng import root


def exhaustive_stump_oracle(x, y, min_leaf):
    """Try every (feature, midpoint) split; return the best SSE split."""
    n = len(y)
    best = None
    for j in range(x.shape[1]):
        xs = np.sort(np.unique(x[:, j]))
        for a, b in zip(xs[:-1], xs[1:]):
            thr = 0.5 * (a + b)
            mask = x[:, j] <= thr
            nl, nr = int(mask.sum()), int((~mask).sum())
            if nl < min_leaf or nr < min_leaf:
                continue
            sse = ((y[mask] - y[mask].mean()) ** 2).sum() + (
                (y[~mask] - y[~mask].mean()) ** 2
            ).sum()
            if best is None or sse < best[0] - 1e-12:
                best = (sse, j, thr, y[mask].mean(), y[~mask].mean())
    return best


def test_constant_targets_yield_base_only():
    x = np.arange(12, dtype=float).reshape(6, 2)
    y = np.full(6, 0.7)
    model, losses = gb.fit(x, y, gb.PredictorHyper(n_trees=5))
    preds = gb.predict(model, x)
    np.testing.assert_allclose(preds, 0.7, atol=1e-12)
    assert max(losses) <= 1e-24


def test_single_stump_matches_cluster_means():
    # two clusters separable on feature 0; 1 tree, depth 1, shrinkage 1
    x = np.array([[0.0, 5.0], [0.1, -3.0], [1.0, 2.0], [1.1, 9.0]])
    y = np.array([0.2, 0.3, 0.8, 0.9])
    hyper = gb.PredictorHyper(n_trees=1, max_depth=1, shrinkage=1.0, min_samples_leaf=2)
    model, _ = gb.fit(x, y, hyper)
    preds = gb.predict(model, x)
    np.testing.assert_allclose(preds[:2], 0.25, atol=1e-12)
    np.testing.assert_allclose(preds[2:], 0.85, atol=1e-12)


def test_stump_matches_exhaustive_best_split_oracle():
    rng = root(1).child("stump").generator()
    for trial in range(20):
        n = int(rng.integers(6, 25))
        x = rng.normal(size=(n, 3))
        y = rng.normal(size=n)
        hyper = gb.PredictorHyper(n_trees=1, max_depth=1, shrinkage=1.0, min_samples_leaf=2)
        model, _ = gb.fit(x, y, hyper)
        root_node = model.trees[0].nodes[0]
        oracle = exhaustive_stump_oracle(x, y - y.mean(), 2)
        if oracle is None:
            assert root_node.is_leaf
            continue
        _, j, thr, left_mean, right_mean = oracle
        assert root_node.feature == j
        assert abs(root_node.threshold - thr) <= 1e-12
        left = model.trees[0].nodes[root_node.left]
        right = model.trees[0].nodes[root_node.right]
        assert abs(left.value - left_mean) <= 1e-9
        assert abs(right.value - right_mean) <= 1e-9


def test_training_mse_non_increasing_on_random_data():
    rng = root(2).child("mse").generator()
    for trial in range(20):
        n = int(rng.integers(10, 40))
        x = rng.normal(size=(n, 4))
        y = rng.normal(size=n)
        _, losses = gb.fit(x, y, gb.PredictorHyper(n_trees=30))
        diffs = np.diff(losses)
        assert np.all(diffs <= 1e-12), f"trial {trial}: MSE increased"


def test_overfit_consistency_on_training_points():
    rng = root(3).child("overfit").generator()
    x = rng.normal(size=(12, 3))
    y = rng.uniform(0, 1, size=12)
    hyper = gb.PredictorHyper(n_trees=400, max_depth=8, shrinkage=0.5, min_samples_leaf=1)
    model, losses = gb.fit(x, y, hyper)
    np.testing.assert_allclose(gb.predict(model, x), y, atol=1e-6)
    assert losses[-1] <= 1e-12


def test_empty_ensemble_returns_base():
    model = gb.PredictorModel(base=0.4, shrinkage=0.1, n_features=2)
    np.testing.assert_allclose(gb.predict(model, np.zeros((3, 2))), 0.4)


def test_predict_deterministic_and_dimension_checked():
    rng = root(4).child("det").generator()
    x = rng.normal(size=(15, 3))
    y = rng.normal(size=15)
    model, _ = gb.fit(x, y, gb.PredictorHyper(n_trees=10))
    p1 = gb.predict(model, x)
    p2 = gb.predict(model, x)
    assert np.array_equal(p1, p2)
    with pytest.raises(DimensionMismatch):
        gb.predict(model, np.zeros((2, 5)))


def test_predictions_within_target_range():
    rng = root(5).child("range").generator()
    for _ in range(10):
        x = rng.normal(size=(20, 3))
        y = rng.uniform(0.3, 0.9, size=20)
        model, _ = gb.fit(x, y, gb.PredictorHyper(n_trees=50))
        preds = gb.predict(model, rng.normal(size=(30, 3)))
        assert preds.min() >= y.min() - 1e-9
        assert preds.max() <= y.max() + 1e-9


def test_fit_invariant_under_training_permutation():
    rng = root(6).child("perm").generator()
    x = rng.normal(size=(18, 3))
    y = rng.normal(size=18)
    model_a, _ = gb.fit(x, y, gb.PredictorHyper(n_trees=20))
    perm = rng.permutation(18)
    model_b, _ = gb.fit(x[perm], y[perm], gb.PredictorHyper(n_trees=20))
    probe = rng.normal(size=(25, 3))
    np.testing.assert_allclose(gb.predict(model_a, probe), gb.predict(model_b, probe), atol=1e-9)


def test_fit_errors():
    with pytest.raises(ShapeMismatch):
        gb.fit(np.zeros((3, 2)), np.zeros(4), gb.PredictorHyper())
    with pytest.raises(InsufficientData):
        gb.fit(np.zeros((1, 2)), np.zeros(1), gb.PredictorHyper())
    with pytest.raises(BadConfig):
        gb.PredictorHyper(n_trees=0)


def test_cross_validate_linear_function():
    # noiseless linear target of one feature is easy to rank
    from soapnas.soapcore import PerfRecord

    space = cs.SpaceConfig()
    archs = list(cs.enumerate_unique(cs.SpaceConfig(max_nodes=4)))[:60]
    vecs = np.stack([cs.encode_features(a, space) for a in archs])
    # the most balanced single coordinate over these cells
    balance = np.abs(vecs.mean(axis=0) - 0.5)
    j = int(np.argmin(balance))
    records = [
        PerfRecord(
            arch_hash=cs.arch_hash(a, space),
            arch=cs.serialize(a),
            auc=0.4 + 0.4 * float(vecs[i, j]),
            source="test",
        )
        for i, a in enumerate(archs)
    ]
    stats = gb.cross_validate(records, folds=4, hyper=gb.PredictorHyper(seed=3), space=space)
    assert stats.mean_pearson >= 0.99
    assert len(stats.folds) == 4


def test_cross_validate_insufficient_data():
    from soapnas.soapcore import PerfRecord

    space = cs.SpaceConfig()
    arch = cs.CellArchitecture(2, ((0, 1),), ())
    records = [
        PerfRecord(arch_hash=str(i), arch=cs.serialize(arch), auc=0.5 + i / 10, source="t")
        for i in range(2)
    ]
    with pytest.raises(InsufficientData):
        gb.cross_validate(records, folds=2, hyper=gb.PredictorHyper(), space=space)


def test_model_round_trip(tmp_path):
    rng = root(7).child("io").generator()
    x = rng.normal(size=(20, 4))
    y = rng.uniform(0, 1, size=20)
    model, _ = gb.fit(x, y, gb.PredictorHyper(n_trees=15))
    path = tmp_path / "model.txt"
    gb.save_model(model, path)
    loaded = gb.load_model(path)
    probe = rng.normal(size=(10, 4))
    np.testing.assert_array_equal(gb.predict(model, probe), gb.predict(loaded, probe))
    path2 = tmp_path / "model2.txt"
    gb.save_model(loaded, path2)
    assert path.read_text() == path2.read_text()


def test_model_load_rejects_malformed(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("not a model\n")
    with pytest.raises(FormatError):
        gb.load_model(path)
    path.write_text(gb.MODEL_HEADER + "\nn_features 2\nbase x\n")
    with pytest.raises(FormatError):
        gb.load_model(path)
