import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import expit

from auscult.errors import ArityMismatch, NonFiniteTarget, SingleClassTraining, TooFewRows
from auscult.models import (
    FeatureMatrix, ForestConfig, GbmConfig, Scaler, clip_and_standardize, impute_missing,
    predict_proba, predict_regression, train_gradient_boosting, train_random_forest,
)
from auscult.models import serialize
from auscult.models.tree import grow_classification_tree


def fm(X, y=None, groups=None, recordings=None, window_index=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    return FeatureMatrix(X, tuple(f"f{i}" for i in range(X.shape[1])),
                         np.arange(n) if groups is None else groups,
                         ["r"] * n if recordings is None else recordings,
                         np.arange(n) if window_index is None else window_index, y)


def blobs(rng, n=100, sep=4.0):
    X = np.vstack([rng.normal(0, 1, (n, 2)), rng.normal(sep, 1, (n, 2))])
    y = np.r_[np.zeros(n, int), np.ones(n, int)]
    return X, y


def test_impute_forward_fill_and_mean():
    m = fm([1.0, np.nan, 3.0], groups=[1, 1, 1])
    assert impute_missing(m).X[:, 0].tolist() == [1.0, 1.0, 3.0]
    m = fm([np.nan, 2.0, 4.0], groups=[1, 1, 1])
    assert impute_missing(m).X[:, 0].tolist() == [3.0, 2.0, 4.0]
    m = fm([1.0, 2.0])
    assert impute_missing(m) is m


def test_impute_respects_recording_and_window_order():
    # rows out of window order; second recording starts absent
    m = fm([np.nan, 5.0, 1.0, np.nan], groups=[1, 1, 1, 1], recordings=["a", "a", "b", "b"],
           window_index=[1, 0, 0, 1])
    X = impute_missing(m).X[:, 0]
    assert X.tolist() == [5.0, 5.0, 1.0, 1.0]
    m = fm([np.nan, 7.0], groups=[1, 2], recordings=["a", "b"])
    assert impute_missing(m).X[0, 0] == 7.0


def test_impute_absent_column(caplog):
    m = fm(np.column_stack([[np.nan, np.nan], [1.0, 2.0]]))
    with caplog.at_level(logging.WARNING):
        X = impute_missing(m).X
    assert X[:, 0].tolist() == [0.0, 0.0]
    assert "entirely absent" in caplog.text


def test_impute_with_supplied_means():
    m = fm([np.nan, 2.0], groups=[1, 1])
    assert impute_missing(m, means=np.array([9.0])).X[0, 0] == 9.0


def test_clip_crafted_outlier():
    col = np.r_[np.zeros(99), 1000.0]
    # hand values: mean 10, population variance 1000^2/100 - 10^2 = 9900
    mu, sigma = 10.0, np.sqrt(9900.0)
    s = Scaler.fit(col[:, None])
    assert s.upper[0] == pytest.approx(mu + 5 * sigma)
    clipped = np.minimum(col, mu + 5 * sigma)
    z = (clipped - clipped.mean()) / clipped.std()
    _, out = clip_and_standardize(fm(col), fm(col))
    assert np.allclose(out.X[:, 0], z)


def test_standardized_train_moments(rng):
    X = np.column_stack([rng.normal(3, 2, 200), rng.exponential(1, 200), np.full(200, 4.0)])
    _, out = clip_and_standardize(fm(X), fm(X))
    assert np.allclose(out.X[:, :2].mean(axis=0), 0, atol=1e-9)
    assert np.allclose(out.X[:, :2].std(axis=0), 1, atol=1e-9)
    assert np.all(out.X[:, 2] == 4.0)


def test_scaler_ignores_apply_rows(rng):
    X = rng.normal(size=(50, 3))
    s1, _ = clip_and_standardize(fm(X), fm(np.full((5, 3), 1e9)))
    s2, _ = clip_and_standardize(fm(X), fm(np.full((5, 3), -1e9)))
    assert all(np.array_equal(getattr(s1, k), getattr(s2, k)) for k in ("lower", "upper", "mean", "std"))


def test_forest_blobs_oob(rng):
    X, y = blobs(rng)
    model = train_random_forest(fm(X, y), ForestConfig(seed=1))
    assert model.oob_score >= 0.95
    assert len(model.trees) == 100 and model.feature_subsample == 1


def test_forest_fits_separable_training_data(rng):
    X = rng.uniform(size=(80, 3))
    y = (X[:, 0] > 0.5).astype(int)
    model = train_random_forest(fm(X, y))
    assert np.mean(predict_proba(model, X).argmax(axis=1) == y) == 1.0


def test_forest_errors(rng):
    with pytest.raises(SingleClassTraining):
        train_random_forest(fm(rng.normal(size=(20, 2)), np.zeros(20, int)))
    with pytest.raises(TooFewRows):
        train_random_forest(fm(rng.normal(size=(5, 2)), np.array([0, 1, 0, 1, 0])))


def test_single_tree_forest_is_leaf_distribution(rng):
    X, y = blobs(rng, 30, sep=1.0)
    model = train_random_forest(fm(X, y), ForestConfig(n_trees=1, max_depth=2))
    t = model.trees[0]
    assert np.allclose(model.predict_proba(X), t.value[t.apply(X)])
    assert t.depth() <= 2


def test_midpoint_threshold_and_tie_break():
    X = np.column_stack([[1.0, 2, 3, 4], [1.0, 2, 3, 4]])
    y = np.array([0, 0, 1, 1])
    t = grow_classification_tree(X, y, np.ones(4), 2, 2, np.random.default_rng(0))
    assert t.feature[0] == 0 and t.threshold[0] == 2.5


def test_single_tree_row_permutation_invariance(rng):
    X = rng.normal(size=(60, 4))
    y = (X[:, 0] + X[:, 1] > 0).astype(int)
    cfg = ForestConfig(n_trees=1, bootstrap=False, max_features=4)
    a = train_random_forest(fm(X, y), cfg)
    perm = rng.permutation(60)
    b = train_random_forest(fm(X[perm], y[perm]), cfg)
    probe = rng.normal(size=(100, 4))
    assert np.array_equal(a.predict_proba(probe), b.predict_proba(probe))


def test_gbm_regression_square():
    x = np.round(np.arange(-2, 2.0001, 0.1), 10)
    model = train_gradient_boosting(fm(x, x ** 2), regression=True)
    pred = predict_regression(model, x[:, None])
    assert np.mean(np.abs(pred - x ** 2)) <= 0.05
    zero = train_gradient_boosting(fm(x, x ** 2), GbmConfig(n_stages=0), regression=True)
    assert np.allclose(zero.predict_regression(x[:, None]), np.mean(x ** 2))


def test_gbm_zero_stages_prior_and_sigmoid(rng):
    X, y = blobs(rng, 40)
    y[:10] = 1  # prior 0.625
    model = train_gradient_boosting(fm(X, y), GbmConfig(n_stages=0))
    p = model.predict_proba(X)
    assert np.allclose(p[:, 1], np.mean(y))
    assert np.allclose(p[:, 1], expit(model.base_score[0]))


def test_gbm_monotone_loss(rng):
    X, y = blobs(rng, 60, sep=1.5)
    model = train_gradient_boosting(fm(X, y))
    # allow round-off once the fit has converged
    assert np.all(np.diff(model.train_loss) <= 1e-12)
    model = train_gradient_boosting(fm(X, np.r_[y[:60], y[60:] + (X[60:, 0] > 1.5)]))
    assert model.n_classes == 3
    assert np.all(np.diff(model.train_loss) <= 1e-12)


def test_gbm_errors(rng):
    with pytest.raises(NonFiniteTarget):
        train_gradient_boosting(fm(rng.normal(size=(20, 1)), np.r_[np.ones(19), np.nan]), regression=True)
    with pytest.raises(SingleClassTraining):
        train_gradient_boosting(fm(rng.normal(size=(20, 1)), np.ones(20, int)))


@given(seed=st.integers(0, 1000), n_classes=st.integers(2, 4), kind=st.sampled_from(["forest", "gbm"]))
@settings(max_examples=15, deadline=None)
def test_probabilities_sum_to_one(seed, n_classes, kind):
    r = np.random.default_rng(seed)
    X = r.normal(size=(40, 3))
    y = np.r_[np.arange(n_classes), r.integers(0, n_classes, 40 - n_classes)]
    m = fm(X, y)
    model = (train_random_forest(m, ForestConfig(n_trees=5)) if kind == "forest"
             else train_gradient_boosting(m, GbmConfig(n_stages=5)))
    p = predict_proba(model, r.normal(size=(30, 3)))
    assert p.shape == (30, n_classes)
    assert np.all(np.abs(p.sum(axis=1) - 1) <= 1e-9)


def test_arity_mismatch(rng):
    X, y = blobs(rng, 20)
    for model in (train_random_forest(fm(X, y), ForestConfig(n_trees=3)), train_gradient_boosting(fm(X, y))):
        with pytest.raises(ArityMismatch):
            model.predict_proba(np.zeros((2, 3)))


def test_duplicate_rows_same_prediction(rng):
    x = rng.normal(size=30)
    model = train_gradient_boosting(fm(x, x ** 2), regression=True)
    p = model.predict_regression(np.array([[0.3], [0.3]]))
    assert p[0] == p[1] and np.all(np.isfinite(p))


def test_determinism_and_serialization(rng):
    X, y = blobs(rng, 50, sep=1.0)
    m = fm(X, y)
    a = train_random_forest(m, ForestConfig(n_trees=10, seed=3))
    b = train_random_forest(m, ForestConfig(n_trees=10, seed=3))
    assert serialize.dumps(a) == serialize.dumps(b)
    probe = rng.normal(size=(50, 2))
    scaler = Scaler.fit(X)
    for model in (a, train_gradient_boosting(m, GbmConfig(n_stages=10)),
                  train_gradient_boosting(fm(X, X[:, 0] * 2), regression=True)):
        back, sc, meta = serialize.loads(serialize.dumps(model, scaler, task="t"))
        assert meta == {"task": "t"} and np.array_equal(sc.std, scaler.std)
        f = "predict_regression" if getattr(model, "loss", None) and model.loss.value == "squared" else "predict_proba"
        assert np.array_equal(getattr(back, f)(probe), getattr(model, f)(probe))


def test_forest_jobs_do_not_change_result(rng):
    X, y = blobs(rng, 30, sep=1.0)
    a = train_random_forest(fm(X, y), ForestConfig(n_trees=6, seed=5), jobs=1)
    b = train_random_forest(fm(X, y), ForestConfig(n_trees=6, seed=5), jobs=2)
    assert serialize.dumps(a) == serialize.dumps(b)
