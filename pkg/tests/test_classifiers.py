import json
import logging

import numpy as np
import pytest
from scipy.stats import norm

from core.classifiers import (
    GnbModel,
    KnnModel,
    fit_gnb,
    fit_knn,
    joint_log_likelihood,
    predict_gnb,
    predict_knn,
    predict_proba_gnb,
    tune_k,
)
from core.errors import EmptyClass, EmptyTraining, InvalidParams, KTooLarge, WidthMismatch
from core.features import FeatureMatrix


def _matrix(X, y, names=None):
    X = np.asarray(X, dtype=np.float64).reshape(len(y), -1)
    names = names or tuple(f"x{i}" for i in range(X.shape[1]))
    return FeatureMatrix(X=X, names=names, labels=y)


# k-NN

def test_k1_reproduces_training_labels(separable_matrix):
    model = fit_knn(separable_matrix, k=1)
    np.testing.assert_array_equal(predict_knn(model, separable_matrix), separable_matrix.labels)


def test_three_neighbour_vote():
    model = fit_knn(_matrix([-1.0, -0.9, 1.0], [1, 1, 2]), k=3)
    assert predict_knn(model, np.array([[-0.95]]))[0] == 1


def test_vote_tie_goes_to_closer_class():
    model = fit_knn(_matrix([0.0, 3.0], [5, 2]), k=2)
    assert predict_knn(model, np.array([[1.0]]))[0] == 5
    assert predict_knn(model, np.array([[2.0]]))[0] == 2


def test_vote_and_distance_tie_goes_to_smaller_label():
    model = fit_knn(_matrix([0.0, 2.0], [5, 2]), k=2)
    assert predict_knn(model, np.array([[1.0]]))[0] == 2


def test_k_equal_to_training_size_predicts_plurality():
    train = _matrix([0.0, 0.1, 0.2, 5.0, 5.1], [1, 1, 1, 2, 2])
    model = fit_knn(train, k=5)
    np.testing.assert_array_equal(predict_knn(model, np.array([[5.0], [-3.0], [9.0]])), [1, 1, 1])


def test_even_k_is_accepted():
    model = fit_knn(_matrix([0.0, 1.0, 2.0, 3.0], [1, 1, 2, 2]), k=2)
    assert model.k == 2


def test_scaling_features_leaves_predictions_unchanged(separable_matrix):
    queries = separable_matrix.X[::7] + 0.3
    base = predict_knn(fit_knn(separable_matrix, k=5), queries)
    scaled_train = FeatureMatrix(separable_matrix.X * 250.0, separable_matrix.names, separable_matrix.labels)
    scaled = predict_knn(fit_knn(scaled_train, k=5), queries * 250.0)
    np.testing.assert_array_equal(base, scaled)


def test_constant_feature_is_excluded(caplog):
    train = _matrix([[0.0, 7.0], [1.0, 7.0], [5.0, 7.0], [6.0, 7.0]], [1, 1, 2, 2], ("a", "flat"))
    with caplog.at_level(logging.WARNING):
        model = fit_knn(train, k=1)
    assert "constant" in caplog.text
    assert model.active.tolist() == [True, False]
    # a huge value in the excluded column does not move the query
    assert predict_knn(model, np.array([[0.2, 1e9]]))[0] == 1


def test_knn_errors():
    train = _matrix([0.0, 1.0], [1, 2])
    with pytest.raises(KTooLarge):
        fit_knn(train, k=3)
    with pytest.raises(InvalidParams):
        fit_knn(train, k=0)
    with pytest.raises(EmptyTraining):
        fit_knn(FeatureMatrix(np.empty((0, 1)), ("x",), []), k=1)
    with pytest.raises(WidthMismatch):
        predict_knn(fit_knn(train, k=1), np.zeros((1, 2)))


def test_knn_prediction_is_thread_count_independent(separable_matrix, monkeypatch):
    monkeypatch.setenv("EMGKIT_THREADS", "3")
    model = fit_knn(separable_matrix, k=7)
    queries = np.vstack([separable_matrix.X] * 2) + 0.5
    np.testing.assert_array_equal(predict_knn(model, queries, n_jobs=1), predict_knn(model, queries, n_jobs=3))


def test_knn_round_trip(separable_matrix):
    model = fit_knn(separable_matrix, k=3)
    restored = KnnModel.from_dict(json.loads(json.dumps(model.to_dict())))
    np.testing.assert_array_equal(predict_knn(restored, separable_matrix), predict_knn(model, separable_matrix))


def test_tune_k_is_deterministic_and_from_candidates(separable_matrix):
    a = tune_k(separable_matrix, candidates=(1, 3, 5), seed=9)
    b = tune_k(separable_matrix, candidates=(5, 3, 1), seed=9)
    assert a == b
    assert a in (1, 3, 5)


def test_tune_k_prefers_smaller_k_on_ties(separable_matrix):
    # perfectly separated data: every candidate scores 1.0
    far = FeatureMatrix(separable_matrix.X * 0.01 + separable_matrix.labels[:, None] * 100.0,
                        separable_matrix.names, separable_matrix.labels)
    assert tune_k(far, candidates=(3, 5, 7), seed=0) == 3


# Gaussian naive Bayes

def test_gnb_balanced_priors():
    model = fit_gnb(_matrix([0.0, 1.0, 5.0, 6.0], [1, 1, 2, 2]))
    np.testing.assert_allclose(model.priors, [0.5, 0.5])


def test_gnb_uses_ml_variance():
    model = fit_gnb(_matrix([0.0, 2.0, 5.0, 9.0], [1, 1, 2, 2]))
    np.testing.assert_allclose(model.means[:, 0], [1.0, 7.0])
    np.testing.assert_allclose(model.variances[:, 0], [1.0, 4.0])


def test_gnb_zero_variance_feature_is_floored():
    train = _matrix([[1.0, 0.0], [1.0, 1.0], [3.0, 5.0], [4.0, 6.0]], [1, 1, 2, 2])
    model = fit_gnb(train)
    assert model.variances[0, 0] == pytest.approx(model.var_floor)
    assert model.var_floor > 0
    assert np.all(np.isfinite(joint_log_likelihood(model, train.X)))


def test_gnb_decision_boundary_near_midpoint():
    rng = np.random.default_rng(0)
    x = np.concatenate([rng.normal(-3.0, 1.0, 500), rng.normal(3.0, 1.0, 500)])
    model = fit_gnb(_matrix(x, np.repeat([1, 2], 500)))
    grid = np.linspace(-2.0, 2.0, 4001)[:, None]
    pred = predict_gnb(model, grid)
    boundary = grid[np.argmax(pred == 2), 0]
    assert abs(boundary) < 0.3
    assert np.all(pred[grid[:, 0] < boundary] == 1)


def test_gnb_posterior_matches_density_product():
    train = _matrix([[0.0, 1.0], [1.0, 3.0], [2.0, 2.0], [4.0, 0.0], [5.0, 1.0]], [1, 1, 1, 2, 2])
    model = fit_gnb(train)
    q = np.array([2.5, 1.5])

    joint = []
    for i, code in enumerate((1, 2)):
        Xc = train.X[train.labels == code]
        density = np.prod(norm.pdf(q, loc=Xc.mean(axis=0), scale=Xc.std(axis=0)))
        joint.append(len(Xc) / len(train) * density)
    expected = np.array(joint) / sum(joint)

    np.testing.assert_allclose(predict_proba_gnb(model, q), expected[None, :], rtol=1e-9)


def test_gnb_query_at_class_mean():
    train = _matrix([-1.0, 1.0, 9.0, 11.0], [3, 3, 4, 4])
    assert predict_gnb(fit_gnb(train), np.array([[10.0]]))[0] == 4


def test_gnb_extreme_outlier_is_finite():
    model = fit_gnb(_matrix([0.0, 1.0, 5.0, 6.0], [1, 1, 2, 2]))
    jll = joint_log_likelihood(model, np.array([[1e150]]))
    assert not np.any(np.isnan(jll))
    assert predict_gnb(model, np.array([[1e150]]))[0] in (1, 2)


def test_gnb_missing_class():
    with pytest.raises(EmptyClass):
        fit_gnb(_matrix([0.0, 1.0], [1, 2]), classes=[1, 2, 3])


def test_gnb_round_trip(separable_matrix):
    model = fit_gnb(separable_matrix)
    restored = GnbModel.from_dict(json.loads(json.dumps(model.to_dict())))
    np.testing.assert_array_equal(predict_gnb(restored, separable_matrix), predict_gnb(model, separable_matrix))


def test_gnb_fits_axis_aligned_clusters(separable_matrix):
    model = fit_gnb(separable_matrix)
    assert (predict_gnb(model, separable_matrix) == separable_matrix.labels).mean() >= 0.95
