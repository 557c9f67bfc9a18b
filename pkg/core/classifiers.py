"""
k-nearest neighbours and Gaussian naive Bayes classifiers.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed
from scipy.spatial.distance import cdist
from scipy.special import logsumexp
from sklearn.model_selection import StratifiedKFold

from core.errors import (
    EmptyClass,
    EmptyTraining,
    InvalidParams,
    KTooLarge,
    WidthMismatch,
)
from core.features import FeatureMatrix
from core.parallel import resolve_n_jobs

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
DEFAULT_K = 5
TUNE_K_CANDIDATES = tuple(range(1, 16, 2))
VAR_FLOOR_FACTOR = 1e-9
QUERY_CHUNK = 256


def _query_rows(rows: Union[FeatureMatrix, np.ndarray], width: int) -> np.ndarray:
    X = rows.X if isinstance(rows, FeatureMatrix) else np.asarray(rows, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != width:
        raise WidthMismatch(width, X.shape[1])
    return X


@dataclass
class KnnModel:
    """
    Stored training rows for brute-force neighbour search.

    rows are already standardised with mean/std from the training fold;
    features with zero spread are left out of the distance (active=False).
    """

    rows: np.ndarray
    labels: np.ndarray
    k: int
    mean: np.ndarray
    std: np.ndarray
    active: np.ndarray
    classes: np.ndarray
    standardize: bool = True
    feature_names: Tuple[str, ...] = field(default_factory=tuple)

    @property
    def n_features(self) -> int:
        return int(self.mean.shape[0])

    def transform(self, X: np.ndarray) -> np.ndarray:
        return ((X - self.mean) / self.std)[:, self.active]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "format_version": FORMAT_VERSION,
            "kind": "knn",
            "k": self.k,
            "standardize": self.standardize,
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "active": self.active.tolist(),
            "classes": self.classes.tolist(),
            "labels": self.labels.tolist(),
            "rows": self.rows.tolist(),
            "feature_names": list(self.feature_names),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "KnnModel":
        if data.get("format_version") != FORMAT_VERSION:
            raise InvalidParams(f"Unsupported model format version {data.get('format_version')!r}")
        n_active = int(np.sum(data["active"]))
        return cls(
            rows=np.asarray(data["rows"], dtype=np.float64).reshape(-1, n_active),
            labels=np.asarray(data["labels"], dtype=np.int64),
            k=int(data["k"]),
            mean=np.asarray(data["mean"], dtype=np.float64),
            std=np.asarray(data["std"], dtype=np.float64),
            active=np.asarray(data["active"], dtype=bool),
            classes=np.asarray(data["classes"], dtype=np.int64),
            standardize=bool(data["standardize"]),
            feature_names=tuple(data.get("feature_names", ())),
        )


def fit_knn(train: FeatureMatrix, k: int = DEFAULT_K, standardize: bool = True) -> KnnModel:
    """
    Store the training fold for k-NN prediction

    Args:
        train: Training matrix
        k: Number of neighbours, 1 <= k <= number of training rows
        standardize: z-score every feature with training-fold statistics

    Returns:
        KnnModel ready for predict_knn
    """
    n = len(train)
    if n == 0:
        raise EmptyTraining("Cannot fit k-NN on an empty training set")
    if k < 1:
        raise InvalidParams(f"k must be >= 1, got {k}")
    if k > n:
        raise KTooLarge(f"k={k} exceeds the {n} training rows")

    X = train.X
    if standardize:
        mean = X.mean(axis=0)
        std = X.std(axis=0)
    else:
        mean = np.zeros(X.shape[1])
        std = np.ones(X.shape[1])
    active = np.ptp(X, axis=0) > 0
    if not active.all():
        constant = [train.names[i] for i in np.flatnonzero(~active)]
        logger.warning(f"Excluding {len(constant)} constant feature(s) from k-NN distance: "
                       f"{', '.join(constant[:10])}{' ...' if len(constant) > 10 else ''}")
    std = np.where(active, std, 1.0)

    model = KnnModel(
        rows=np.empty((0, 0)),
        labels=train.labels.copy(),
        k=k,
        mean=mean,
        std=std,
        active=active,
        classes=np.unique(train.labels),
        standardize=standardize,
        feature_names=train.names,
    )
    model.rows = model.transform(X)
    return model


def _vote_chunk(model: KnnModel, Q: np.ndarray) -> np.ndarray:
    dist = np.sqrt(cdist(Q, model.rows, metric="sqeuclidean"))
    # stable sort: equal distances keep training-row order
    nearest = np.argsort(dist, axis=1, kind="stable")[:, :model.k]
    nb_dist = np.take_along_axis(dist, nearest, axis=1)
    nb_class = np.searchsorted(model.classes, model.labels[nearest])

    n_q, n_classes = Q.shape[0], model.classes.shape[0]
    votes = np.zeros((n_q, n_classes), dtype=np.int64)
    dsum = np.zeros((n_q, n_classes), dtype=np.float64)
    rows = np.repeat(np.arange(n_q), model.k)
    np.add.at(votes, (rows, nb_class.ravel()), 1)
    np.add.at(dsum, (rows, nb_class.ravel()), nb_dist.ravel())

    # most votes, then smallest summed distance, then smallest label code
    leading = votes == votes.max(axis=1, keepdims=True)
    return model.classes[np.argmin(np.where(leading, dsum, np.inf), axis=1)]


def predict_knn(model: KnnModel, rows: Union[FeatureMatrix, np.ndarray], n_jobs: Optional[int] = 1) -> np.ndarray:
    """
    Majority vote of the k nearest training rows (Euclidean distance)

    Vote ties go to the class with the smaller summed distance, then to
    the smaller label code.

    Returns:
        Array of label codes
    """
    X = _query_rows(rows, model.n_features)
    if X.shape[0] == 0:
        return np.empty(0, dtype=np.int64)
    Q = model.transform(X)
    if Q.shape[1] == 0:
        Q = np.zeros((Q.shape[0], 0))

    chunks = [Q[i:i + QUERY_CHUNK] for i in range(0, Q.shape[0], QUERY_CHUNK)]
    workers = min(resolve_n_jobs(n_jobs), len(chunks))
    if workers == 1:
        parts = [_vote_chunk(model, c) for c in chunks]
    else:
        parts = Parallel(n_jobs=workers, prefer="threads")(delayed(_vote_chunk)(model, c) for c in chunks)
    return np.concatenate(parts)


def tune_k(train: FeatureMatrix, candidates: Iterable[int] = TUNE_K_CANDIDATES, folds: int = 3,
           seed: int = 0, standardize: bool = True) -> int:
    """
    Pick k by inner stratified cross-validation on the training fold

    Ties in mean accuracy go to the smaller k.

    Returns:
        The chosen k
    """
    candidates = sorted(set(int(k) for k in candidates))
    _, class_sizes = np.unique(train.labels, return_counts=True)
    folds = min(folds, int(class_sizes.min()))
    if folds < 2:
        logger.warning(f"Too few samples per class to tune k; using k={DEFAULT_K}")
        return min(DEFAULT_K, len(train))

    splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
    scores = {k: [] for k in candidates}
    for train_idx, test_idx in splitter.split(train.X, train.labels):
        inner_train, inner_test = train.take(train_idx), train.take(test_idx)
        for k in candidates:
            if k > len(inner_train):
                continue
            model = fit_knn(inner_train, k, standardize)
            scores[k].append(float(np.mean(predict_knn(model, inner_test) == inner_test.labels)))

    mean_scores = {k: float(np.mean(v)) for k, v in scores.items() if v}
    best = max(mean_scores, key=lambda k: (mean_scores[k], -k))
    logger.info(f"Inner CV picked k={best} (accuracy {mean_scores[best]:.4f})")
    return best


@dataclass
class GnbModel:
    """Per-class priors plus per-class, per-feature Gaussian mean and variance"""

    classes: np.ndarray
    priors: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    var_floor: float
    feature_names: Tuple[str, ...] = field(default_factory=tuple)

    @property
    def n_features(self) -> int:
        return int(self.means.shape[1])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "format_version": FORMAT_VERSION,
            "kind": "gaussian_nb",
            "classes": self.classes.tolist(),
            "priors": self.priors.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
            "var_floor": self.var_floor,
            "feature_names": list(self.feature_names),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "GnbModel":
        if data.get("format_version") != FORMAT_VERSION:
            raise InvalidParams(f"Unsupported model format version {data.get('format_version')!r}")
        return cls(
            classes=np.asarray(data["classes"], dtype=np.int64),
            priors=np.asarray(data["priors"], dtype=np.float64),
            means=np.asarray(data["means"], dtype=np.float64),
            variances=np.asarray(data["variances"], dtype=np.float64),
            var_floor=float(data["var_floor"]),
            feature_names=tuple(data.get("feature_names", ())),
        )


def fit_gnb(train: FeatureMatrix, classes: Optional[Sequence[int]] = None) -> GnbModel:
    """
    Maximum-likelihood Gaussian naive Bayes

    Variances are floored at 1e-9 times the mean per-feature variance of
    the whole training set.

    Args:
        train: Training matrix
        classes: Label codes that must each have at least one sample
            (defaults to the labels present)

    Returns:
        GnbModel
    """
    if len(train) == 0:
        raise EmptyTraining("Cannot fit Gaussian NB on an empty training set")
    present, counts = np.unique(train.labels, return_counts=True)
    wanted = present if classes is None else np.unique(np.asarray(classes, dtype=np.int64))
    missing = sorted(set(wanted.tolist()) - set(present.tolist()))
    if missing:
        raise EmptyClass(f"No training samples for class(es) {missing}")

    X = train.X
    overall = X.var(axis=0).mean() if X.shape[1] else 0.0
    var_floor = VAR_FLOOR_FACTOR * overall if overall > 0 else VAR_FLOOR_FACTOR

    means = np.empty((wanted.shape[0], X.shape[1]))
    variances = np.empty_like(means)
    priors = np.empty(wanted.shape[0])
    for i, code in enumerate(wanted):
        Xc = X[train.labels == code]
        means[i] = Xc.mean(axis=0)
        variances[i] = np.maximum(Xc.var(axis=0), var_floor)
        priors[i] = Xc.shape[0]
    priors /= priors.sum()

    return GnbModel(wanted, priors, means, variances, float(var_floor), train.names)


def joint_log_likelihood(model: GnbModel, X: np.ndarray) -> np.ndarray:
    """log prior + sum of per-feature log Gaussian densities, shape (n, classes)"""
    log_norm = -0.5 * np.log(2.0 * np.pi * model.variances).sum(axis=1)
    jll = np.empty((X.shape[0], model.classes.shape[0]))
    for i in range(model.classes.shape[0]):
        z = (X - model.means[i]) ** 2 / model.variances[i]
        jll[:, i] = np.log(model.priors[i]) + log_norm[i] - 0.5 * z.sum(axis=1)
    return jll


def predict_gnb(model: GnbModel, rows: Union[FeatureMatrix, np.ndarray]) -> np.ndarray:
    """
    Maximum a-posteriori class; ties go to the smaller label code

    Returns:
        Array of label codes
    """
    X = _query_rows(rows, model.n_features)
    return model.classes[np.argmax(joint_log_likelihood(model, X), axis=1)]


def predict_proba_gnb(model: GnbModel, rows: Union[FeatureMatrix, np.ndarray]) -> np.ndarray:
    """Posterior class probabilities, columns in model.classes order"""
    X = _query_rows(rows, model.n_features)
    jll = joint_log_likelihood(model, X)
    return np.exp(jll - logsumexp(jll, axis=1, keepdims=True))
