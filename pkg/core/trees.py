"""
CART core shared by the decision tree, random forest and extra-trees models.

Trees are stored as flat node arrays (feature, threshold, children, class
counts). A row goes to the left child when x[feature] < threshold. Splits
are chosen by Gini decrease; ties go to the lowest feature index, then the
lowest threshold.

Each tree owns its random stream, seeded with seed XOR tree_index, so the
result never depends on how trees are scheduled across workers.
"""
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed

from core.errors import (
    DegenerateData,
    EmptyNode,
    InvalidParams,
    UnfittedForest,
    WidthMismatch,
)
from core.features import FeatureMatrix
from core.parallel import resolve_n_jobs
from core.ranking import ImportanceRanking

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
KINDS = ("decision_tree", "random_forest", "extra_trees")
TIE_EPS = 1e-12
LEAF = -1


class EmptyImportanceWarning(UserWarning):
    """No tree in the forest made a split"""


def gini_impurity(class_counts: Union[Mapping[Any, int], Sequence[int], np.ndarray]) -> float:
    """
    Gini impurity 1 - sum(p_k^2) of a node

    Args:
        class_counts: Per-label counts, as a mapping or a sequence

    Returns:
        Impurity in [0, 1)
    """
    if isinstance(class_counts, Mapping):
        counts = np.fromiter(class_counts.values(), dtype=np.float64)
    else:
        counts = np.asarray(class_counts, dtype=np.float64)
    if np.any(counts < 0):
        raise InvalidParams("Class counts must be non-negative")
    total = counts.sum()
    if total <= 0:
        raise EmptyNode("Gini impurity of an empty node is undefined")
    p = counts / total
    return float(1.0 - np.dot(p, p))


def _gini_rows(counts: np.ndarray, totals: np.ndarray) -> np.ndarray:
    p = counts / totals[:, None]
    return 1.0 - (p * p).sum(axis=1)


@dataclass(frozen=True)
class TreeParams:
    """
    Hyperparameters shared by all tree models.

    max_features: None or "all" (every feature), "sqrt" (ceil(sqrt(d))),
    an int count, or a float fraction of d. bootstrap None means the
    model's own default (on for random forests, off otherwise).
    """

    n_trees: int = 100
    max_depth: Optional[int] = None
    min_samples_split: int = 2
    max_features: Union[None, str, int, float] = "sqrt"
    bootstrap: Optional[bool] = None

    def validate(self) -> None:
        if self.n_trees < 1:
            raise InvalidParams(f"n_trees must be >= 1, got {self.n_trees}")
        if self.max_depth is not None and self.max_depth < 0:
            raise InvalidParams(f"max_depth must be >= 0 or None, got {self.max_depth}")
        if self.min_samples_split < 2:
            raise InvalidParams(f"min_samples_split must be >= 2, got {self.min_samples_split}")
        mf = self.max_features
        if isinstance(mf, str) and mf not in ("sqrt", "all"):
            raise InvalidParams(f"max_features must be 'sqrt', 'all', a count or a fraction, got {mf!r}")
        if isinstance(mf, bool):
            raise InvalidParams("max_features cannot be a boolean")
        if isinstance(mf, int) and mf < 1:
            raise InvalidParams(f"max_features must be >= 1, got {mf}")
        if isinstance(mf, float) and not 0.0 < mf <= 1.0:
            raise InvalidParams(f"max_features fraction must be in (0, 1], got {mf}")

    def resolve_max_features(self, n_features: int) -> int:
        mf = self.max_features
        if mf is None or mf == "all":
            return n_features
        if mf == "sqrt":
            return max(1, math.ceil(math.sqrt(n_features)))
        if isinstance(mf, float):
            return max(1, min(n_features, math.ceil(mf * n_features)))
        return max(1, min(n_features, int(mf)))

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TreeParams":
        known = {k: data[k] for k in ("n_trees", "max_depth", "min_samples_split", "max_features", "bootstrap") if k in data}
        params = cls(**known)
        params.validate()
        return params


@dataclass(frozen=True)
class Split:
    feature_index: int
    threshold: float
    left: "TreeNode"
    right: "TreeNode"
    impurity_decrease: float
    n_samples: int


@dataclass(frozen=True)
class Leaf:
    class_counts: Dict[int, int]


TreeNode = Union[Split, Leaf]


@dataclass
class Tree:
    """One fitted tree in flat-array form"""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    n_samples: np.ndarray
    impurity: np.ndarray
    impurity_decrease: np.ndarray
    class_counts: np.ndarray

    @property
    def node_count(self) -> int:
        return int(self.feature.shape[0])

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature == LEAF))

    def depth(self) -> int:
        depths = np.zeros(self.node_count, dtype=np.int64)
        for i in range(self.node_count):
            if self.feature[i] != LEAF:
                depths[self.left[i]] = depths[i] + 1
                depths[self.right[i]] = depths[i] + 1
        return int(depths.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf id reached by every row"""
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.flatnonzero(self.feature[node] != LEAF)
        while active.size:
            nd = node[active]
            go_left = X[active, self.feature[nd]] < self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = active[self.feature[node[active]] != LEAF]
        return node

    def leaf_votes(self, X: np.ndarray) -> np.ndarray:
        """Class index of the leaf majority for every row (ties -> lowest index)"""
        return np.argmax(self.class_counts[self.apply(X)], axis=1)

    def feature_importances(self, n_features: int) -> np.ndarray:
        """
        Sum of (n_node / n_root) * impurity_decrease per feature, normalised
        to 1; a tree with no splits gives a zero vector
        """
        imp = np.zeros(n_features, dtype=np.float64)
        splits = self.feature != LEAF
        if not splits.any():
            return imp
        weight = self.n_samples[splits] / float(self.n_samples[0])
        np.add.at(imp, self.feature[splits], weight * self.impurity_decrease[splits])
        total = imp.sum()
        return imp / total if total > 0 else imp

    def node(self, i: int, classes: Sequence[int]) -> TreeNode:
        if self.feature[i] == LEAF:
            return Leaf({int(c): int(n) for c, n in zip(classes, self.class_counts[i])})
        return Split(
            feature_index=int(self.feature[i]),
            threshold=float(self.threshold[i]),
            left=self.node(int(self.left[i]), classes),
            right=self.node(int(self.right[i]), classes),
            impurity_decrease=float(self.impurity_decrease[i]),
            n_samples=int(self.n_samples[i]),
        )

    def to_dict(self, i: int = 0) -> Dict[str, Any]:
        if self.feature[i] == LEAF:
            return {"class_counts": [int(n) for n in self.class_counts[i]]}
        return {
            "feature": int(self.feature[i]),
            "threshold": float(self.threshold[i]),
            "impurity_decrease": float(self.impurity_decrease[i]),
            "n_samples": int(self.n_samples[i]),
            "left": self.to_dict(int(self.left[i])),
            "right": self.to_dict(int(self.right[i])),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], n_classes: int) -> "Tree":
        b = _TreeArrays(n_classes)

        def visit(node: Mapping[str, Any]) -> int:
            if "class_counts" in node:
                return b.add(np.asarray(node["class_counts"], dtype=np.int64))
            nid = b.add(np.zeros(n_classes, dtype=np.int64))
            left = visit(node["left"])
            right = visit(node["right"])
            b.counts[nid] = b.counts[left] + b.counts[right]
            b.n_samples[nid] = b.n_samples[left] + b.n_samples[right]
            b.impurity[nid] = gini_impurity(b.counts[nid])
            b.set_split(nid, int(node["feature"]), float(node["threshold"]), left, right,
                        float(node["impurity_decrease"]))
            return nid

        visit(data)
        return b.finish()


class _TreeArrays:
    """Growable node storage used while building a tree"""

    def __init__(self, n_classes: int):
        self.n_classes = n_classes
        self.feature: List[int] = []
        self.threshold: List[float] = []
        self.left: List[int] = []
        self.right: List[int] = []
        self.n_samples: List[int] = []
        self.impurity: List[float] = []
        self.impurity_decrease: List[float] = []
        self.counts: List[np.ndarray] = []

    def add(self, counts: np.ndarray) -> int:
        total = int(counts.sum())
        self.feature.append(LEAF)
        self.threshold.append(0.0)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.n_samples.append(total)
        self.impurity.append(gini_impurity(counts) if total else 0.0)
        self.impurity_decrease.append(0.0)
        self.counts.append(counts)
        return len(self.feature) - 1

    def set_split(self, nid: int, feature: int, threshold: float, left: int, right: int, decrease: float) -> None:
        self.feature[nid] = feature
        self.threshold[nid] = threshold
        self.left[nid] = left
        self.right[nid] = right
        self.impurity_decrease[nid] = decrease

    def finish(self) -> Tree:
        return Tree(
            feature=np.asarray(self.feature, dtype=np.int64),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int64),
            right=np.asarray(self.right, dtype=np.int64),
            n_samples=np.asarray(self.n_samples, dtype=np.int64),
            impurity=np.asarray(self.impurity, dtype=np.float64),
            impurity_decrease=np.asarray(self.impurity_decrease, dtype=np.float64),
            class_counts=np.vstack(self.counts).astype(np.int64),
        )


def _best_threshold(x: np.ndarray, y: np.ndarray, n_classes: int,
                    parent_counts: np.ndarray, parent_gini: float) -> Optional[Tuple[float, float]]:
    """Exhaustive search over midpoints of sorted distinct values"""
    n = x.shape[0]
    order = np.argsort(x, kind="stable")
    xs = x[order]
    distinct = xs[1:] > xs[:-1]
    if not distinct.any():
        return None

    onehot = np.zeros((n, n_classes), dtype=np.float64)
    onehot[np.arange(n), y[order]] = 1.0
    left = np.cumsum(onehot, axis=0)[:-1]
    right = parent_counts[None, :] - left
    nl = np.arange(1, n, dtype=np.float64)
    nr = n - nl
    weighted = (nl * _gini_rows(left, nl) + nr * _gini_rows(right, nr)) / n
    decrease = np.where(distinct, parent_gini - weighted, -np.inf)

    j = int(np.argmax(decrease))
    lo, hi = xs[j], xs[j + 1]
    threshold = lo + (hi - lo) / 2.0
    if not lo < threshold <= hi:
        threshold = hi
    return float(decrease[j]), float(threshold)


class _TreeGrower:
    """
    Greedy top-down growth of one tree

    splitter "best" scans every midpoint (CART); "random" draws one
    uniform threshold in [min, max) per candidate feature (extra trees).
    """

    def __init__(self, X: np.ndarray, y: np.ndarray, n_classes: int, params: TreeParams,
                 splitter: str, rng: np.random.Generator):
        self.X = X
        self.y = y
        self.n_classes = n_classes
        self.params = params
        self.splitter = splitter
        self.rng = rng
        self.n_features = X.shape[1]
        self.max_features = params.resolve_max_features(self.n_features)

    def _candidate_order(self) -> np.ndarray:
        if self.splitter == "best" and self.max_features >= self.n_features:
            return np.arange(self.n_features)
        return self.rng.permutation(self.n_features)

    def _find_split(self, idx: np.ndarray, counts: np.ndarray, gini: float) -> Optional[Tuple[float, int, float]]:
        best: Optional[Tuple[float, int, float]] = None
        visited = 0
        y = self.y[idx]
        n = idx.shape[0]

        for f in self._candidate_order():
            x = self.X[idx, f]
            lo, hi = x.min(), x.max()
            if not hi > lo:
                continue  # constant at this node
            visited += 1

            if self.splitter == "best":
                found = _best_threshold(x, y, self.n_classes, counts, gini)
                if found is None:
                    continue
                decrease, threshold = found
            else:
                threshold = float(lo + self.rng.random() * (hi - lo))
                mask = x < threshold
                nl = int(mask.sum())
                if nl == 0 or nl == n:
                    if visited >= self.max_features:
                        break
                    continue
                cl = np.bincount(y[mask], minlength=self.n_classes).astype(np.float64)
                cr = counts - cl
                decrease = gini - (nl * (1.0 - np.dot(cl / nl, cl / nl))
                                   + (n - nl) * (1.0 - np.dot(cr / (n - nl), cr / (n - nl)))) / n

            f = int(f)
            if (best is None or decrease > best[0] + TIE_EPS
                    or (abs(decrease - best[0]) <= TIE_EPS and (f, threshold) < (best[1], best[2]))):
                best = (decrease, f, threshold)

            if visited >= self.max_features:
                break

        return best

    def grow(self, sample_idx: np.ndarray) -> Tree:
        p = self.params
        b = _TreeArrays(self.n_classes)
        root = b.add(np.bincount(self.y[sample_idx], minlength=self.n_classes).astype(np.int64))
        stack = [(root, sample_idx, 0)]

        while stack:
            nid, idx, depth = stack.pop()
            counts = b.counts[nid]
            n = idx.shape[0]
            if ((p.max_depth is not None and depth >= p.max_depth)
                    or n < p.min_samples_split
                    or np.count_nonzero(counts) <= 1):
                continue

            gini = b.impurity[nid]
            found = self._find_split(idx, counts.astype(np.float64), gini)
            if found is None:
                continue

            _, f, threshold = found
            mask = self.X[idx, f] < threshold
            left_idx, right_idx = idx[mask], idx[~mask]
            cl = np.bincount(self.y[left_idx], minlength=self.n_classes).astype(np.int64)
            cr = counts - cl
            left = b.add(cl)
            right = b.add(cr)
            nl, nr = left_idx.shape[0], right_idx.shape[0]
            decrease = gini - (nl * b.impurity[left] + nr * b.impurity[right]) / n
            b.set_split(nid, f, threshold, left, right, max(0.0, decrease))

            stack.append((right, right_idx, depth + 1))
            stack.append((left, left_idx, depth + 1))

        return b.finish()


def _grow_one(X: np.ndarray, y: np.ndarray, n_classes: int, params: TreeParams,
              splitter: str, bootstrap: bool, seed: int) -> Tree:
    rng = np.random.default_rng(seed)
    n = X.shape[0]
    if bootstrap:
        sample_idx = rng.integers(0, n, size=n)
    else:
        sample_idx = np.arange(n)
    return _TreeGrower(X, y, n_classes, params, splitter, rng).grow(sample_idx)


@dataclass
class Forest:
    """Fitted tree ensemble; a decision tree is a forest of one"""

    trees: List[Tree]
    kind: str
    rng_seed: int
    hyperparams: TreeParams
    classes: np.ndarray
    n_features: int
    feature_names: Tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParams(f"Unknown forest kind {self.kind!r}")
        if self.kind == "decision_tree" and len(self.trees) != 1:
            raise InvalidParams("A decision tree forest holds exactly one tree")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "format_version": FORMAT_VERSION,
            "kind": self.kind,
            "seed": self.rng_seed,
            "hyperparams": self.hyperparams.to_dict(),
            "classes": [int(c) for c in self.classes],
            "n_features": self.n_features,
            "feature_names": list(self.feature_names),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Forest":
        version = data.get("format_version")
        if version != FORMAT_VERSION:
            raise InvalidParams(f"Unsupported model format version {version!r}")
        classes = np.asarray(data["classes"], dtype=np.int64)
        return cls(
            trees=[Tree.from_dict(t, len(classes)) for t in data["trees"]],
            kind=data["kind"],
            rng_seed=int(data["seed"]),
            hyperparams=TreeParams.from_dict(data["hyperparams"]),
            classes=classes,
            n_features=int(data["n_features"]),
            feature_names=tuple(data.get("feature_names", ())),
        )


def _prepare(m: FeatureMatrix) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    if m.n_features == 0:
        raise DegenerateData("Feature matrix has no columns")
    if len(m) < 2:
        raise DegenerateData(f"Need at least 2 samples, got {len(m)}")
    classes, y = np.unique(m.labels, return_inverse=True)
    if classes.shape[0] < 2:
        raise DegenerateData(f"Need at least 2 classes, got {classes.tolist()}")
    return np.ascontiguousarray(m.X), y.astype(np.int64), classes


def _fit(m: FeatureMatrix, params: TreeParams, seed: int, kind: str, splitter: str,
         bootstrap: bool, n_jobs: Optional[int]) -> Forest:
    params.validate()
    if seed < 0:
        raise InvalidParams(f"seed must be non-negative, got {seed}")
    X, y, classes = _prepare(m)
    n_trees = 1 if kind == "decision_tree" else params.n_trees

    workers = min(resolve_n_jobs(n_jobs), n_trees)
    logger.info(f"Fitting {kind} with {n_trees} tree(s) on {X.shape[0]}x{X.shape[1]} "
                f"(max_features={params.resolve_max_features(X.shape[1])}, workers={workers})")
    trees = Parallel(n_jobs=workers)(
        delayed(_grow_one)(X, y, len(classes), params, splitter, bootstrap, seed ^ i)
        for i in range(n_trees)
    )
    return Forest(
        trees=list(trees),
        kind=kind,
        rng_seed=seed,
        hyperparams=params,
        classes=classes,
        n_features=X.shape[1],
        feature_names=m.names,
    )


def fit_decision_tree(m: FeatureMatrix, hp: Optional[TreeParams] = None, seed: int = 0,
                      n_jobs: Optional[int] = 1) -> Forest:
    """
    Grow a single CART tree with exhaustive threshold search

    Args:
        m: Training matrix (>= 2 samples, >= 2 classes)
        hp: Hyperparameters; n_trees and bootstrap are ignored and
            max_features defaults to every feature
        seed: Seed for feature subsetting when max_features < d

    Returns:
        Forest of kind decision_tree
    """
    hp = hp or TreeParams(max_features=None)
    return _fit(m, hp, seed, "decision_tree", "best", False, n_jobs)


def fit_random_forest(m: FeatureMatrix, hp: Optional[TreeParams] = None, seed: int = 0,
                      n_jobs: Optional[int] = None) -> Forest:
    """
    Bootstrap-aggregated CART trees with per-node random feature subsets
    """
    hp = hp or TreeParams()
    bootstrap = True if hp.bootstrap is None else hp.bootstrap
    return _fit(m, hp, seed, "random_forest", "best", bootstrap, n_jobs)


def fit_extra_trees(m: FeatureMatrix, hp: Optional[TreeParams] = None, seed: int = 0,
                    n_jobs: Optional[int] = None, exhaustive_thresholds: bool = False) -> Forest:
    """
    Extremely randomised trees

    Every tree sees all rows. At each node max_features non-constant
    features are drawn without replacement, each gets one uniform random
    threshold in [min, max) of the node's values, and the candidate with
    the largest Gini decrease wins.

    Args:
        m: Training matrix
        hp: Hyperparameters (bootstrap is ignored)
        seed: Base seed; tree i uses seed XOR i
        n_jobs: Worker count
        exhaustive_thresholds: Replace the random threshold with the full
            midpoint search (used to compare against fit_decision_tree)

    Returns:
        Forest of kind extra_trees
    """
    hp = hp or TreeParams()
    splitter = "best" if exhaustive_thresholds else "random"
    return _fit(m, hp, seed, "extra_trees", splitter, False, n_jobs)


def _rows(f: Forest, rows: Union[FeatureMatrix, np.ndarray]) -> np.ndarray:
    X = rows.X if isinstance(rows, FeatureMatrix) else np.asarray(rows, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != f.n_features:
        raise WidthMismatch(f.n_features, X.shape[1])
    return X


def predict(f: Forest, rows: Union[FeatureMatrix, np.ndarray]) -> np.ndarray:
    """
    Plurality vote of the trees' leaf-majority classes

    Ties go to the smallest label code.

    Returns:
        Array of label codes
    """
    if not f.trees:
        raise UnfittedForest("Forest has no trees")
    X = _rows(f, rows)
    votes = np.zeros((X.shape[0], f.classes.shape[0]), dtype=np.int64)
    arange = np.arange(X.shape[0])
    for tree in f.trees:
        votes[arange, tree.leaf_votes(X)] += 1
    return f.classes[np.argmax(votes, axis=1)]


def predict_proba(f: Forest, rows: Union[FeatureMatrix, np.ndarray]) -> np.ndarray:
    """Mean of the trees' leaf class distributions, columns in f.classes order"""
    if not f.trees:
        raise UnfittedForest("Forest has no trees")
    X = _rows(f, rows)
    proba = np.zeros((X.shape[0], f.classes.shape[0]), dtype=np.float64)
    for tree in f.trees:
        counts = tree.class_counts[tree.apply(X)].astype(np.float64)
        proba += counts / counts.sum(axis=1, keepdims=True)
    return proba / len(f.trees)


def feature_importances(f: Forest) -> ImportanceRanking:
    """
    Mean decrease in impurity, averaged over trees and normalised to 1

    A forest whose trees never split reports all-zero scores and emits
    EmptyImportanceWarning.
    """
    if f is None or not f.trees:
        raise UnfittedForest("Forest has not been fitted")
    per_tree = np.stack([t.feature_importances(f.n_features) for t in f.trees])
    mean = per_tree.mean(axis=0)
    names = f.feature_names or tuple(f"f{i}" for i in range(f.n_features))
    ranking = ImportanceRanking.from_scores(names, mean, kind=f.kind, seed=f.rng_seed,
                                            hyperparams=f.hyperparams.to_dict())
    if ranking.empty:
        msg = "No tree in the forest made a split; importances are all zero"
        logger.warning(msg)
        warnings.warn(msg, EmptyImportanceWarning, stacklevel=2)
    return ranking
