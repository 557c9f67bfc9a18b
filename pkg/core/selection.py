"""
Extra-trees importance ranking and top-k feature selection.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence, Tuple

from core.errors import KOutOfRange
from core.features import FeatureMatrix
from core.ranking import ImportanceRanking
from core.trees import TreeParams, feature_importances, fit_extra_trees

logger = logging.getLogger(__name__)

DEFAULT_TOP_K = 10

__all__ = [
    "DEFAULT_TOP_K",
    "FeatureSubset",
    "ImportanceRanking",
    "intersect_subsets",
    "project",
    "rank_features",
    "select_top_k",
]


@dataclass(frozen=True)
class FeatureSubset:
    """Ordered feature names chosen from a ranking"""

    names: Tuple[str, ...]
    k: int
    provenance: Dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        if self.k < 1 or len(self.names) != self.k:
            raise KOutOfRange(f"Subset of {len(self.names)} names does not match k={self.k}")

    def to_dict(self) -> Dict[str, Any]:
        return {"k": self.k, "selected": list(self.names), "provenance": dict(self.provenance)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FeatureSubset":
        return cls(tuple(data["selected"]), int(data["k"]), dict(data.get("provenance", {})))


def rank_features(train: FeatureMatrix, hp: Optional[TreeParams] = None, seed: int = 0,
                  n_jobs: Optional[int] = None, fold: Optional[int] = None) -> ImportanceRanking:
    """
    Rank the columns of a training matrix by extra-trees importance

    Only ever called on training rows; the evaluation loop ranks inside
    each fold.

    Args:
        train: Training matrix with at least two classes
        hp: Extra-trees hyperparameters
        seed: Forest seed
        n_jobs: Worker count for tree fitting
        fold: Fold id recorded in the provenance

    Returns:
        ImportanceRanking over train.names
    """
    forest = fit_extra_trees(train, hp, seed=seed, n_jobs=n_jobs)
    ranking = feature_importances(forest)
    if fold is not None:
        ranking.provenance["fold"] = fold
    logger.debug(f"Top features: {ranking.ordering[:5]}")
    return ranking


def select_top_k(r: ImportanceRanking, k: int = DEFAULT_TOP_K) -> FeatureSubset:
    """First k names of the ranking"""
    d = len(r.names)
    if k < 1 or k > d:
        raise KOutOfRange(f"k must be in [1, {d}], got {k}")
    return FeatureSubset(tuple(r.ordering[:k]), k, dict(r.provenance))


def project(m: FeatureMatrix, s: FeatureSubset) -> FeatureMatrix:
    """Reduce and reorder columns to s.names, keeping rows and labels"""
    columns = [m.column_index(name) for name in s.names]
    return FeatureMatrix(
        X=m.X[:, columns],
        names=s.names,
        labels=m.labels,
        groups=m.groups,
        metadata=dict(m.metadata),
    )


def intersect_subsets(subsets: Sequence[FeatureSubset]) -> Tuple[str, ...]:
    """Names chosen in every subset, in the order of the first one"""
    if not subsets:
        return ()
    common = set(subsets[0].names)
    for s in subsets[1:]:
        common &= set(s.names)
    return tuple(name for name in subsets[0].names if name in common)


def selection_document(r: ImportanceRanking, s: FeatureSubset) -> Dict[str, Any]:
    """JSON body written by the select command"""
    doc = r.to_dict()
    doc.update({"k": s.k, "selected": list(s.names)})
    return doc

