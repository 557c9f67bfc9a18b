"""
Feature importance ranking shared by the tree and selection modules.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from core.errors import DataError

SUM_TOLERANCE = 1e-9


@dataclass(frozen=True)
class ImportanceRanking:
    """
    Normalised impurity importances, one per feature.

    scores keeps schema order; ordering lists names by descending score,
    equal scores keeping schema order. empty is True when no tree made a
    split, in which case every score is 0.
    """

    names: Tuple[str, ...]
    values: np.ndarray
    empty: bool = False
    provenance: Dict[str, object] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", tuple(self.names))
        if values.shape != (len(self.names),):
            raise DataError("Importance vector and schema differ in length")
        if np.any(values < 0):
            raise DataError("Importances must be non-negative")
        if not self.empty and abs(values.sum() - 1.0) > SUM_TOLERANCE:
            raise DataError(f"Importances must sum to 1, got {values.sum()!r}")

    @classmethod
    def from_scores(cls, names: Sequence[str], values: Sequence[float], **provenance) -> "ImportanceRanking":
        values = np.asarray(values, dtype=np.float64)
        total = values.sum()
        if total > 0:
            return cls(tuple(names), values / total, False, dict(provenance))
        return cls(tuple(names), np.zeros_like(values), True, dict(provenance))

    @property
    def scores(self) -> Dict[str, float]:
        return {name: float(v) for name, v in zip(self.names, self.values)}

    @property
    def ordering(self) -> List[str]:
        # stable sort on the negated score keeps schema order for ties
        order = np.argsort(-self.values, kind="stable")
        return [self.names[i] for i in order]

    def as_percentages(self) -> Dict[str, float]:
        return {name: 100.0 * float(v) for name, v in zip(self.names, self.values)}

    def to_dict(self) -> Dict[str, object]:
        return {
            "scores": self.scores,
            "percentages": self.as_percentages(),
            "ordering": self.ordering,
            "empty": self.empty,
            "provenance": dict(self.provenance),
        }
