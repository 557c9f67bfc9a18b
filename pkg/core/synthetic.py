"""
Synthetic feature matrices for running the pipeline without the corpus.
"""
import logging

import numpy as np

from core.dataset_io import GestureLabel
from core.errors import InvalidParams
from core.features import FeatureMatrix

logger = logging.getLogger(__name__)

MAX_CLASSES = len(GestureLabel) - 1
MIN_PER_CLASS = 10
DEFAULT_N_FEATURES = 20
DEFAULT_SEPARATION = 6.0


def generate_synthetic(classes: int, per_class: int, seed: int, n_features: int = DEFAULT_N_FEATURES,
                       separation: float = DEFAULT_SEPARATION) -> FeatureMatrix:
    """
    Axis-aligned Gaussian clusters, one per gesture class

    Class i (0-based) draws every feature from N(0, 1) and adds
    separation to each feature j with j mod classes == i (feature i mod
    n_features when there are fewer features than classes). Rows are
    emitted class by class from numpy.random.default_rng(seed), so the
    same arguments always give the same matrix.

    Args:
        classes: Number of classes, 2..6; labels are gesture codes 1..classes
        per_class: Rows per class, >= 10
        seed: Generator seed
        n_features: Number of columns, named f00, f01, ...
        separation: Offset of each class centre along its own axes

    Returns:
        FeatureMatrix without subject ids
    """
    if not 2 <= classes <= MAX_CLASSES:
        raise InvalidParams(f"classes must be in [2, {MAX_CLASSES}], got {classes}")
    if per_class < MIN_PER_CLASS:
        raise InvalidParams(f"per_class must be >= {MIN_PER_CLASS}, got {per_class}")
    if n_features < 1:
        raise InvalidParams(f"n_features must be >= 1, got {n_features}")
    if seed < 0:
        raise InvalidParams(f"seed must be non-negative, got {seed}")

    rng = np.random.default_rng(seed)
    blocks, labels = [], []
    for i in range(classes):
        block = rng.standard_normal((per_class, n_features))
        if n_features >= classes:
            block[:, i::classes] += separation
        else:
            block[:, i % n_features] += separation
        blocks.append(block)
        labels.append(np.full(per_class, i + 1, dtype=np.int64))

    width = max(2, len(str(n_features - 1)))
    names = tuple(f"f{j:0{width}d}" for j in range(n_features))
    logger.info(f"Generated {classes}x{per_class} synthetic rows with {n_features} features "
                f"(separation {separation}, seed {seed})")
    return FeatureMatrix(
        X=np.vstack(blocks),
        names=names,
        labels=np.concatenate(labels),
        metadata={"synthetic": True, "classes": classes, "per_class": per_class,
                  "n_features": n_features, "separation": separation, "seed": seed},
    )
