"""
Shared fixtures: hand-built recordings, dataset directories and small matrices.
"""
import os
from pathlib import Path
from typing import List, Sequence

import numpy as np
import pytest

from core.dataset_io import N_CHANNELS, Recording, write_recording
from core.features import FeatureMatrix
from core.synthetic import generate_synthetic

GESTURE_RUN = 300
REST_RUN = 50


def make_labels(gestures: Sequence[int] = (1, 2, 3, 4, 5, 6), run: int = GESTURE_RUN, rest: int = REST_RUN) -> np.ndarray:
    """rest, g1, rest, g2, ..., rest"""
    parts: List[np.ndarray] = [np.zeros(rest, dtype=np.int8)]
    for g in gestures:
        parts.append(np.full(run, g, dtype=np.int8))
        parts.append(np.zeros(rest, dtype=np.int8))
    return np.concatenate(parts)


def make_recording(labels: Sequence[int], subject_id: int = 1, trial_id: int = 1, seed: int = 0) -> Recording:
    """Channels whose amplitude grows with the gesture code, so gestures are separable"""
    labels = np.asarray(labels, dtype=np.int8)
    rng = np.random.default_rng(seed)
    n = labels.shape[0]
    scale = 1e-5 * (1.0 + labels.astype(np.float64))
    channel_gain = np.linspace(1.0, 2.0, N_CHANNELS)[:, None]
    channels = rng.standard_normal((N_CHANNELS, n)) * scale[None, :] * channel_gain
    return Recording(
        subject_id=subject_id,
        trial_id=trial_id,
        time_ms=np.arange(1, n + 1, dtype=np.float64),
        channels=channels,
        labels=labels,
    )


@pytest.fixture
def recording() -> Recording:
    return make_recording(make_labels())


@pytest.fixture
def dataset_dir(tmp_path: Path) -> Path:
    """Per-subject layout: 2 subjects x 2 trials"""
    root = tmp_path / "EMG_data"
    for subject in (1, 2):
        for trial in (1, 2):
            rec = make_recording(make_labels(), subject, trial, seed=10 * subject + trial)
            write_recording(rec, root / f"{subject:02d}" / f"{trial}_raw_data_13-12_22.03.16.txt")
    return root


@pytest.fixture
def write_lines(tmp_path: Path):
    """Write raw text lines to a recording file and return its path"""
    def _write(lines: Sequence[str], name: str = "1_raw_data.txt") -> Path:
        path = tmp_path / name
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write("\n".join(lines) + "\n")
        return path
    return _write


@pytest.fixture
def separable_matrix() -> FeatureMatrix:
    return generate_synthetic(classes=6, per_class=60, seed=7)


@pytest.fixture
def ranked_matrix() -> FeatureMatrix:
    """Six informative columns f00..f05 (one per class) followed by 14 noise columns"""
    informative = generate_synthetic(classes=6, per_class=60, seed=7, n_features=6)
    noise = np.random.default_rng(8).standard_normal((len(informative), 14))
    return FeatureMatrix(
        X=np.hstack([informative.X, noise]),
        names=informative.names + tuple(f"n{j:02d}" for j in range(14)),
        labels=informative.labels,
    )


@pytest.fixture
def xor_matrix() -> FeatureMatrix:
    X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]] * 5)
    y = np.array([1, 2, 2, 1] * 5)
    return FeatureMatrix(X=X, names=("a", "b"), labels=y)


@pytest.fixture(autouse=True)
def single_thread(monkeypatch):
    """Keep the suite serial unless a test opts into more workers"""
    monkeypatch.setenv("EMGKIT_THREADS", os.environ.get("EMGKIT_TEST_THREADS", "1"))
