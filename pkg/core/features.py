"""
Morphological, time-domain and energy feature bank.

Every feature is computed along the last axis, so the same code serves a
single series of shape (n,) and a whole window of shape (channels, n).
The public *_features functions take one series and return plain floats;
extract_features runs the vectorised path over all channels of a window.
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from core.dataset_io import N_CHANNELS, GestureLabel
from core.errors import (
    DataError,
    EmptyInput,
    EmptySeries,
    InvalidParams,
    InvalidPercent,
    SeriesTooShort,
    UnknownFeature,
    UsageError,
)
from core.parallel import resolve_n_jobs
from core.preprocess import Window

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DEFAULT_PERCENT = 50.0
DEGENERATE_EPS = 1e-12

FEATURE_NAMES: Tuple[str, ...] = (
    # morphological
    "mav", "min", "max", "ptp",
    # time domain
    "mean", "median", "var_s", "var_p", "mad", "std_s", "std_p",
    "percentile", "q1", "iqr", "skewness", "kurtosis",
    # energy
    "energy", "power", "rms", "hjorth_activity",
)

AGGREGATIONS = ("per_channel", "channel_mean")
LABEL_COLUMN = "label"
SUBJECT_COLUMN = "subject_id"

_count_note_logged = False


def _series(x: Any, min_len: int = 1) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    n = arr.shape[-1]
    if n == 0:
        raise EmptySeries("Series is empty")
    if n < min_len:
        raise SeriesTooShort(f"Series needs at least {min_len} samples, got {n}")
    return arr


def _scalar(values: Dict[str, np.ndarray]) -> Dict[str, float]:
    return {k: float(v) for k, v in values.items()}


# Vectorised kernels (last axis)

def _amplitude(x: np.ndarray) -> Dict[str, np.ndarray]:
    lo = x.min(axis=-1)
    hi = x.max(axis=-1)
    return {
        "mav": np.abs(x).mean(axis=-1),
        "min": lo,
        "max": hi,
        "ptp": hi - lo,
    }


def _central_moment(x: np.ndarray, k: int) -> np.ndarray:
    dev = x - x.mean(axis=-1, keepdims=True)
    return (dev ** k).mean(axis=-1)


def _dispersion(x: np.ndarray) -> Dict[str, np.ndarray]:
    n = x.shape[-1]
    mean = x.mean(axis=-1)
    dev = x - mean[..., None]
    ss = (dev * dev).sum(axis=-1)
    var_s = ss / (n - 1)
    var_p = ss / n
    return {
        "mean": mean,
        "median": np.median(x, axis=-1),
        "var_s": var_s,
        "var_p": var_p,
        "mad": np.abs(dev).mean(axis=-1),
        "std_s": np.sqrt(var_s),
        "std_p": np.sqrt(var_p),
    }


def _order(x: np.ndarray, p: float) -> Dict[str, np.ndarray]:
    # rank p(n+1)/100, clamped to [1, n], linear interpolation
    pct, q1, q3 = np.percentile(x, [p, 25.0, 75.0], axis=-1, method="weibull")
    return {"percentile": pct, "q1": q1, "q3": q3, "iqr": q3 - q1}


def _shape(x: np.ndarray) -> Dict[str, np.ndarray]:
    m2 = _central_moment(x, 2)
    m3 = _central_moment(x, 3)
    m4 = _central_moment(x, 4)
    degenerate = m2 <= DEGENERATE_EPS * (x * x).mean(axis=-1)
    safe_m2 = np.where(degenerate, 1.0, m2)
    return {
        "skewness": np.where(degenerate, 0.0, m3 / safe_m2 ** 1.5),
        "kurtosis": np.where(degenerate, 0.0, m4 / (safe_m2 * safe_m2)),
    }


def _energy(x: np.ndarray) -> Dict[str, np.ndarray]:
    n = x.shape[-1]
    energy = (x * x).sum(axis=-1)
    power = energy / n
    dev = x - x.mean(axis=-1, keepdims=True)
    return {
        "energy": energy,
        "power": power,
        "rms": np.sqrt(power),
        "hjorth_activity": (dev * dev).sum(axis=-1) / n,
    }


# Public per-series API

def amplitude_features(x: Sequence[float]) -> Dict[str, float]:
    """
    Morphological features: mean absolute value, min, max, peak-to-peak

    Args:
        x: Signal samples, at least one

    Returns:
        Dict with keys mav, min, max, ptp
    """
    return _scalar(_amplitude(_series(x, 1)))


def central_moment(x: Sequence[float], k: int) -> float:
    """
    k-th central moment (1/n) * sum((x_i - mean)^k), k in {2, 3, 4}
    """
    if k not in (2, 3, 4):
        raise InvalidParams(f"central_moment order must be 2, 3 or 4, got {k}")
    return float(_central_moment(_series(x, 1), k))


def dispersion_features(x: Sequence[float]) -> Dict[str, float]:
    """
    Location and spread: mean, median, sample/population variance,
    mean absolute deviation, sample/population standard deviation

    Args:
        x: Signal samples, at least two

    Returns:
        Dict with keys mean, median, var_s, var_p, mad, std_s, std_p
    """
    return _scalar(_dispersion(_series(x, 2)))


def order_statistics(x: Sequence[float], p: float = DEFAULT_PERCENT) -> Dict[str, float]:
    """
    p-th percentile and quartiles using the (n+1)-scaled rank convention

    The rank r = p(n+1)/100 is clamped to [1, n] and values between
    neighbouring order statistics are linearly interpolated.

    Args:
        x: Signal samples, at least two
        p: Percent, strictly between 0 and 100

    Returns:
        Dict with keys percentile, q1, q3, iqr
    """
    arr = _series(x, 2)
    if not 0.0 < p < 100.0:
        raise InvalidPercent(f"Percent must be in (0, 100), got {p}")
    return _scalar(_order(arr, p))


def shape_features(x: Sequence[float]) -> Dict[str, float]:
    """
    Skewness m3 / m2^(3/2) and kurtosis m4 / m2^2

    Near-constant series (m2 <= 1e-12 * mean square) give 0 for both.
    """
    return _scalar(_shape(_series(x, 2)))


def spectral_energy_features(x: Sequence[float]) -> Dict[str, float]:
    """
    Energy, power, RMS and Hjorth activity

    Args:
        x: Signal samples, at least one

    Returns:
        Dict with keys energy, power, rms, hjorth_activity
    """
    return _scalar(_energy(_series(x, 1)))


def feature_block(x: np.ndarray, p: float = DEFAULT_PERCENT) -> np.ndarray:
    """
    All 20 features for every row of a (channels, n) array

    Returns:
        Array of shape (channels, 20) in FEATURE_NAMES order
    """
    x = _series(x, 2)
    if x.ndim == 1:
        x = x[None, :]
    values: Dict[str, np.ndarray] = {}
    values.update(_amplitude(x))
    values.update(_dispersion(x))
    values.update(_order(x, p))
    values.update(_shape(x))
    values.update(_energy(x))
    return np.stack([values[name] for name in FEATURE_NAMES], axis=-1)


def feature_names(aggregation: str = "per_channel", n_channels: int = N_CHANNELS) -> List[str]:
    """Column schema for an aggregation mode"""
    if aggregation == "per_channel":
        return [f"ch{c}_{name}" for c in range(n_channels) for name in FEATURE_NAMES]
    if aggregation == "channel_mean":
        return [f"chmean_{name}" for name in FEATURE_NAMES]
    raise UsageError(f"Unknown aggregation {aggregation!r}, expected one of {AGGREGATIONS}")


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    names: Tuple[str, ...]
    label: GestureLabel


def extract_features(w: Window, aggregation: str = "per_channel", p: float = DEFAULT_PERCENT) -> FeatureVector:
    """
    Feature vector of one window

    Per-channel mode concatenates the 20 features of channel 0, then
    channel 1, and so on (160 values). Channel-mean mode averages each
    feature over the channels (20 values).

    Args:
        w: Window to describe
        aggregation: "per_channel" or "channel_mean"
        p: Percent used for the percentile column

    Returns:
        FeatureVector carrying the window's label
    """
    names = tuple(feature_names(aggregation, w.channels.shape[0]))
    try:
        block = feature_block(w.channels, p)
    except DataError as e:
        raise e.add_context(subject=w.subject_id, trial=w.trial_id, offset=w.offset)

    if aggregation == "per_channel":
        values = block.reshape(-1)
    else:
        values = block.mean(axis=0)
    return FeatureVector(values=values, names=names, label=GestureLabel(int(w.label)))


@dataclass
class FeatureMatrix:
    """
    Labelled feature table: one row per window, one column per feature.

    groups holds the subject id of each row when it is known; it drives
    the subject-wise split.
    """

    X: np.ndarray
    names: Tuple[str, ...]
    labels: np.ndarray
    groups: Optional[np.ndarray] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.names = tuple(self.names)
        if self.X.ndim != 2:
            raise DataError(f"Feature matrix must be 2-D, got shape {self.X.shape}")
        if self.X.shape[0] != self.labels.shape[0]:
            raise DataError("Feature rows and labels differ in length")
        if self.X.shape[1] != len(self.names):
            raise DataError("Feature columns and names differ in length")
        if len(set(self.names)) != len(self.names):
            raise DataError("Feature names must be unique")
        if self.groups is not None:
            self.groups = np.asarray(self.groups, dtype=np.int64)
            if self.groups.shape[0] != self.labels.shape[0]:
                raise DataError("Group ids and labels differ in length")

    def __len__(self) -> int:
        return int(self.X.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.X.shape[1])

    @property
    def classes(self) -> np.ndarray:
        return np.unique(self.labels)

    def row(self, i: int) -> FeatureVector:
        return FeatureVector(self.X[i], self.names, GestureLabel(int(self.labels[i])))

    def column_index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise UnknownFeature(name) from None

    def take(self, indices: Iterable[int]) -> "FeatureMatrix":
        """Row subset, in the order given"""
        idx = np.asarray(list(indices) if not isinstance(indices, np.ndarray) else indices, dtype=np.int64)
        return FeatureMatrix(
            X=self.X[idx],
            names=self.names,
            labels=self.labels[idx],
            groups=None if self.groups is None else self.groups[idx],
            metadata=dict(self.metadata),
        )

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.X, columns=list(self.names))
        df[LABEL_COLUMN] = self.labels
        if self.groups is not None:
            df[SUBJECT_COLUMN] = self.groups
        return df

    @classmethod
    def from_frame(cls, df: pd.DataFrame, metadata: Optional[Dict[str, Any]] = None) -> "FeatureMatrix":
        if LABEL_COLUMN not in df.columns:
            raise DataError(f"Feature table has no {LABEL_COLUMN!r} column")
        groups = df[SUBJECT_COLUMN].to_numpy() if SUBJECT_COLUMN in df.columns else None
        names = [c for c in df.columns if c not in (LABEL_COLUMN, SUBJECT_COLUMN)]
        return cls(
            X=df[names].to_numpy(dtype=np.float64),
            names=tuple(names),
            labels=df[LABEL_COLUMN].to_numpy(),
            groups=groups,
            metadata=dict(metadata or {}),
        )

    def write_csv(self, path: Union[str, Path], metadata: Optional[Dict[str, Any]] = None) -> Path:
        """
        Write the matrix as CSV plus a JSON sidecar with extraction parameters

        Args:
            path: CSV destination
            metadata: Extra sidecar entries (window_len, stride, config_hash, ...)

        Returns:
            Path of the sidecar file
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, lineterminator="\n", encoding="utf-8")

        sidecar = sidecar_path(path)
        meta = {"schema_version": SCHEMA_VERSION, **self.metadata, **(metadata or {})}
        with open(sidecar, "w", encoding="utf-8", newline="\n") as f:
            json.dump(meta, f, indent=2, sort_keys=True)
            f.write("\n")
        logger.info(f"Wrote {len(self)}x{self.n_features} feature matrix to {path}")
        return sidecar

    @classmethod
    def read_csv(cls, path: Union[str, Path]) -> "FeatureMatrix":
        path = Path(path)
        if not path.exists():
            raise DataError(f"Feature file {path} does not exist", path=path)
        df = pd.read_csv(path, encoding="utf-8")
        metadata: Dict[str, Any] = {}
        sidecar = sidecar_path(path)
        if sidecar.exists():
            with open(sidecar, "r", encoding="utf-8") as f:
                metadata = json.load(f)
        try:
            return cls.from_frame(df, metadata)
        except DataError as e:
            raise e.add_context(path=path)


def sidecar_path(csv_path: Union[str, Path]) -> Path:
    csv_path = Path(csv_path)
    return csv_path.with_name(csv_path.name + ".json")


def _extract_chunk(windows: Sequence[Window], aggregation: str, p: float) -> np.ndarray:
    return np.stack([extract_features(w, aggregation, p).values for w in windows])


def _log_count_note() -> None:
    global _count_note_logged
    if not _count_note_logged:
        logger.warning(
            f"Extracting {len(FEATURE_NAMES)} features per channel; 21- and 23-feature variants are not supported"
        )
        _count_note_logged = True


def build_feature_matrix(
    windows: Sequence[Window],
    aggregation: str = "per_channel",
    p: float = DEFAULT_PERCENT,
    n_jobs: Optional[int] = 1,
) -> FeatureMatrix:
    """
    Extract features for every window into one matrix

    Row order always follows the input order, whatever the worker count.

    Args:
        windows: Windows to describe
        aggregation: "per_channel" (160 columns) or "channel_mean" (20)
        p: Percent used for the percentile column
        n_jobs: Worker count (None means every core)

    Returns:
        FeatureMatrix with subject ids as groups
    """
    if not windows:
        raise EmptyInput("No windows to extract features from")
    if aggregation not in AGGREGATIONS:
        raise UsageError(f"Unknown aggregation {aggregation!r}, expected one of {AGGREGATIONS}")
    _log_count_note()

    n_channels = windows[0].channels.shape[0]
    workers = resolve_n_jobs(n_jobs)
    if workers == 1 or len(windows) < 256:
        X = _extract_chunk(windows, aggregation, p)
    else:
        chunks = np.array_split(np.arange(len(windows)), workers * 4)
        parts = Parallel(n_jobs=workers)(
            delayed(_extract_chunk)([windows[i] for i in chunk], aggregation, p)
            for chunk in chunks if len(chunk)
        )
        X = np.vstack(parts)

    return FeatureMatrix(
        X=X,
        names=tuple(feature_names(aggregation, n_channels)),
        labels=np.array([int(w.label) for w in windows], dtype=np.int64),
        groups=np.array([w.subject_id for w in windows], dtype=np.int64),
        metadata={"aggregation": aggregation, "percent": p},
    )


def extract_all(windows: Sequence[Window], n_jobs: Optional[int] = None,
                aggregation: str = "per_channel", p: float = DEFAULT_PERCENT) -> FeatureMatrix:
    """Parallel extraction over all cores, rows in window order"""
    return build_feature_matrix(windows, aggregation, p, n_jobs=n_jobs)
