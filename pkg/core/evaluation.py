"""
Confusion matrices, one-vs-rest metrics, cross-validated pipeline
evaluation and report rendering.
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from sklearn.metrics import confusion_matrix
from sklearn.model_selection import StratifiedGroupKFold, StratifiedKFold

from core.dataset_io import GESTURE_NAMES, GestureLabel, load_dataset
from core.errors import (
    DataError,
    EmgKitError,
    EmptyMatrix,
    InvalidParams,
    LengthMismatch,
    TooFewSamplesPerClass,
)
from core.features import FeatureMatrix, build_feature_matrix
from core.parallel import resolve_n_jobs
from core.plugin_manager import DEFAULT_PLUGIN_DIR, PluginManager
from core.preprocess import windows_from_recordings
from core.selection import FeatureSubset, intersect_subsets, project, rank_features, select_top_k
from core.trees import TreeParams

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1
METRIC_NAMES = ("precision", "recall", "f1", "specificity")


@dataclass
class ConfusionMatrix:
    """Counts with rows = true label, columns = predicted label"""

    counts: np.ndarray
    labels: Tuple[int, ...]

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        self.labels = tuple(int(c) for c in self.labels)
        n = len(self.labels)
        if self.counts.shape != (n, n):
            raise DataError(f"Confusion counts of shape {self.counts.shape} do not match {n} labels")
        if np.any(self.counts < 0):
            raise DataError("Confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.labels != other.labels:
            raise DataError("Cannot pool confusion matrices with different label orders")
        return ConfusionMatrix(self.counts + other.counts, self.labels)

    def to_frame(self) -> pd.DataFrame:
        names = [label_name(c) for c in self.labels]
        return pd.DataFrame(self.counts, index=pd.Index(names, name="true"), columns=names)

    def write_csv(self, path: Union[str, Path]) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, lineterminator="\n", encoding="utf-8")

    def to_dict(self) -> Dict[str, Any]:
        return {"labels": list(self.labels), "counts": self.counts.tolist()}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ConfusionMatrix":
        return cls(np.asarray(data["counts"], dtype=np.int64), tuple(data["labels"]))


def label_name(code: int) -> str:
    try:
        return GESTURE_NAMES[GestureLabel(code)]
    except ValueError:
        return str(code)


def confusion(true_labels: Sequence[int], pred_labels: Sequence[int],
              labels: Optional[Sequence[int]] = None) -> ConfusionMatrix:
    """
    Count (true, predicted) pairs

    Args:
        true_labels: Ground truth codes
        pred_labels: Predicted codes
        labels: Row/column order; defaults to the sorted codes seen

    Returns:
        ConfusionMatrix
    """
    y_true = np.asarray(true_labels, dtype=np.int64)
    y_pred = np.asarray(pred_labels, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise LengthMismatch(f"{y_true.shape[0]} true labels but {y_pred.shape[0]} predictions")
    if y_true.size == 0:
        raise LengthMismatch("Cannot build a confusion matrix from zero pairs")
    if labels is None:
        labels = np.union1d(y_true, y_pred)
    labels = [int(c) for c in labels]
    unexpected = sorted(set(np.union1d(y_true, y_pred).tolist()) - set(labels))
    if unexpected:
        raise DataError(f"Labels {unexpected} are outside the confusion label order")
    counts = confusion_matrix(y_true, y_pred, labels=labels)
    return ConfusionMatrix(counts, tuple(labels))


def _ratio(num: float, den: float) -> Tuple[float, bool]:
    """num/den, or (0.0, True) when den is 0"""
    if den == 0:
        return 0.0, True
    return float(num) / float(den), False


@dataclass
class MetricSummary:
    """
    One-vs-rest metrics derived from a confusion matrix.

    undefined lists "<label>.<metric>" entries whose denominator was 0;
    those metrics are reported as 0.
    """

    per_class: Dict[int, Dict[str, float]]
    accuracy: float
    macro: Dict[str, float]
    micro: Dict[str, float]
    undefined: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "accuracy": self.accuracy,
            "macro": dict(self.macro),
            "micro": dict(self.micro),
            "per_class": {
                label_name(code): {"code": code, **values}
                for code, values in self.per_class.items()
            },
            "undefined": list(self.undefined),
        }


def metrics(cm: ConfusionMatrix) -> MetricSummary:
    """
    Per-class precision, recall, F1 and specificity plus accuracy

    Accuracy is trace / total. Micro averages pool TP, FP, FN and TN over
    the one-vs-rest problems; macro averages are plain means over classes.
    """
    total = cm.total
    if total == 0:
        raise EmptyMatrix("Confusion matrix holds no samples")

    counts = cm.counts
    tp = np.diag(counts).astype(np.int64)
    fp = counts.sum(axis=0) - tp
    fn = counts.sum(axis=1) - tp
    tn = total - tp - fp - fn

    per_class: Dict[int, Dict[str, float]] = {}
    undefined: List[str] = []
    for i, code in enumerate(cm.labels):
        name = label_name(code)
        precision, p_undef = _ratio(tp[i], tp[i] + fp[i])
        recall, r_undef = _ratio(tp[i], tp[i] + fn[i])
        specificity, s_undef = _ratio(tn[i], tn[i] + fp[i])
        f1, f_undef = _ratio(2 * precision * recall, precision + recall)
        for metric, flag in zip(METRIC_NAMES, (p_undef, r_undef, f_undef, s_undef)):
            if flag:
                undefined.append(f"{name}.{metric}")
        per_class[code] = {
            "precision": precision,
            "recall": recall,
            "f1": f1,
            "specificity": specificity,
            "support": int(tp[i] + fn[i]),
        }

    if undefined:
        logger.warning(f"Metrics with a zero denominator reported as 0: {', '.join(undefined)}")

    macro = {m: float(np.mean([v[m] for v in per_class.values()])) for m in METRIC_NAMES}
    micro_precision, _ = _ratio(tp.sum(), tp.sum() + fp.sum())
    micro_recall, _ = _ratio(tp.sum(), tp.sum() + fn.sum())
    micro_spec, _ = _ratio(tn.sum(), tn.sum() + fp.sum())
    micro_f1, _ = _ratio(2 * micro_precision * micro_recall, micro_precision + micro_recall)
    micro = {
        "precision": micro_precision,
        "recall": micro_recall,
        "f1": micro_f1,
        "specificity": micro_spec,
    }

    return MetricSummary(
        per_class=per_class,
        accuracy=float(np.trace(counts)) / total,
        macro=macro,
        micro=micro,
        undefined=undefined,
    )


def stratified_kfold(m: FeatureMatrix, folds: int = 5, seed: int = 42) -> List[Tuple[np.ndarray, np.ndarray]]:
    """
    Shuffled stratified folds over the rows of m

    Args:
        m: Matrix to split
        folds: Number of folds (>= 2)
        seed: Shuffle seed

    Returns:
        List of (train_idx, test_idx) pairs, test folds disjoint and covering
    """
    if folds < 2:
        raise InvalidParams(f"folds must be >= 2, got {folds}")
    classes, sizes = np.unique(m.labels, return_counts=True)
    small = {int(c): int(n) for c, n in zip(classes, sizes) if n < folds}
    if small:
        raise TooFewSamplesPerClass(f"Classes with fewer than {folds} samples: {small}")
    splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
    return [(train, test) for train, test in splitter.split(m.X, m.labels)]


def subject_kfold(m: FeatureMatrix, folds: int = 5, seed: int = 42) -> List[Tuple[np.ndarray, np.ndarray]]:
    """
    Leave-subjects-out folds: every subject's rows fall in one test fold
    """
    if folds < 2:
        raise InvalidParams(f"folds must be >= 2, got {folds}")
    if m.groups is None:
        raise DataError("Subject-wise split needs subject ids; the feature matrix has none")
    n_subjects = np.unique(m.groups).shape[0]
    if n_subjects < folds:
        raise TooFewSamplesPerClass(f"Only {n_subjects} subjects for {folds} folds")
    splitter = StratifiedGroupKFold(n_splits=folds, shuffle=True, random_state=seed)
    return [(train, test) for train, test in splitter.split(m.X, m.labels, m.groups)]


def make_folds(m: FeatureMatrix, folds: int, seed: int, split: str = "stratified"):
    if split == "stratified":
        return stratified_kfold(m, folds, seed)
    if split == "subject":
        return subject_kfold(m, folds, seed)
    raise InvalidParams(f"Unknown split mode {split!r}")


@dataclass
class FoldResult:
    fold: int
    n_train: int
    n_test: int
    confusion: ConfusionMatrix
    selected: Optional[List[str]] = None

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.confusion.counts)) / self.confusion.total

    def to_dict(self) -> Dict[str, Any]:
        return {
            "fold": self.fold,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "accuracy": self.accuracy,
            "confusion": self.confusion.to_dict(),
            "selected": self.selected,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "FoldResult":
        return cls(
            fold=int(data["fold"]),
            n_train=int(data["n_train"]),
            n_test=int(data["n_test"]),
            confusion=ConfusionMatrix.from_dict(data["confusion"]),
            selected=data.get("selected"),
        )


@dataclass
class EvaluationReport:
    """
    Pooled cross-validation result for one model and feature mode.

    Metrics are always derived from the pooled confusion matrix, so a
    report read back from JSON renders exactly as it was written.
    """

    model: str
    feature_mode: str
    confusion: ConfusionMatrix
    folds: List[FoldResult]
    protocol: Dict[str, Any] = field(default_factory=dict)
    provenance: Dict[str, Any] = field(default_factory=dict)

    @property
    def summary(self) -> MetricSummary:
        return metrics(self.confusion)

    @property
    def accuracy(self) -> float:
        return self.summary.accuracy

    @property
    def selected_per_fold(self) -> List[List[str]]:
        return [f.selected for f in self.folds if f.selected is not None]

    @property
    def selected_intersection(self) -> List[str]:
        subsets = [FeatureSubset(tuple(s), len(s)) for s in self.selected_per_fold]
        return list(intersect_subsets(subsets))

    def to_dict(self) -> Dict[str, Any]:
        summary = self.summary
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            **self.provenance,
            "model": self.model,
            "feature_mode": self.feature_mode,
            "protocol": dict(self.protocol),
            "accuracy": summary.accuracy,
            "metrics": summary.to_dict(),
            "confusion": self.confusion.to_dict(),
            "folds": [f.to_dict() for f in self.folds],
            "selected_features": {
                "per_fold": self.selected_per_fold,
                "intersection": self.selected_intersection,
            },
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "EvaluationReport":
        version = data.get("schema_version")
        if version != REPORT_SCHEMA_VERSION:
            raise DataError(f"Unsupported report schema version {version!r}")
        provenance_keys = ("tool", "tool_version", "config_hash", "seed")
        return cls(
            model=data["model"],
            feature_mode=data["feature_mode"],
            confusion=ConfusionMatrix.from_dict(data["confusion"]),
            folds=[FoldResult.from_dict(f) for f in data["folds"]],
            protocol=dict(data.get("protocol", {})),
            provenance={k: data[k] for k in provenance_keys if k in data},
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def write(self, path: Union[str, Path]) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(self.to_json())
        logger.info(f"Wrote report to {path}")

    @classmethod
    def read(cls, path: Union[str, Path]) -> "EvaluationReport":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def selection_params(config) -> TreeParams:
    sp = dict(config.selection_params or {})
    return TreeParams(
        n_trees=int(sp.get("n_trees", 100)),
        max_depth=sp.get("max_depth") or None,
        min_samples_split=int(sp.get("min_samples_split", 2)),
        max_features=sp.get("max_features", "sqrt"),
    )


def load_matrix(config) -> FeatureMatrix:
    """Feature matrix for a run: the precomputed CSV if given, else parse, window and extract"""
    if config.features_csv:
        return FeatureMatrix.read_csv(config.features_csv)
    if not config.dataset_root:
        raise InvalidParams("Set dataset.root or dataset.features_csv")
    recordings = load_dataset(config.dataset_root, unknown_labels=config.unknown_labels, n_jobs=config.n_jobs)
    windows = windows_from_recordings(recordings, config.window_len, config.stride)
    return build_feature_matrix(windows, config.aggregation, config.percent, n_jobs=config.n_jobs)


def _run_fold(fold: int, train_idx: np.ndarray, test_idx: np.ndarray, matrix: FeatureMatrix,
              config, labels: Tuple[int, ...], plugin_dir: str, n_jobs: Optional[int]) -> FoldResult:
    # Each fold owns the seed stream config.seed + fold
    fold_seed = config.seed + fold
    try:
        train, test = matrix.take(train_idx), matrix.take(test_idx)
        selected = None
        if config.feature_mode == "selected":
            ranking = rank_features(train, selection_params(config), seed=fold_seed, n_jobs=n_jobs, fold=fold)
            subset = select_top_k(ranking, min(config.top_k, train.n_features))
            train, test = project(train, subset), project(test, subset)
            selected = list(subset.names)

        plugin = PluginManager(plugin_dir).create(config.model)
        plugin.fit(train, config.model_params, seed=fold_seed, n_jobs=n_jobs)
        predicted = plugin.predict(test)
        result = FoldResult(fold, len(train), len(test), confusion(test.labels, predicted, labels), selected)
    except EmgKitError as e:
        raise e.add_context(fold=fold)

    logger.info(f"Fold {fold}: {config.model} accuracy {result.accuracy:.4f} "
                f"({result.n_train} train / {result.n_test} test)")
    return result


def evaluate_pipeline(config, matrix: Optional[FeatureMatrix] = None,
                      plugin_dir: str = DEFAULT_PLUGIN_DIR) -> EvaluationReport:
    """
    Cross-validate one model under one feature mode

    Ranking and selection run inside each fold on the training rows only.
    Fold confusions are pooled in fold order.

    Args:
        config: RunConfig
        matrix: Precomputed feature matrix (loaded from config when None)
        plugin_dir: Model plugin directory

    Returns:
        EvaluationReport
    """
    if matrix is None:
        matrix = load_matrix(config)
    PluginManager(plugin_dir).get_plugin_by_name(config.model)

    labels = tuple(int(c) for c in matrix.classes)
    splits = make_folds(matrix, config.folds, config.seed, config.split)

    workers = min(resolve_n_jobs(config.n_jobs), len(splits))
    inner_jobs = 1 if workers > 1 else config.n_jobs
    logger.info(f"Evaluating {config.model} ({config.feature_mode} features) with "
                f"{len(splits)} {config.split} folds, seed {config.seed}, {workers} worker(s)")
    results = Parallel(n_jobs=workers)(
        delayed(_run_fold)(i, train_idx, test_idx, matrix, config, labels, plugin_dir, inner_jobs)
        for i, (train_idx, test_idx) in enumerate(splits)
    )

    pooled = results[0].confusion
    for result in results[1:]:
        pooled = pooled + result.confusion

    protocol = {
        "folds": len(splits),
        "split": config.split,
        "seed": config.seed,
        "feature_mode": config.feature_mode,
        "k": config.top_k if config.feature_mode == "selected" else matrix.n_features,
        "n_features": matrix.n_features,
        "n_samples": len(matrix),
        "model_params": dict(config.model_params),
    }
    if config.feature_mode == "selected":
        protocol["selection_params"] = selection_params(config).to_dict()
    report = EvaluationReport(config.model, config.feature_mode, pooled, list(results), protocol,
                              config.provenance())
    logger.info(f"{config.model} pooled accuracy {report.accuracy:.4f}")
    return report


# Comparison tables

MODEL_TITLES = {
    "random_forest": "Random Forest",
    "gaussian_nb": "Gaussian NB",
    "decision_tree": "Decision Tree",
    "knn": "KNN",
    "extra_trees": "Extra Tree",
}


def _pct(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{100.0 * value:.2f}"


@dataclass
class ComparisonRow:
    model: str
    all_features: Optional[EvaluationReport] = None
    selected: Optional[EvaluationReport] = None

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"model": self.model}
        for key, report in (("all", self.all_features), ("selected", self.selected)):
            if report is not None:
                summary = report.summary
                out[key] = {
                    "n_features": report.protocol.get("k"),
                    "accuracy": summary.accuracy,
                    "sensitivity": summary.macro["recall"],
                    "specificity": summary.macro["specificity"],
                }
        return out


def compare_models(config, models: Sequence[str], feature_modes: Sequence[str] = ("all", "selected"),
                   matrix: Optional[FeatureMatrix] = None,
                   plugin_dir: str = DEFAULT_PLUGIN_DIR) -> List[ComparisonRow]:
    """
    Evaluate every (model, feature mode) pair on the same folds

    Returns:
        One ComparisonRow per model, in the order given
    """
    if matrix is None:
        matrix = load_matrix(config)
    rows = []
    for model in models:
        row = ComparisonRow(model)
        for mode in feature_modes:
            # model params only carry over to the configured model
            params = config.model_params if model == config.model else {}
            run = config.with_overrides(model=model, feature_mode=mode, model_params=params)
            report = evaluate_pipeline(run, matrix, plugin_dir)
            if mode == "all":
                row.all_features = report
            else:
                row.selected = report
        rows.append(row)
    return rows


def render_comparison_markdown(rows: Sequence[ComparisonRow]) -> str:
    """All-features versus selected-features table, percentages to 2 decimals"""
    lines = [
        "| Model | Feature Number | Accuracy | Selected Feature | Performance | Sensitivity | Specificity |",
        "|---|---|---|---|---|---|---|",
    ]
    for row in rows:
        full, sel = row.all_features, row.selected
        sel_summary = sel.summary if sel is not None else None
        lines.append("| {} | {} | {} | {} | {} | {} | {} |".format(
            MODEL_TITLES.get(row.model, row.model),
            full.protocol.get("k") if full is not None else "n/a",
            _pct(full.accuracy) if full is not None else "n/a",
            sel.protocol.get("k") if sel is not None else "n/a",
            _pct(sel_summary.accuracy if sel_summary else None),
            _pct(sel_summary.macro["recall"] if sel_summary else None),
            _pct(sel_summary.macro["specificity"] if sel_summary else None),
        ))
    return "\n".join(lines) + "\n"


def render_per_gesture_markdown(reports: Mapping[str, EvaluationReport]) -> str:
    """Per-gesture precision, recall and F1 for each model, side by side"""
    models = list(reports)
    header = "| Gesture Name | " + " | ".join(
        f"{MODEL_TITLES.get(m, m)} {metric}" for m in models for metric in ("Precision", "Recall", "F1-Score")
    ) + " |"
    lines = [header, "|" + "---|" * (1 + 3 * len(models))]

    summaries = {m: reports[m].summary for m in models}
    codes = sorted(set().union(*(s.per_class for s in summaries.values())))
    for code in codes:
        cells = [label_name(code)]
        for m in models:
            values = summaries[m].per_class.get(code)
            for metric in ("precision", "recall", "f1"):
                cells.append(_pct(values[metric]) if values else "n/a")
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def render_report_markdown(report: EvaluationReport) -> str:
    summary = report.summary
    lines = [
        f"# {MODEL_TITLES.get(report.model, report.model)} ({report.feature_mode} features)",
        "",
        f"- accuracy: {_pct(summary.accuracy)}",
        f"- macro precision / recall / F1 / specificity: "
        f"{' / '.join(_pct(summary.macro[m]) for m in METRIC_NAMES)}",
        f"- micro precision / recall / F1 / specificity: "
        f"{' / '.join(_pct(summary.micro[m]) for m in METRIC_NAMES)}",
        f"- folds: {report.protocol.get('folds')} ({report.protocol.get('split')}), seed {report.protocol.get('seed')}",
    ]
    if report.selected_per_fold:
        lines.append(f"- features selected in every fold: {', '.join(report.selected_intersection) or 'none'}")
    lines += ["", render_per_gesture_markdown({report.model: report})]
    return "\n".join(lines)
