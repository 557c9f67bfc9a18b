"""
Application object that runs each pipeline stage and writes its artifacts.
"""
import json
import logging
import os
import sys
from typing import Any, Dict, List, Optional, Sequence, TextIO

from core.dataset_io import CITATION, directory_checksum, load_dataset, summarize
from core.errors import InvalidParams
from core.evaluation import (
    EvaluationReport,
    compare_models,
    evaluate_pipeline,
    load_matrix,
    render_comparison_markdown,
    render_per_gesture_markdown,
    render_report_markdown,
    selection_params,
)
from core.features import build_feature_matrix
from core.plugin_manager import PluginManager
from core.preprocess import segment_stats, windows_from_recordings
from core.selection import project, rank_features, select_top_k, selection_document
from core.synthetic import generate_synthetic
from data.settings import RunConfig, Settings
from images.confusion import ConfusionRenderer

logger = logging.getLogger(__name__)


def write_text(path: str, text: str) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


class EmgKitApp:
    """
    Coordinates settings, plugins and artifact writing for every command.
    """

    def __init__(self, settings: Settings, plugin_manager: Optional[PluginManager] = None,
                 stdout: Optional[TextIO] = None):
        """
        Initialize the application

        Args:
            settings: Effective settings (file values plus flag overrides)
            plugin_manager: Model plugin registry
            stdout: Stream for JSON command output
        """
        self.settings = settings
        self.plugin_manager = plugin_manager or PluginManager()
        self.stdout = stdout or sys.stdout

    def config(self, check_paths: bool = True) -> RunConfig:
        return self.settings.to_run_config(check_paths=check_paths)

    def emit(self, doc: Dict[str, Any], path: Optional[str] = None) -> None:
        """Write a JSON document to path, or to stdout when path is None"""
        text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
        if path:
            write_text(path, text)
            logger.info(f"Wrote {path}")
        else:
            self.stdout.write(text)

    def _dataset_root(self, cfg: RunConfig) -> str:
        if not cfg.dataset_root:
            raise InvalidParams("This command needs a dataset directory (--dataset or dataset.root)")
        return cfg.dataset_root

    # Commands

    def inspect(self, citation: bool = False) -> int:
        cfg = self.config()
        extra = {"citation": CITATION} if citation else {}
        if citation and not cfg.dataset_root:
            self.emit(extra)
            return 0
        root = self._dataset_root(cfg)
        recordings = load_dataset(root, unknown_labels=cfg.unknown_labels, n_jobs=cfg.n_jobs)
        doc = {**summarize(recordings), "directory_checksum": directory_checksum(root), **extra, **cfg.provenance()}
        self.emit(doc)
        return 0

    def segment(self, out: Optional[str] = None) -> int:
        cfg = self.config()
        recordings = load_dataset(self._dataset_root(cfg), unknown_labels=cfg.unknown_labels, n_jobs=cfg.n_jobs)
        windows = windows_from_recordings(recordings, cfg.window_len, cfg.stride)
        doc = {
            **segment_stats(recordings),
            "windows": len(windows),
            "window_len": cfg.window_len,
            "stride": cfg.stride,
            **cfg.provenance(),
        }
        self.emit(doc, out)
        return 0

    def extract(self, out: str) -> int:
        cfg = self.config()
        recordings = load_dataset(self._dataset_root(cfg), unknown_labels=cfg.unknown_labels, n_jobs=cfg.n_jobs)
        windows = windows_from_recordings(recordings, cfg.window_len, cfg.stride)
        matrix = build_feature_matrix(windows, cfg.aggregation, cfg.percent, n_jobs=cfg.n_jobs)
        matrix.write_csv(out, metadata={"window_len": cfg.window_len, "stride": cfg.stride, **cfg.provenance()})
        self.emit({"rows": len(matrix), "features": matrix.n_features, "path": out})
        return 0

    def select(self, out: Optional[str] = None) -> int:
        cfg = self.config()
        matrix = load_matrix(cfg)
        ranking = rank_features(matrix, selection_params(cfg), seed=cfg.seed, n_jobs=cfg.n_jobs)
        subset = select_top_k(ranking, cfg.top_k)
        self.emit({**selection_document(ranking, subset), **cfg.provenance()}, out)
        return 0

    def train(self, dump: Optional[str] = None) -> int:
        """Fit one model on every row and dump it as versioned JSON"""
        cfg = self.config()
        matrix = load_matrix(cfg)
        plugin = self.plugin_manager.create(cfg.model)

        selected = None
        if cfg.feature_mode == "selected":
            ranking = rank_features(matrix, selection_params(cfg), seed=cfg.seed, n_jobs=cfg.n_jobs)
            subset = select_top_k(ranking, min(cfg.top_k, matrix.n_features))
            matrix = project(matrix, subset)
            selected = list(subset.names)

        plugin.fit(matrix, cfg.model_params, seed=cfg.seed, n_jobs=cfg.n_jobs)
        train_accuracy = float((plugin.predict(matrix) == matrix.labels).mean())
        doc = {
            **cfg.provenance(),
            "selected": selected,
            "feature_names": list(matrix.names),
            "training_accuracy": train_accuracy,
            "model": plugin.to_dict(),
        }
        self.emit(doc, dump)
        return 0

    def _write_report_extras(self, report: EvaluationReport, markdown: Optional[str],
                             confusion_csv: Optional[str], confusion_png: Optional[str]) -> None:
        if markdown:
            write_text(markdown, render_report_markdown(report))
        if confusion_csv:
            report.confusion.write_csv(confusion_csv)
        if confusion_png:
            cache_dir = os.path.join(os.path.dirname(os.path.abspath(confusion_png)), ".emgkit_cache")
            ConfusionRenderer(cache_dir).save(report.confusion, confusion_png)

    def evaluate(self) -> int:
        cfg = self.config()
        report = evaluate_pipeline(cfg, plugin_dir=self.plugin_manager.plugin_dir)
        paths = cfg.output_paths
        if paths.get("report"):
            report.write(paths["report"])
        self._write_report_extras(report, paths.get("markdown"), paths.get("confusion_csv"), paths.get("confusion_png"))
        self.emit({"accuracy": report.accuracy, "report": paths.get("report"), **cfg.provenance()})
        return 0

    def compare(self, models: Sequence[str]) -> int:
        cfg = self.config()
        for name in models:
            self.plugin_manager.get_plugin_by_name(name)
        rows = compare_models(cfg, models, plugin_dir=self.plugin_manager.plugin_dir)

        selected = {row.model: row.selected for row in rows if row.selected is not None}
        markdown = render_comparison_markdown(rows)
        if selected:
            markdown += "\n" + render_per_gesture_markdown(selected)
        if cfg.output_paths.get("markdown"):
            write_text(cfg.output_paths["markdown"], markdown)

        doc = {**cfg.provenance(), "rows": [row.to_dict() for row in rows]}
        self.emit(doc, cfg.output_paths.get("comparison"))
        if not cfg.output_paths.get("markdown"):
            self.stdout.write(markdown)
        return 0

    def synth(self, classes: int, per_class: int, out: str, n_features: int, separation: float) -> int:
        cfg = self.config(check_paths=False).with_overrides(synthetic_params={
            "classes": classes, "per_class": per_class, "n_features": n_features, "separation": separation,
        })
        matrix = generate_synthetic(classes, per_class, cfg.seed, n_features, separation)
        matrix.write_csv(out, metadata=cfg.provenance())
        self.emit({"rows": len(matrix), "features": matrix.n_features, "path": out})
        return 0

    def report(self, report_path: str, markdown: Optional[str] = None,
               confusion_csv: Optional[str] = None, confusion_png: Optional[str] = None) -> int:
        report = EvaluationReport.read(report_path)
        self._write_report_extras(report, markdown, confusion_csv, confusion_png)
        if not markdown:
            self.stdout.write(render_report_markdown(report))
        return 0


def available_models(manager: Optional[PluginManager] = None) -> List[str]:
    return (manager or PluginManager()).available()
