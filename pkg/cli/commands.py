"""
Command-line parser and dispatcher for emgkit.
"""
import argparse
import json
import logging
import sys
from typing import Any, Dict, Optional, Sequence, TextIO

from core.errors import EmgKitError, UsageError
from data.settings import FEATURE_MODES, SPLIT_MODES, TOOL_NAME, TOOL_VERSION, Settings

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
DEFAULT_LOG_FILE = "emgkit.log"
DEFAULT_COMPARE_MODELS = ("random_forest", "gaussian_nb", "decision_tree", "knn", "extra_trees")

EXIT_OK = 0
EXIT_DATA_ERROR = 1
EXIT_USAGE_ERROR = 2


def configure_logging(verbose: bool = False, quiet: bool = False, log_file: Optional[str] = None) -> None:
    """
    Log to a file and to stderr; stdout stays reserved for command output
    """
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(
        level=level,
        format=LOG_FORMAT,
        handlers=[
            logging.FileHandler(log_file or DEFAULT_LOG_FILE, encoding="utf-8"),
            logging.StreamHandler(sys.stderr),
        ],
        force=True,
    )
    logging.getLogger().setLevel(level)


def _common_flags() -> argparse.ArgumentParser:
    # Accepted both before and after the subcommand
    default = argparse.SUPPRESS
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", default=default, help="TOML or JSON run configuration")
    parent.add_argument("--seed", type=int, default=default, help="Random seed (overrides evaluation.seed)")
    parent.add_argument("--verbose", action="store_true", default=argparse.SUPPRESS, help="Debug logging")
    parent.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS, help="Warnings and errors only")
    parent.add_argument("--log-file", default=default, help=f"Log file (default {DEFAULT_LOG_FILE})")
    parent.add_argument("--n-jobs", type=int, default=default, help="Worker count (0 = all cores)")
    return parent


def _data_flags() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--dataset", help="Directory holding the recordings")
    parent.add_argument("--unknown-labels", choices=("rest", "error"), help="Policy for class codes outside 0..6")
    parent.add_argument("--window-len", type=int, help="Samples per window (0 = whole segment)")
    parent.add_argument("--stride", type=int, help="Samples between window starts")
    parent.add_argument("--aggregation", choices=("per_channel", "channel_mean"))
    parent.add_argument("--percent", type=float, help="Percent for the percentile feature")
    return parent


def _matrix_flags() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--features", help="Precomputed feature matrix CSV")
    parent.add_argument("--top-k", type=int, help="Number of features to keep")
    parent.add_argument("--selection-trees", type=int, help="Extra-trees ensemble size used for ranking")
    return parent


def _model_flags() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--model", help="Model plugin name")
    parent.add_argument("--mode", choices=FEATURE_MODES, help="Use all features or the top-k selection")
    parent.add_argument("--k", type=int, help="k-NN neighbour count")
    parent.add_argument("--tune-k", action="store_true", default=None, help="Pick k by inner cross-validation")
    parent.add_argument("--no-standardize", action="store_true", default=None, help="Disable k-NN z-scoring")
    parent.add_argument("--n-trees", type=int, help="Tree count for forest models")
    parent.add_argument("--folds", type=int, help="Cross-validation folds")
    parent.add_argument("--split", choices=SPLIT_MODES, help="Fold assignment")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=TOOL_NAME,
        description="EMG hand-gesture pipeline: parse, window, extract, select, classify, evaluate.",
        parents=[_common_flags()],
    )
    parser.add_argument("--version", action="version", version=f"{TOOL_NAME} {TOOL_VERSION}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    common = _common_flags()
    data, matrix, model = _data_flags(), _matrix_flags(), _model_flags()

    p = sub.add_parser("inspect", parents=[common, data], help="Summarise a dataset directory")
    p.add_argument("--citation", action="store_true", help="Print the dataset citation")

    p = sub.add_parser("segment", parents=[common, data], help="Segment statistics and window counts")
    p.add_argument("--out", help="Write the statistics JSON here instead of stdout")

    p = sub.add_parser("extract", parents=[common, data], help="Extract a feature matrix CSV")
    p.add_argument("--out", required=True, help="Feature matrix CSV path")

    p = sub.add_parser("select", parents=[common, data, matrix], help="Rank features and keep the top k")
    p.add_argument("--out", help="Selection JSON path")

    p = sub.add_parser("train", parents=[common, data, matrix, model], help="Fit one model on every row")
    p.add_argument("--dump", help="Model JSON path")

    p = sub.add_parser("evaluate", parents=[common, data, matrix, model], help="Cross-validate a model")
    p.add_argument("--out", help="Report JSON path")
    p.add_argument("--confusion-csv", help="Pooled confusion matrix CSV")
    p.add_argument("--confusion-png", help="Pooled confusion matrix PNG")
    p.add_argument("--markdown", help="Markdown summary path")

    p = sub.add_parser("compare", parents=[common, data, matrix, model], help="All vs selected features, per model")
    p.add_argument("--models", help=f"Comma-separated models (default {','.join(DEFAULT_COMPARE_MODELS)})")
    p.add_argument("--out", help="Comparison JSON path")
    p.add_argument("--markdown", help="Markdown tables path")

    p = sub.add_parser("synth", parents=[common], help="Generate a synthetic feature matrix")
    p.add_argument("--classes", type=int, default=6)
    p.add_argument("--per-class", type=int, default=200)
    p.add_argument("--n-features", type=int, default=20)
    p.add_argument("--separation", type=float, default=6.0)
    p.add_argument("--out", required=True, help="Feature matrix CSV path")

    p = sub.add_parser("report", parents=[common], help="Render a saved evaluation report")
    p.add_argument("--report", required=True, help="Report JSON written by evaluate")
    p.add_argument("--markdown", help="Markdown output path (stdout when omitted)")
    p.add_argument("--confusion-csv", help="Confusion matrix CSV path")
    p.add_argument("--confusion-png", help="Confusion matrix PNG path")

    return parser


def collect_overrides(args: argparse.Namespace) -> Dict[str, Dict[str, Any]]:
    """Map parsed flags onto settings sections; unset flags stay None"""
    get = lambda name: getattr(args, name, None)  # noqa: E731
    overrides: Dict[str, Dict[str, Any]] = {
        "dataset": {
            "root": get("dataset"),
            "features_csv": get("features"),
            "unknown_labels": get("unknown_labels"),
        },
        "windowing": {"window_len": get("window_len"), "stride": get("stride")},
        "features": {"aggregation": get("aggregation"), "percent": get("percent")},
        "selection": {"mode": get("mode"), "top_k": get("top_k"), "n_trees": get("selection_trees")},
        "model": {"name": get("model")},
        "evaluation": {
            "seed": get("seed"),
            "folds": get("folds"),
            "split": get("split"),
            "n_jobs": get("n_jobs"),
        },
        "output": {},
    }
    if args.command == "evaluate":
        overrides["output"] = {
            "report": get("out"),
            "markdown": get("markdown"),
            "confusion_csv": get("confusion_csv"),
            "confusion_png": get("confusion_png"),
        }
    elif args.command == "compare":
        overrides["output"] = {"comparison": get("out"), "markdown": get("markdown")}
    return overrides


def collect_model_params(args: argparse.Namespace) -> Dict[str, Any]:
    params: Dict[str, Any] = {}
    if getattr(args, "k", None) is not None:
        params["k"] = args.k
    if getattr(args, "tune_k", None):
        params["tune_k"] = True
    if getattr(args, "no_standardize", None):
        params["standardize"] = False
    if getattr(args, "n_trees", None) is not None:
        params["n_trees"] = args.n_trees
    return params


def build_settings(args: argparse.Namespace) -> Settings:
    settings = Settings(getattr(args, "config", None))
    settings.apply_overrides(collect_overrides(args))
    extra = collect_model_params(args)
    if extra:
        # flags win over file values, key by key
        settings.set("model", "params", {**(settings.get("model", "params") or {}), **extra})
    return settings


def _dispatch(app, args: argparse.Namespace) -> int:
    command = args.command
    if command == "inspect":
        return app.inspect(citation=args.citation)
    if command == "segment":
        return app.segment(out=args.out)
    if command == "extract":
        return app.extract(out=args.out)
    if command == "select":
        return app.select(out=args.out)
    if command == "train":
        return app.train(dump=args.dump)
    if command == "evaluate":
        return app.evaluate()
    if command == "compare":
        models = [m.strip() for m in args.models.split(",") if m.strip()] if args.models else list(DEFAULT_COMPARE_MODELS)
        return app.compare(models)
    if command == "synth":
        return app.synth(args.classes, args.per_class, args.out, args.n_features, args.separation)
    if command == "report":
        return app.report(args.report, args.markdown, args.confusion_csv, args.confusion_png)
    raise UsageError(f"Unknown command {command!r}")


def _diagnostic(error: EmgKitError, stderr: TextIO) -> None:
    stderr.write(json.dumps(error.to_dict(), sort_keys=True, default=str) + "\n")


def run_command(argv: Optional[Sequence[str]] = None, stdout: Optional[TextIO] = None,
                stderr: Optional[TextIO] = None) -> int:
    """
    Parse argv and run the matching command

    Returns:
        0 on success, 1 for data errors, 2 for usage errors
    """
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv) if argv is not None else None)
    except SystemExit as e:
        # argparse already printed usage; --help and --version exit 0
        return int(e.code) if isinstance(e.code, int) else EXIT_USAGE_ERROR

    configure_logging(getattr(args, "verbose", False), getattr(args, "quiet", False), getattr(args, "log_file", None))

    from cli.app import EmgKitApp

    try:
        app = EmgKitApp(build_settings(args), stdout=stdout)
        return _dispatch(app, args)
    except UsageError as e:
        logger.error(f"{type(e).__name__}: {e}")
        _diagnostic(e, stderr)
        return EXIT_USAGE_ERROR
    except EmgKitError as e:
        logger.error(f"{type(e).__name__}: {e}")
        _diagnostic(e, stderr)
        return EXIT_DATA_ERROR
    except Exception as e:
        logger.exception("Unexpected error")
        stderr.write(json.dumps({"error": type(e).__name__, "message": str(e), "context": {}}) + "\n")
        return EXIT_DATA_ERROR
