"""
Run configuration: defaults, TOML/JSON loading, flag overrides and the
frozen RunConfig handed to the pipeline.
"""
import copy
import hashlib
import json
import logging
import os

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, Mapping, Optional

from core.errors import ConfigError

logger = logging.getLogger(__name__)

TOOL_NAME = "emgkit"
TOOL_VERSION = "1.0.0"

FEATURE_MODES = ("all", "selected")
SPLIT_MODES = ("stratified", "subject")

DEFAULT_SETTINGS = {
    "dataset": {
        "root": "",
        "features_csv": "",  # precomputed matrix; skips parsing and windowing
        "unknown_labels": "rest",  # rest, error
    },
    "windowing": {
        "window_len": 200,
        "stride": 100,
    },
    "features": {
        "aggregation": "per_channel",  # per_channel, channel_mean
        "percent": 50.0,
    },
    "selection": {
        "mode": "selected",  # all, selected
        "top_k": 10,
        "n_trees": 100,
        "max_depth": 0,  # 0 means unlimited
        "min_samples_split": 2,
        "max_features": "sqrt",
    },
    "model": {
        "name": "knn",
        "params": {},
    },
    "evaluation": {
        "folds": 5,
        "split": "stratified",
        "seed": 42,
        "n_jobs": 0,  # 0 means every core, capped by EMGKIT_THREADS
    },
    "output": {
        "report": "report.json",
        "comparison": "comparison.json",
        "confusion_csv": "",
        "confusion_png": "",
        "markdown": "",
    },
}

# Fields that never change results; kept out of the config hash
_HASH_EXCLUDED = ("output_paths", "n_jobs")


@dataclass(frozen=True)
class RunConfig:
    """Validated, immutable view of the effective settings"""

    seed: int
    dataset_root: Optional[str] = None
    features_csv: Optional[str] = None
    unknown_labels: str = "rest"
    window_len: int = 200
    stride: int = 100
    aggregation: str = "per_channel"
    percent: float = 50.0
    feature_mode: str = "selected"
    top_k: int = 10
    selection_params: Dict[str, Any] = field(default_factory=dict)
    model: str = "knn"
    model_params: Dict[str, Any] = field(default_factory=dict)
    synthetic_params: Dict[str, Any] = field(default_factory=dict)
    folds: int = 5
    split: str = "stratified"
    n_jobs: Optional[int] = None
    output_paths: Dict[str, Optional[str]] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def config_hash(self) -> str:
        """First 16 hex digits of SHA-256 over the canonical JSON of the result-affecting fields"""
        payload = {k: v for k, v in self.to_dict().items() if k not in _HASH_EXCLUDED}
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]

    def provenance(self) -> Dict[str, Any]:
        return {"tool": TOOL_NAME, "tool_version": TOOL_VERSION,
                "config_hash": self.config_hash(), "seed": self.seed}

    def with_overrides(self, **changes: Any) -> "RunConfig":
        return replace(self, **changes)


def _deep_merge(base: Dict[str, Any], loaded: Mapping[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in loaded.items():
        if isinstance(merged.get(key), dict) and isinstance(value, Mapping) and key != "params":
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


class Settings:
    """
    Manages run settings with TOML or JSON file storage.
    """

    def __init__(self, settings_file: Optional[str] = None):
        """
        Initialize settings manager

        Args:
            settings_file: Path to a .toml or .json config file, or None
                for the built-in defaults
        """
        self.settings_file = settings_file
        self.settings: Dict[str, Any] = {}
        self.seed_given = False
        self.load()

    def load(self) -> None:
        """Load settings from file merged onto the defaults"""
        self.settings = copy.deepcopy(DEFAULT_SETTINGS)
        if not self.settings_file:
            self.seed_given = True
            return

        if not os.path.exists(self.settings_file):
            raise ConfigError(f"Config file {self.settings_file} does not exist", path=self.settings_file)

        try:
            if self.settings_file.endswith(".toml"):
                with open(self.settings_file, "rb") as f:
                    loaded = tomllib.load(f)
            elif self.settings_file.endswith(".json"):
                with open(self.settings_file, "r", encoding="utf-8") as f:
                    loaded = json.load(f)
            else:
                raise ConfigError("Config file must end in .toml or .json", path=self.settings_file)
        except (tomllib.TOMLDecodeError, json.JSONDecodeError) as e:
            logger.error(f"Error loading settings: {str(e)}")
            raise ConfigError(f"Cannot parse config: {e}", path=self.settings_file) from e

        unknown = sorted(set(loaded) - set(DEFAULT_SETTINGS))
        if unknown:
            raise ConfigError(f"Unknown config section(s): {', '.join(unknown)}", path=self.settings_file)

        self.settings = _deep_merge(DEFAULT_SETTINGS, loaded)
        self.seed_given = "seed" in loaded.get("evaluation", {})
        logger.info(f"Settings loaded from {self.settings_file}")

    def save(self, path: str) -> bool:
        """
        Save current settings as JSON

        Returns:
            bool: True if saved successfully, False otherwise
        """
        try:
            directory = os.path.dirname(path)
            if directory:
                os.makedirs(directory, exist_ok=True)
            with open(path, "w", encoding="utf-8", newline="\n") as f:
                json.dump(self.settings, f, indent=2, sort_keys=True)
                f.write("\n")
            logger.info(f"Settings saved to {path}")
            return True
        except OSError as e:
            logger.error(f"Error saving settings: {str(e)}")
            return False

    def get(self, section: str, key: str, default: Any = None) -> Any:
        """
        Get a setting value

        Args:
            section: Settings section name
            key: Setting key name
            default: Default value if not found

        Returns:
            Setting value or default if not found
        """
        return self.settings.get(section, {}).get(key, default)

    def set(self, section: str, key: str, value: Any) -> None:
        if section not in self.settings:
            self.settings[section] = {}
        self.settings[section][key] = value
        if (section, key) == ("evaluation", "seed"):
            self.seed_given = True

    def get_section(self, section: str) -> Dict:
        return self.settings.get(section, {})

    def set_section(self, section: str, values: Dict) -> None:
        self.settings[section] = values

    def apply_overrides(self, overrides: Mapping[str, Mapping[str, Any]]) -> None:
        """
        Apply command-line flags on top of the file values

        Args:
            overrides: {section: {key: value}}; None values are ignored
        """
        for section, values in overrides.items():
            for key, value in values.items():
                if value is not None:
                    logger.debug(f"Override {section}.{key} = {value!r}")
                    self.set(section, key, value)

    def reset_to_defaults(self) -> None:
        """Reset all settings to defaults"""
        self.settings = copy.deepcopy(DEFAULT_SETTINGS)
        logger.info("Settings reset to defaults")

    def _choice(self, section: str, key: str, choices) -> str:
        value = self.get(section, key)
        if value not in choices:
            raise ConfigError(f"{section}.{key} must be one of {list(choices)}, got {value!r}",
                              section=section, key=key)
        return value

    def _int(self, section: str, key: str, minimum: int) -> int:
        value = self.get(section, key)
        if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
            raise ConfigError(f"{section}.{key} must be an integer >= {minimum}, got {value!r}",
                              section=section, key=key)
        return value

    def to_run_config(self, check_paths: bool = True) -> RunConfig:
        """
        Validate the settings and freeze them into a RunConfig

        Args:
            check_paths: Require dataset paths to exist

        Raises:
            ConfigError: naming the offending section and key
        """
        if not self.seed_given:
            raise ConfigError("A seed is required: set evaluation.seed or pass --seed",
                              section="evaluation", key="seed")
        seed = self._int("evaluation", "seed", 0)

        dataset_root = self.get("dataset", "root") or None
        features_csv = self.get("dataset", "features_csv") or None
        if check_paths:
            for key, path in (("root", dataset_root), ("features_csv", features_csv)):
                if path and not os.path.exists(path):
                    raise ConfigError(f"dataset.{key} {path!r} does not exist", section="dataset", key=key)

        window_len = self._int("windowing", "window_len", 0)
        if window_len == 1:
            raise ConfigError("windowing.window_len must be 0 or >= 2", section="windowing", key="window_len")

        percent = self.get("features", "percent")
        if isinstance(percent, bool) or not isinstance(percent, (int, float)) or not 0 < percent < 100:
            raise ConfigError(f"features.percent must be in (0, 100), got {percent!r}",
                              section="features", key="percent")

        selection = dict(self.get_section("selection"))
        n_jobs = self._int("evaluation", "n_jobs", 0)
        model_params = self.get("model", "params") or {}
        if not isinstance(model_params, Mapping):
            raise ConfigError("model.params must be a table", section="model", key="params")

        return RunConfig(
            seed=seed,
            dataset_root=dataset_root,
            features_csv=features_csv,
            unknown_labels=self._choice("dataset", "unknown_labels", ("rest", "error")),
            window_len=window_len,
            stride=self._int("windowing", "stride", 1),
            aggregation=self._choice("features", "aggregation", ("per_channel", "channel_mean")),
            percent=float(percent),
            feature_mode=self._choice("selection", "mode", FEATURE_MODES),
            top_k=self._int("selection", "top_k", 1),
            selection_params={k: selection[k] for k in ("n_trees", "max_depth", "min_samples_split", "max_features")},
            model=str(self.get("model", "name")),
            model_params=dict(model_params),
            folds=self._int("evaluation", "folds", 2),
            split=self._choice("evaluation", "split", SPLIT_MODES),
            n_jobs=n_jobs or None,
            output_paths={k: (v or None) for k, v in self.get_section("output").items()},
        )
