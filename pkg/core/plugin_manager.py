"""
Plugin manager for discovering and instantiating model plugins.
"""
import importlib.util
import inspect
import logging
import os
import sys
from typing import Any, Dict, List, Mapping, Optional, Type, Union

import numpy as np

from core.errors import InvalidParams, UnfittedForest, UnknownModel
from core.features import FeatureMatrix
from core.trees import (
    Forest,
    TreeParams,
    feature_importances,
    predict,
    predict_proba,
)

logger = logging.getLogger(__name__)

DEFAULT_PLUGIN_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "plugins")


class ModelPlugin:
    """Base class for all model plugins"""

    # Plugin metadata
    name = "base"
    description = "Base model plugin"
    version = "1.0.0"
    author = "emgkit"

    default_params: Dict[str, Any] = {}

    def __init__(self):
        self.params: Dict[str, Any] = dict(self.default_params)
        self.seed: Optional[int] = None
        self.model: Any = None
        self.n_jobs: Optional[int] = 1

    def resolve_params(self, params: Optional[Mapping[str, Any]]) -> Dict[str, Any]:
        """
        Merge user parameters onto the plugin defaults

        Raises:
            InvalidParams: for keys the plugin does not know
        """
        params = dict(params or {})
        unknown = sorted(set(params) - set(self.default_params))
        if unknown:
            raise InvalidParams(f"Unknown parameter(s) for {self.name}: {', '.join(unknown)}",
                                model=self.name)
        return {**self.default_params, **params}

    def fit(self, matrix: FeatureMatrix, params: Optional[Mapping[str, Any]] = None,
            seed: int = 0, n_jobs: Optional[int] = 1) -> "ModelPlugin":
        """
        Fit the model on a training matrix

        Args:
            matrix: Training rows
            params: Model hyperparameters (merged onto default_params)
            seed: Seed for any randomised step
            n_jobs: Worker count

        Returns:
            self
        """
        raise NotImplementedError

    def predict(self, rows: Union[FeatureMatrix, np.ndarray]) -> np.ndarray:
        raise NotImplementedError

    def predict_proba(self, rows: Union[FeatureMatrix, np.ndarray]) -> np.ndarray:
        raise NotImplementedError(f"{self.name} does not provide class probabilities")

    def state_dict(self) -> Dict[str, Any]:
        raise NotImplementedError

    def load_state(self, state: Mapping[str, Any]) -> None:
        raise NotImplementedError

    def _require_fitted(self) -> None:
        if self.model is None:
            raise UnfittedForest(f"Model {self.name!r} has not been fitted")

    def to_dict(self) -> Dict[str, Any]:
        self._require_fitted()
        return {
            "model": self.name,
            "plugin_version": self.version,
            "params": dict(self.params),
            "seed": self.seed,
            "state": self.state_dict(),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ModelPlugin":
        if data.get("model") != cls.name:
            raise UnknownModel(str(data.get("model")), expected=cls.name)
        plugin = cls()
        plugin.params = {**cls.default_params, **data.get("params", {})}
        plugin.seed = data.get("seed")
        plugin.load_state(data["state"])
        return plugin


class ForestPlugin(ModelPlugin):
    """Shared plumbing for the three tree-ensemble plugins"""

    default_params = {
        "n_trees": 100,
        "max_depth": None,
        "min_samples_split": 2,
        "max_features": "sqrt",
    }

    def tree_params(self) -> TreeParams:
        params = dict(self.params)
        return TreeParams(
            n_trees=int(params["n_trees"]),
            # TOML has no null; 0 means unlimited
            max_depth=params["max_depth"] or None,
            min_samples_split=int(params["min_samples_split"]),
            max_features=params["max_features"],
            bootstrap=params.get("bootstrap"),
        )

    def grow(self, matrix: FeatureMatrix, hp: TreeParams, seed: int, n_jobs: Optional[int]) -> Forest:
        raise NotImplementedError

    def fit(self, matrix, params=None, seed=0, n_jobs=1):
        self.params = self.resolve_params(params)
        self.seed = seed
        self.model = self.grow(matrix, self.tree_params(), seed, n_jobs)
        return self

    def predict(self, rows):
        self._require_fitted()
        return predict(self.model, rows)

    def predict_proba(self, rows):
        self._require_fitted()
        return predict_proba(self.model, rows)

    def importances(self):
        self._require_fitted()
        return feature_importances(self.model)

    def state_dict(self):
        return self.model.to_dict()

    def load_state(self, state):
        self.model = Forest.from_dict(state)


class PluginManager:
    """
    Manages discovery and loading of model plugins.
    """

    def __init__(self, plugin_dir: str = DEFAULT_PLUGIN_DIR):
        """
        Initialize the plugin manager

        Args:
            plugin_dir: Directory containing plugins
        """
        self.plugin_dir = plugin_dir
        self.plugins: Dict[str, Type[ModelPlugin]] = {}

    def discover_plugins(self) -> List[str]:
        """
        Discover available plugins in the plugin directory

        Returns:
            List of plugin module names
        """
        try:
            discovered = sorted(
                file[:-3] for file in os.listdir(self.plugin_dir)
                if file.endswith(".py") and not file.startswith("_")
            )
        except OSError as e:
            logger.error(f"Error discovering plugins: {str(e)}")
            return []
        logger.debug(f"Discovered {len(discovered)} plugins: {', '.join(discovered)}")
        return discovered

    def load_plugin(self, module_name: str) -> Optional[Type[ModelPlugin]]:
        """
        Load a plugin class by module name

        Args:
            module_name: Name of the plugin module

        Returns:
            Plugin class if loaded successfully, None otherwise
        """
        for plugin_class in self.plugins.values():
            if plugin_class.__module__ == f"plugins.{module_name}":
                return plugin_class

        plugin_path = os.path.join(self.plugin_dir, f"{module_name}.py")
        if not os.path.exists(plugin_path):
            logger.error(f"Plugin file not found: {plugin_path}")
            return None

        qualified = f"plugins.{module_name}"
        try:
            module = sys.modules.get(qualified)
            if module is None:
                spec = importlib.util.spec_from_file_location(qualified, plugin_path)
                if not spec or not spec.loader:
                    logger.error(f"Failed to create module spec for {module_name}")
                    return None
                module = importlib.util.module_from_spec(spec)
                sys.modules[qualified] = module
                spec.loader.exec_module(module)
        except Exception as e:
            sys.modules.pop(qualified, None)
            logger.error(f"Failed to load plugin {module_name}: {str(e)}")
            return None

        # Only classes defined in the module itself count
        plugin_class = None
        for _, obj in inspect.getmembers(module, inspect.isclass):
            if issubclass(obj, ModelPlugin) and obj.__module__ == module.__name__:
                plugin_class = obj
                break

        if not plugin_class:
            logger.error(f"No ModelPlugin class found in {module_name}")
            return None

        self.plugins[plugin_class.name] = plugin_class
        logger.debug(f"Loaded plugin: {plugin_class.name} v{plugin_class.version}")
        return plugin_class

    def load_all_plugins(self) -> Dict[str, Type[ModelPlugin]]:
        """
        Discover and load all plugins

        Returns:
            Dictionary of model names and plugin classes
        """
        for module_name in self.discover_plugins():
            self.load_plugin(module_name)
        return dict(self.plugins)

    def available(self) -> List[str]:
        if not self.plugins:
            self.load_all_plugins()
        return sorted(self.plugins)

    def get_plugin_by_name(self, name: str) -> Type[ModelPlugin]:
        """
        Find a plugin class by its model name

        Raises:
            UnknownModel: if no plugin registers that name
        """
        if name not in self.plugins:
            self.load_all_plugins()
        try:
            return self.plugins[name]
        except KeyError:
            raise UnknownModel(name, available=sorted(self.plugins)) from None

    def create(self, name: str) -> ModelPlugin:
        return self.get_plugin_by_name(name)()

    def restore(self, data: Mapping[str, Any]) -> ModelPlugin:
        """Rebuild a fitted plugin from its to_dict() dump"""
        return self.get_plugin_by_name(str(data.get("model"))).from_dict(data)
