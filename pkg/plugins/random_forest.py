"""
Random forest model plugin.
"""
from core.plugin_manager import ForestPlugin
from core.trees import fit_random_forest


class RandomForestPlugin(ForestPlugin):
    """Bootstrap samples, random feature subsets, exhaustive thresholds"""

    # Plugin metadata
    name = "random_forest"
    description = "Random forest (bagged CART trees)"
    version = "1.0.0"
    author = "emgkit"

    default_params = {**ForestPlugin.default_params, "bootstrap": True}

    def grow(self, matrix, hp, seed, n_jobs):
        return fit_random_forest(matrix, hp, seed=seed, n_jobs=n_jobs)
