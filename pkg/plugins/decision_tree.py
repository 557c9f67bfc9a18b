"""
Single CART tree model plugin.
"""
from core.plugin_manager import ForestPlugin
from core.trees import TreeParams, fit_decision_tree


class DecisionTreePlugin(ForestPlugin):
    # Plugin metadata
    name = "decision_tree"
    description = "CART decision tree (Gini, exhaustive thresholds)"
    version = "1.0.0"
    author = "emgkit"

    default_params = {
        "max_depth": None,
        "min_samples_split": 2,
        "max_features": "all",
    }

    def tree_params(self):
        return TreeParams(
            n_trees=1,
            max_depth=self.params["max_depth"] or None,
            min_samples_split=int(self.params["min_samples_split"]),
            max_features=self.params["max_features"],
        )

    def grow(self, matrix, hp, seed, n_jobs):
        return fit_decision_tree(matrix, hp, seed=seed, n_jobs=n_jobs)
