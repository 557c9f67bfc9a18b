"""
Extremely randomised trees model plugin.
"""
from core.plugin_manager import ForestPlugin
from core.trees import fit_extra_trees


class ExtraTreesPlugin(ForestPlugin):
    """
    The same ensemble the selection step ranks features with, used here
    as a classifier in its own right.
    """

    # Plugin metadata
    name = "extra_trees"
    description = "Extra trees (one random threshold per candidate feature)"
    version = "1.0.0"
    author = "emgkit"

    def grow(self, matrix, hp, seed, n_jobs):
        return fit_extra_trees(matrix, hp, seed=seed, n_jobs=n_jobs)
