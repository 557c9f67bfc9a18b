"""
k-nearest neighbours model plugin.
"""
import logging

from core.classifiers import DEFAULT_K, KnnModel, fit_knn, predict_knn, tune_k
from core.plugin_manager import ModelPlugin

logger = logging.getLogger(__name__)


class KnnPlugin(ModelPlugin):
    """
    Brute-force k-NN on z-scored features.
    With tune_k the neighbour count is chosen by inner cross-validation
    on the training rows, ignoring k.
    """

    # Plugin metadata
    name = "knn"
    description = "k-nearest neighbours (Euclidean, majority vote)"
    version = "1.0.0"
    author = "emgkit"

    default_params = {
        "k": DEFAULT_K,
        "standardize": True,
        "tune_k": False,
    }

    def fit(self, matrix, params=None, seed=0, n_jobs=1):
        self.params = self.resolve_params(params)
        self.seed = seed
        self.n_jobs = n_jobs

        k = int(self.params["k"])
        standardize = bool(self.params["standardize"])
        if self.params["tune_k"]:
            k = tune_k(matrix, seed=seed, standardize=standardize)
            self.params["k"] = k
        self.model = fit_knn(matrix, k, standardize)
        return self

    def predict(self, rows):
        self._require_fitted()
        return predict_knn(self.model, rows, n_jobs=self.n_jobs)

    def state_dict(self):
        return self.model.to_dict()

    def load_state(self, state):
        self.model = KnnModel.from_dict(state)
