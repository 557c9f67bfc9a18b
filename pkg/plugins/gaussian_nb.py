"""
Gaussian naive Bayes model plugin.
"""
from core.classifiers import GnbModel, fit_gnb, predict_gnb, predict_proba_gnb
from core.plugin_manager import ModelPlugin


class GaussianNbPlugin(ModelPlugin):
    """Independent per-feature Gaussians with a variance floor"""

    # Plugin metadata
    name = "gaussian_nb"
    description = "Gaussian naive Bayes"
    version = "1.0.0"
    author = "emgkit"

    default_params = {}

    def fit(self, matrix, params=None, seed=0, n_jobs=1):
        self.params = self.resolve_params(params)
        self.seed = seed
        self.model = fit_gnb(matrix)
        return self

    def predict(self, rows):
        self._require_fitted()
        return predict_gnb(self.model, rows)

    def predict_proba(self, rows):
        self._require_fitted()
        return predict_proba_gnb(self.model, rows)

    def state_dict(self):
        return self.model.to_dict()

    def load_state(self, state):
        self.model = GnbModel.from_dict(state)
