"""
Full-corpus checks. Set EMGKIT_UCI_ROOT to the unpacked dataset directory to run them.
"""
import os

import pytest

from core.dataset_io import load_dataset
from core.evaluation import evaluate_pipeline, load_matrix
from data.settings import Settings

UCI_ROOT = os.environ.get("EMGKIT_UCI_ROOT")

pytestmark = [
    pytest.mark.slow,
    pytest.mark.skipif(not UCI_ROOT, reason="EMGKIT_UCI_ROOT is not set"),
]


@pytest.fixture(scope="module")
def config():
    settings = Settings()
    settings.set("dataset", "root", UCI_ROOT)
    settings.set("evaluation", "n_jobs", 0)
    return settings.to_run_config()


@pytest.fixture(scope="module")
def matrix(config):
    return load_matrix(config)


@pytest.fixture(scope="module")
def reports(config, matrix):
    runs = {
        "knn_selected": config.with_overrides(model="knn", feature_mode="selected"),
        "knn_all": config.with_overrides(model="knn", feature_mode="all"),
        "tree_selected": config.with_overrides(model="decision_tree", feature_mode="selected"),
        "forest_selected": config.with_overrides(model="random_forest", feature_mode="selected"),
        "gnb_all": config.with_overrides(model="gaussian_nb", feature_mode="all"),
    }
    return {name: evaluate_pipeline(cfg, matrix) for name, cfg in runs.items()}


def test_corpus_loads(config):
    recordings = load_dataset(config.dataset_root)
    assert len(recordings) == 72
    assert len({r.subject_id for r in recordings}) == 36


def test_knn_selected_accuracy_band(reports):
    assert 0.939 <= reports["knn_selected"].accuracy <= 1.0


def test_gaussian_nb_trails_by_thirty_points(reports):
    gnb = reports["gnb_all"].accuracy
    assert reports["knn_selected"].accuracy - gnb >= 0.30
    assert reports["tree_selected"].accuracy - gnb >= 0.30


def test_random_forest_selected_band(reports):
    assert abs(reports["forest_selected"].accuracy - 0.97) <= 0.035


def test_selection_costs_at_most_one_point(reports):
    assert reports["knn_selected"].accuracy >= reports["knn_all"].accuracy - 0.01


def test_every_gesture_f1(reports):
    for code, values in reports["knn_selected"].summary.per_class.items():
        assert values["f1"] >= 0.90, code
