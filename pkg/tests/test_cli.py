import io
import json

import pandas as pd
import pytest
from PIL import Image

from cli.commands import build_parser, run_command
from core.plugin_manager import PluginManager


@pytest.fixture(autouse=True)
def in_tmp(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run_command(list(argv) + ["--log-file", "emgkit.log", "--quiet"], stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture
def synthetic_csv(tmp_path):
    path = tmp_path / "synthetic.csv"
    code, _, _ = run("synth", "--classes", "4", "--per-class", "40", "--seed", "7", "--out", str(path))
    assert code == 0
    return path


def test_synth_is_byte_identical(tmp_path):
    for name in ("a.csv", "b.csv"):
        assert run("synth", "--seed", "7", "--per-class", "30", "--out", str(tmp_path / name))[0] == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.csv.json").read_bytes() == (tmp_path / "b.csv.json").read_bytes()
    sidecar = json.loads((tmp_path / "a.csv.json").read_text(encoding="utf-8"))
    assert sidecar["seed"] == 7
    assert len(sidecar["config_hash"]) == 16


def test_unknown_subcommand_is_a_usage_error(capsys):
    code, _, _ = run("frobnicate")
    assert code == 2
    assert "usage" in capsys.readouterr().err


def test_version(capsys):
    assert run_command(["--version"]) == 0
    assert "emgkit" in capsys.readouterr().out


def test_global_flags_work_before_the_subcommand():
    args = build_parser().parse_args(["--seed", "3", "synth", "--out", "x.csv"])
    assert args.seed == 3
    args = build_parser().parse_args(["synth", "--seed", "4", "--out", "x.csv"])
    assert args.seed == 4


def test_evaluate_writes_report(tmp_path, synthetic_csv):
    report = tmp_path / "report.json"
    code, out, _ = run("evaluate", "--features", str(synthetic_csv), "--model", "knn", "--mode", "all",
                       "--seed", "7", "--n-jobs", "1", "--out", str(report))
    assert code == 0
    doc = json.loads(report.read_text(encoding="utf-8"))
    assert doc["accuracy"] >= 0.97
    assert doc["model"] == "knn"
    assert json.loads(out)["accuracy"] == doc["accuracy"]


def test_evaluate_is_reproducible(tmp_path, synthetic_csv):
    for name in ("r1.json", "r2.json"):
        code, _, _ = run("evaluate", "--features", str(synthetic_csv), "--model", "random_forest",
                         "--n-trees", "10", "--top-k", "5", "--selection-trees", "10",
                         "--seed", "5", "--out", str(tmp_path / name))
        assert code == 0
    assert (tmp_path / "r1.json").read_bytes() == (tmp_path / "r2.json").read_bytes()


def test_config_file_without_seed_exits_2(tmp_path, synthetic_csv):
    config = tmp_path / "run.toml"
    config.write_text(f'[dataset]\nfeatures_csv = "{synthetic_csv.as_posix()}"\n', encoding="utf-8")
    code, _, err = run("evaluate", "--config", str(config))
    assert code == 2
    assert json.loads(err.strip().splitlines()[-1])["error"] == "ConfigError"


def test_config_file_with_flag_overrides(tmp_path, synthetic_csv):
    config = tmp_path / "run.toml"
    config.write_text(
        f'[dataset]\nfeatures_csv = "{synthetic_csv.as_posix()}"\n'
        '[evaluation]\nseed = 1\nfolds = 3\n'
        '[model]\nname = "decision_tree"\n',
        encoding="utf-8",
    )
    report = tmp_path / "report.json"
    code, _, _ = run("evaluate", "--config", str(config), "--mode", "all", "--folds", "4", "--out", str(report))
    assert code == 0
    doc = json.loads(report.read_text(encoding="utf-8"))
    assert doc["model"] == "decision_tree"
    assert doc["protocol"]["folds"] == 4
    assert doc["seed"] == 1


def test_unknown_model_exits_2(synthetic_csv):
    code, _, err = run("evaluate", "--features", str(synthetic_csv), "--model", "svm", "--out", "r.json")
    assert code == 2
    assert "UnknownModel" in err


def test_report_renders_artifacts(tmp_path, synthetic_csv):
    report = tmp_path / "report.json"
    assert run("evaluate", "--features", str(synthetic_csv), "--mode", "all", "--out", str(report))[0] == 0

    md, csv, png = tmp_path / "r.md", tmp_path / "cm.csv", tmp_path / "cm.png"
    code, _, _ = run("report", "--report", str(report), "--markdown", str(md),
                     "--confusion-csv", str(csv), "--confusion-png", str(png))
    assert code == 0
    assert md.read_text(encoding="utf-8").startswith("# KNN (all features)")
    assert pd.read_csv(csv, index_col=0).shape == (4, 4)
    with Image.open(png) as img:
        assert img.format == "PNG"


def test_report_to_stdout(tmp_path, synthetic_csv):
    report = tmp_path / "report.json"
    run("evaluate", "--features", str(synthetic_csv), "--mode", "all", "--out", str(report))
    code, out, _ = run("report", "--report", str(report))
    assert code == 0
    assert "accuracy" in out


def test_inspect_dataset(dataset_dir):
    code, out, _ = run("inspect", "--dataset", str(dataset_dir))
    assert code == 0
    doc = json.loads(out)
    assert doc["recordings"] == 4
    assert doc["subjects"] == 2
    assert len(doc["directory_checksum"]) == 64


def test_inspect_citation_without_dataset():
    code, out, _ = run("inspect", "--citation")
    assert code == 0
    assert "UCI Machine Learning Repository" in json.loads(out)["citation"]


def test_missing_dataset_path_exits_2(tmp_path):
    code, _, err = run("inspect", "--dataset", str(tmp_path / "nowhere"))
    assert code == 2
    assert "ConfigError" in err


def test_malformed_recording_exits_1(dataset_dir):
    (dataset_dir / "01" / "9_raw_data.txt").write_text("1\t2\n", encoding="utf-8")
    code, _, err = run("inspect", "--dataset", str(dataset_dir))
    assert code == 1
    diagnostic = json.loads(err.strip().splitlines()[-1])
    assert diagnostic["error"] == "MalformedLine"
    assert diagnostic["context"]["path"].endswith("9_raw_data.txt")


def test_segment_and_extract(tmp_path, dataset_dir):
    code, out, _ = run("segment", "--dataset", str(dataset_dir))
    assert code == 0
    assert json.loads(out)["windows"] == 4 * 6 * 2

    features = tmp_path / "features.csv"
    code, _, _ = run("extract", "--dataset", str(dataset_dir), "--out", str(features))
    assert code == 0
    df = pd.read_csv(features)
    assert df.shape == (48, 162)
    assert set(df["subject_id"]) == {1, 2}


def test_select(tmp_path, synthetic_csv):
    out_path = tmp_path / "selection.json"
    code, _, _ = run("select", "--features", str(synthetic_csv), "--top-k", "3",
                     "--selection-trees", "10", "--out", str(out_path))
    assert code == 0
    doc = json.loads(out_path.read_text(encoding="utf-8"))
    assert len(doc["selected"]) == 3
    assert doc["selected"] == doc["ordering"][:3]


def test_select_k_too_large_exits_2(synthetic_csv):
    code, _, err = run("select", "--features", str(synthetic_csv), "--top-k", "99", "--selection-trees", "5")
    assert code == 2
    assert "KOutOfRange" in err


def test_train_dump_restores(tmp_path, synthetic_csv):
    dump = tmp_path / "model.json"
    code, _, _ = run("train", "--features", str(synthetic_csv), "--model", "extra_trees", "--n-trees", "5",
                     "--mode", "all", "--dump", str(dump))
    assert code == 0
    doc = json.loads(dump.read_text(encoding="utf-8"))
    assert doc["training_accuracy"] == 1.0
    plugin = PluginManager().restore(doc["model"])
    assert plugin.name == "extra_trees"


def test_compare(tmp_path, synthetic_csv):
    md = tmp_path / "compare.md"
    code, out, _ = run("compare", "--features", str(synthetic_csv), "--models", "knn,gaussian_nb",
                       "--top-k", "5", "--selection-trees", "10", "--out", str(tmp_path / "cmp.json"),
                       "--markdown", str(md))
    assert code == 0
    text = md.read_text(encoding="utf-8")
    assert "| KNN | 20 |" in text
    assert "Gesture Name" in text
    rows = json.loads((tmp_path / "cmp.json").read_text(encoding="utf-8"))["rows"]
    assert [r["model"] for r in rows] == ["knn", "gaussian_nb"]


def test_synth_parameters_change_the_config_hash(tmp_path):
    for name, classes in (("three.csv", "3"), ("four.csv", "4")):
        assert run("synth", "--classes", classes, "--seed", "7", "--per-class", "20", "--out", str(tmp_path / name))[0] == 0
    hashes = {json.loads((tmp_path / f"{name}.json").read_text(encoding="utf-8"))["config_hash"]
              for name in ("three.csv", "four.csv")}
    assert len(hashes) == 2


def test_compare_does_not_overwrite_evaluate_report(tmp_path, synthetic_csv):
    assert run("evaluate", "--features", str(synthetic_csv), "--mode", "all")[0] == 0
    assert run("compare", "--features", str(synthetic_csv), "--models", "gaussian_nb", "--top-k", "5",
               "--selection-trees", "5")[0] == 0
    assert "accuracy" in json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
    assert "rows" in json.loads((tmp_path / "comparison.json").read_text(encoding="utf-8"))


def test_citation_output_is_json():
    code, out, _ = run("inspect", "--citation")
    assert code == 0
    assert "doi.org" in json.loads(out)["citation"]


def test_each_run_logs_to_its_own_file(tmp_path):
    for name in ("first.log", "second.log"):
        code = run_command(["inspect", "--citation", "--log-file", name], stdout=io.StringIO())
        assert code == 0
    assert (tmp_path / "first.log").exists()
    assert (tmp_path / "second.log").exists()


def test_png_cache_lives_beside_the_output(tmp_path, synthetic_csv):
    report = tmp_path / "report.json"
    assert run("evaluate", "--features", str(synthetic_csv), "--mode", "all", "--out", str(report))[0] == 0
    png = tmp_path / "figures" / "cm.png"
    assert run("report", "--report", str(report), "--markdown", str(tmp_path / "r.md"),
               "--confusion-png", str(png))[0] == 0
    assert png.exists()
    assert (tmp_path / "figures" / ".emgkit_cache").is_dir()
    assert not (tmp_path / "images").exists()
