import json
import shutil

import pytest

from churnlab.cli import main
from churnlab.config import CONFIG_VERSION, RunConfig, config_from_json, load_config
from churnlab.errors import ConfigError
from churnlab.stages import PARTIAL_MARKER, STAGES
from churnlab.tables import sha256_file

SMALL_MODELS = {
    "cart": {"max_depth": 4},
    "forest": {"max_depth": 4, "n_rounds": 15},
    "boosted": {"max_depth": 3, "n_rounds": 30},
}


def write_config(path, dataset, **extra):
    doc = {"version": CONFIG_VERSION, "dataset": str(dataset), "cv_folds": 3, "models": SMALL_MODELS, **extra}
    path.write_text(json.dumps(doc))
    return path


@pytest.fixture(scope="module")
def small_run(synthetic_csv, tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = write_config(root / "config.json", synthetic_csv)
    assert main(["run", "--config", str(cfg), "--out", str(root / "full")]) == 0
    return root, cfg


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_run_writes_every_artifact(small_run):
    root, _ = small_run
    out = root / "full"
    m = manifest(out)
    for name in (
        "model_logistic.json", "model_cart.json", "model_forest.json", "model_boosted.json",
        "model_report.csv", "shap.csv", "beeswarm.csv", "importance.svg", "km.svg", "rfm_box.svg",
        "report.md", "report.html", "pipeline.json",
    ):
        assert (out / name).is_file(), name
        assert name in m["artifacts"]
    for name, digest in m["artifacts"].items():
        assert sha256_file(out / name) == digest
    c = m["row_counts"]
    assert c["raw"] >= c["deduplicated"] >= c["final"] and c["raw"] == 1500
    assert not (out / PARTIAL_MARKER).exists()
    html = (out / "report.html").read_text()
    assert html.count("<svg") >= 4


def test_stage_chain_matches_run(small_run):
    root, cfg = small_run
    out = root / "chain"
    for stage in STAGES:
        assert main([stage, "--config", str(cfg), "--out", str(out), "--threads", "2"]) == 0
    assert manifest(out) == manifest(root / "full")


def test_same_config_twice_is_identical(small_run):
    root, cfg = small_run
    assert main(["run", "--config", str(cfg), "--out", str(root / "again")]) == 0
    assert manifest(root / "again")["artifacts"] == manifest(root / "full")["artifacts"]


def test_seed_override_lands_in_snapshot(small_run, tmp_path):
    root, cfg = small_run
    shutil.copytree(root / "full", tmp_path / "o")
    assert main(["ingest", "--config", str(cfg), "--out", str(tmp_path / "o"), "--seed", "5"]) == 0
    assert load_config(cfg, {"seed": 5}).snapshot()["seed"] == 5


def test_missing_dataset_exit_two_no_outputs(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", tmp_path / "absent.csv")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "out")]) == 2
    assert not (tmp_path / "out").exists()
    assert "dataset not found" in capsys.readouterr().err


def test_bad_config_exit_two(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"version": CONFIG_VERSION, "dataset": "x.csv", "bogus": 1}))
    assert main(["run", "--config", str(p)]) == 2
    p.write_text(json.dumps({"version": 99, "dataset": "x.csv"}))
    assert main(["run", "--config", str(p)]) == 2
    p.write_text("{not json")
    assert main(["run", "--config", str(p)]) == 2
    assert main(["run", "--config", str(tmp_path / "nope.json")]) == 2


def test_stage_without_inputs_names_the_stage(small_run, tmp_path, capsys):
    _, cfg = small_run
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "stage 'train'" in err and "preprocess" in err
    assert (tmp_path / "o" / PARTIAL_MARKER).read_text().startswith("train")


def test_artifact_version_mismatch(small_run, tmp_path, capsys):
    root, cfg = small_run
    out = tmp_path / "o"
    shutil.copytree(root / "full", out)
    doc = json.loads((out / "train.json").read_text())
    doc["version"] = 42
    (out / "train.json").write_text(json.dumps(doc))
    assert main(["evaluate", "--config", str(cfg), "--out", str(out)]) == 2
    assert "version" in capsys.readouterr().err
    assert (out / PARTIAL_MARKER).exists()


def test_data_error_exit_three(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("CustomerID,Churn\n1,0\n")
    cfg = write_config(tmp_path / "c.json", bad)
    assert main(["ingest", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3
    assert "stage 'ingest'" in capsys.readouterr().err


def test_relative_paths_resolve_against_config(tmp_path):
    (tmp_path / "d").mkdir()
    (tmp_path / "d" / "x.csv").write_text("")
    cfg = config_from_json({"version": CONFIG_VERSION, "dataset": "d/x.csv"}, base_dir=tmp_path)
    assert cfg.dataset_path == tmp_path / "d" / "x.csv"
    cfg.validate()


def test_config_validation():
    cfg = RunConfig(dataset="/nonexistent.csv")
    with pytest.raises(ConfigError):
        cfg.validate()
    with pytest.raises(ConfigError):
        config_from_json({"version": CONFIG_VERSION, "dataset": "a", "models": {"svm": {}}})
    with pytest.raises(ConfigError):
        config_from_json({"version": CONFIG_VERSION, "dataset": "a", "preprocess": {"alpha": 0.1, "nope": 1}})


def test_snapshot_ignores_threads_and_out(tmp_path):
    a = config_from_json({"version": CONFIG_VERSION, "dataset": "a.csv", "threads": 1, "out_dir": "x"})
    b = config_from_json({"version": CONFIG_VERSION, "dataset": "a.csv", "threads": 8, "out_dir": "y"})
    assert a.snapshot() == b.snapshot()
    assert a.hyperparams("forest").seed == a.seed
