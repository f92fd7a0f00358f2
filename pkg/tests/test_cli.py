import json
import subprocess
import sys

import pandas as pd
import pytest

from miai import cli, experiment
from miai.experiment import ConfigError, ExperimentConfig, ExperimentError, preset, validate_attack

from conftest import ADULT_CSV, random_toy


def toy_config(tmp_path, attacks=None, **dataset):
    d = random_toy(300, seed=21)
    d.schema.dump(tmp_path / "schema.json")
    d.frame.to_csv(tmp_path / "toy.csv", index=False)
    return ExperimentConfig.from_dict({
        "name": "toy",
        "dataset": {"csv": str(tmp_path / "toy.csv"), "schema": str(tmp_path / "schema.json"), "n_A": 100,
                    "split_seed": 3, **dataset},
        "model": {"family": "decision-tree", "params": {"min_leaf_count": 2}},
        "attacks": attacks or [
            {"name": "csmia"},
            {"name": "naive", "knowledge": {"priors": "DS_T"}},
            {"name": "fjrmia", "knowledge": {"priors": "DS_T", "confusion": "DS_T"}},
            {"name": "cmmia", "knowledge": {"ds_a": True}},
            {"name": "random", "params": {"seed": 1}},
        ],
        "analysis": {"per_class": True},
    })


def test_fjrmia_without_confusion_is_rejected():
    with pytest.raises(ConfigError, match="capability matrix"):
        validate_attack({"name": "fjrmia", "knowledge": {"priors": "DS_T"}})


def test_capability_rows():
    validate_attack({"name": "csmia"})
    validate_attack({"name": "cmmia", "knowledge": {"ds_a": True}})
    with pytest.raises(ConfigError):
        validate_attack({"name": "cmmia"})
    with pytest.raises(ConfigError):
        validate_attack({"name": "naive"})
    with pytest.raises(ConfigError):
        validate_attack({"name": "naive", "knowledge": {"priors": "DS_T", "ds_a": True}})
    with pytest.raises(ConfigError):
        validate_attack({"name": "cmmia", "knowledge": {"ds_a": True}}, has_ds_a=False)
    with pytest.raises(ConfigError):
        validate_attack({"name": "csmia_partial", "knowledge": {"unknown": ["a", "b", "c"]}})


def test_missing_file_fails_validation(tmp_path):
    cfg = toy_config(tmp_path)
    cfg.dataset["csv"] = str(tmp_path / "absent.csv")
    with pytest.raises(ConfigError, match="no such file"):
        cfg.validate()


def test_run_orders_and_reproduces(tmp_path):
    cfg = toy_config(tmp_path)
    b1 = experiment.run(cfg, tmp_path / "out1")
    b2 = experiment.run(cfg, tmp_path / "out2")
    assert [r["attack"] for r in b1["comparison"]] == ["naive", "random", "fjrmia", "cmmia", "csmia"]
    assert (tmp_path / "out1" / "report.json").read_bytes() == (tmp_path / "out2" / "report.json").read_bytes()
    assert b1["ledger"]["runs"] == {"fjrmia": 400, "cmmia": 600, "csmia": 400}
    assert b1["seeds"] == {"split": 3, "model": None}
    preds = pd.read_csv(tmp_path / "out1" / "predictions_csmia.csv")
    assert list(preds.columns) == ["record_id", "value", "case", "queries"]
    assert len(preds) == 200
    plot = pd.read_csv(tmp_path / "out1" / "plot_data.csv")
    assert set(plot["metric"]) == {"precision", "recall", "accuracy", "f1", "g_mean", "mcc"}


def test_comparison_equals_standalone(tmp_path):
    cfg = toy_config(tmp_path)
    both = experiment.run(cfg)
    alone = experiment.run(toy_config(tmp_path, attacks=[{"name": "csmia"}]))
    pick = lambda b: next(r for r in b["comparison"] if r["attack"] == "csmia")
    assert pick(both) == pick(alone)


def test_seed_override(tmp_path):
    cfg = toy_config(tmp_path).override_seed(9)
    assert cfg.dataset["split_seed"] == 9 and cfg.model["seed"] == 9
    assert next(a for a in cfg.attacks if a["name"] == "random")["params"]["seed"] == 9


def test_failure_removes_partial_output(tmp_path, monkeypatch):
    cfg = toy_config(tmp_path)

    def boom(*a, **k):
        raise RuntimeError("disk full")

    monkeypatch.setattr(experiment.metrics, "rows_to_csv", boom)
    with pytest.raises(ExperimentError) as e:
        experiment.run(cfg, tmp_path / "out")
    assert e.value.stage == "write"
    assert not (tmp_path / "out").exists()
    assert [p.name for p in tmp_path.iterdir() if p.name.startswith(".miai-")] == []


def test_stage_name_on_failure(tmp_path):
    cfg = toy_config(tmp_path, attacks=[{"name": "csmia_partial", "knowledge": {"unknown": ["nope"]}}])
    with pytest.raises(ExperimentError) as e:
        experiment.run(cfg)
    assert e.value.stage == "attack:csmia_partial"


def test_presets():
    g = preset("gss-dt")
    assert [a["name"] for a in g.attacks] == ["naive", "random", "fjrmia", "cmmia", "csmia"]
    assert g.dataset["n_A"] == 5_079
    p = preset("adult-partial")
    assert p.attacks[-1]["knowledge"]["unknown"] == experiment.PARTIAL_PAIRS
    with pytest.raises(ConfigError):
        preset("nope")


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"dataset": {}, "bogus": 1})


def test_cli_workflow(tmp_path, capsys):
    d = random_toy(200, seed=30)
    d.schema.dump(tmp_path / "schema.json")
    d.frame.to_csv(tmp_path / "t.csv", index=False)
    model = tmp_path / "m.json"
    assert cli.main(["train-target", "--data", str(tmp_path / "t.csv"), "--schema", str(tmp_path / "schema.json"),
                     "--out", str(model), "--min-leaf", "1"]) == 0
    preds = tmp_path / "p.csv"
    assert cli.main(["attack", "--attack", "csmia", "--model", str(model), "--schema", str(tmp_path / "schema.json"),
                     "--targets", str(tmp_path / "t.csv"), "--out", str(preds)]) == 0
    assert "400" in capsys.readouterr().out
    assert cli.main(["evaluate", "--predictions", str(preds), "--truth", str(tmp_path / "t.csv"),
                     "--schema", str(tmp_path / "schema.json"), "--per-class",
                     "--out", str(tmp_path / "r.json")]) == 0
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc["reports"]["csmia"]["total"] == 200
    assert cli.main(["report", str(tmp_path / "r.json")]) == 0
    assert "csmia" in capsys.readouterr().out

    cfg = {"attack": "fjrmia", "model": str(model), "schema": str(tmp_path / "schema.json"),
           "targets": str(tmp_path / "t.csv"), "out": str(tmp_path / "f.json"),
           "knowledge": {"priors": "DS_T", "confusion": "DS_T"}}
    (tmp_path / "a.json").write_text(json.dumps(cfg))
    assert cli.main(["attack", "--config", str(tmp_path / "a.json")]) == 0
    assert len(json.loads((tmp_path / "f.json").read_text())) == 200

    cfg["knowledge"] = {"priors": "DS_T"}
    (tmp_path / "b.json").write_text(json.dumps(cfg))
    assert cli.main(["attack", "--config", str(tmp_path / "b.json")]) == 2
    assert "capability matrix" in capsys.readouterr().err


def test_cli_run_config(tmp_path, capsys):
    cfg = toy_config(tmp_path)
    (tmp_path / "c.json").write_text(json.dumps(cfg.to_dict()))
    assert cli.main(["run", "--config", str(tmp_path / "c.json"), "--seed", "5", "--out", str(tmp_path / "o")]) == 0
    bundle = json.loads((tmp_path / "o" / "report.json").read_text())
    assert bundle["seeds"] == {"split": 5, "model": 5}


def test_prepare_data_adult(tmp_path, monkeypatch):
    raw = tmp_path / "adult.data"
    raw.write_text("39, State-gov, 77516, Bachelors, 13, Never-married, Adm-clerical, Not-in-family, White, "
                   "Male, 2174, 0, 40, United-States, <=50K\n"
                   "50, ?, 83311, Bachelors, 13, Married-civ-spouse, Exec-managerial, Husband, White, Male, "
                   "0, 0, 13, United-States, <=50K\n" +
                   "38, Private, 215646, HS-grad, 9, Married-AF-spouse, Handlers-cleaners, Husband, White, "
                   "Male, 0, 0, 40, United-States, >50K\n" * 3)
    monkeypatch.setenv(experiment.DATA_ENV, str(tmp_path / "data"))
    assert cli.main(["prepare-data", "adult", "--raw", str(raw), "--n-a", "1"]) == 0
    out = tmp_path / "data" / "adult"
    assert len(pd.read_csv(out / "clean.csv")) == 4
    assert len(pd.read_csv(out / "ds_t.csv")) == 3
    assert json.loads((out / "schema.json").read_text())["attributes"][5]["domain"] == ["Single", "Married"]


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "miai", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    for cmd in ("prepare-data", "train-target", "serve", "attack", "evaluate", "report", "run"):
        assert cmd in r.stdout
