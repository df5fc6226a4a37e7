import csv
import hashlib
import json

import pytest

from fairclust import cli, metrics


def make_config(tmp_path, name="run.json", **sections):
    cfg = {
        "seed": 3,
        "paths": {
            "dataset": "data.csv",
            "schema": "schema.json",
            "checkpoint": "model.fcib",
            "report": "out/report",
            "embeddings": "out/emb.csv",
        },
        "synth": {"n_per_cluster": 40, "K": 3, "d": 4, "bias_strength": 0.8, "sensitive_mode": "discrete"},
        "train": {"K": 3, "epochs": 6, "warmup_epochs": 2, "batch_size": 32, "lr": 1e-3, "hidden": [8], "latent_dim": 4},
    }
    for k, v in sections.items():
        cfg[k] = {**cfg.get(k, {}), **v} if isinstance(v, dict) else v
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def run(*args):
    return cli.main([str(a) for a in args])


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_synth_stable_and_columns(tmp_path):
    cfg = make_config(tmp_path)
    assert run("synth", "--config", cfg) == 0
    first = digest(tmp_path / "data.csv")
    assert run("synth", "--config", cfg) == 0
    assert digest(tmp_path / "data.csv") == first
    header = (tmp_path / "data.csv").read_text().splitlines()[0].split(",")
    assert header[-2:] == ["sensitive", "label"] and len(header) == 6

    cfg = make_config(tmp_path, "c.json", synth={"sensitive_mode": "continuous"}, paths={"dataset": "cont.csv", "schema": "cs.json"})
    assert run("synth", "--config", cfg) == 0
    header = (tmp_path / "cont.csv").read_text().splitlines()[0].split(",")
    assert "sensitive_feature" in header


def test_usage_errors(tmp_path, capsys):
    assert run("synth", "--config", make_config(tmp_path, synth={"K": 1})) == 1
    assert run("synth", "--config", tmp_path / "nope.json") == 1
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"seed": 0, "extras": {}}))
    assert run("train", "--config", bad) == 1
    with pytest.raises(SystemExit) as info:
        run("fly", "--config", bad)
    assert info.value.code == 1
    cfg = make_config(tmp_path, "t.json", train={"alpha": -1})
    assert run("synth", "--config", cfg) == 0
    assert run("train", "--config", cfg) == 1


def test_train_eval_end_to_end(tmp_path):
    cfg = make_config(tmp_path)
    assert run("synth", "--config", cfg) == 0
    assert run("train", "--config", cfg) == 0
    assert (tmp_path / "model.fcib").exists()
    assert run("eval", "--config", cfg) == 0
    values = metrics.parse_text_report((tmp_path / "out/report.txt").read_text())
    for key in ("acc", "nmi", "bal", "mnce", "gdp", "rho_star_cg", "rho_star_zg"):
        assert 0.0 <= values[key] <= 100.0
    doc = json.loads((tmp_path / "out/report.json").read_text())
    assert doc["percent"]["acc"] == values["acc"]
    with open(tmp_path / "out/emb.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["id", "z_0", "z_1", "z_2", "z_3", "cluster", "sensitive"]
    assert len(rows) == 121


def test_continuous_eval_mode_contract(tmp_path):
    cfg = make_config(tmp_path, synth={"sensitive_mode": "continuous"})
    for cmd in ("synth", "train", "eval"):
        assert run(cmd, "--config", cfg) == 0
    values = metrics.parse_text_report((tmp_path / "out/report.txt").read_text())
    assert "rho_star_cg" in values and "bal" not in values and "mnce" not in values and "gdp" not in values


def test_data_errors(tmp_path):
    cfg = make_config(tmp_path)
    assert run("synth", "--config", cfg) == 0
    assert run("train", "--config", cfg) == 0
    ckpt = tmp_path / "model.fcib"
    ckpt.write_bytes(b"JUNK" + ckpt.read_bytes()[4:])
    assert run("eval", "--config", cfg) == 2

    text = (tmp_path / "data.csv").read_text().replace(",label", ",y")
    (tmp_path / "data.csv").write_text(text)
    assert run("train", "--config", cfg) == 2


def test_mode_mismatch_exit(tmp_path):
    disc = make_config(tmp_path)
    assert run("synth", "--config", disc) == 0
    assert run("train", "--config", disc) == 0
    cont = make_config(tmp_path, "c.json", synth={"sensitive_mode": "continuous"}, paths={"dataset": "c.csv", "schema": "c_schema.json"})
    assert run("synth", "--config", cont) == 0
    assert run("eval", "--config", cont) == 2


def test_numerical_abort_exit(tmp_path):
    cfg = make_config(tmp_path, train={"lr": 1e300, "warmup_epochs": 0})
    assert run("synth", "--config", cfg) == 0
    with pytest.warns(RuntimeWarning):
        assert run("train", "--config", cfg) == 3


def test_ablation_and_seed_override(tmp_path):
    cfg = make_config(tmp_path, ablation={"drop_fairness_loss": True, "drop_cluster_loss": True})
    assert run("synth", "--config", cfg) == 0
    assert run("train", "--config", cfg) == 0
    doc = json.loads((tmp_path / "out/report.json").read_text())
    assert doc["config"]["alpha"] == 0.0 and doc["config"]["beta"] == 0.0
    assert doc["config"]["seed"] == 3
    assert run("train", "--config", cfg, "--seed", 9) == 0
    assert json.loads((tmp_path / "out/report.json").read_text())["config"]["seed"] == 9


def test_transfer(tmp_path):
    cfg = make_config(tmp_path, transfer={"n_train": 64, "epochs": 30})
    for cmd in ("synth", "train", "transfer"):
        assert run(cmd, "--config", cfg) == 0
    values = metrics.parse_text_report((tmp_path / "out/report.txt").read_text())
    assert {"model.transfer_acc", "model.transfer_gdp"} <= set(values)

    schema = json.loads((tmp_path / "schema.json").read_text())
    schema["label_column"] = None
    (tmp_path / "schema.json").write_text(json.dumps(schema))
    assert run("transfer", "--config", cfg) == 2
