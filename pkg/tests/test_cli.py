import json
import os

import numpy as np
import pytest

from gogenzip import nn
from gogenzip.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from gogenzip.config import ExperimentConfig, default_seed, parse_kv
from gogenzip.exceptions import InvalidArgumentError
from gogenzip.experiments import read_mask_file
from gogenzip.model import GenZipModel, ModelConfig
from gogenzip.tasks import TaskSpec

TINY = ["--n-bs", "16", "--n-days", "10", "--n-classes", "2", "--epochs", "1",
        "--batch-size", "16"]


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def tiny(tmp_path, *extra):
    return [*TINY, "--run-dir", str(tmp_path / "runs"), *extra]


# ------------------------------------------------------------------- config

def test_config_round_trip(tmp_path):
    cfg = ExperimentConfig(sr=0.2, cr=3.5, codec="generative-only", deterministic=True)
    p = tmp_path / "c.txt"
    cfg.save(p)
    back = ExperimentConfig.load(p)
    assert back == cfg and back.fingerprint() == cfg.fingerprint()


def test_fingerprint_ignores_non_semantic_fields():
    a = ExperimentConfig()
    assert a.fingerprint() == a.replace(jobs=8, run_dir="x", checkpoint_every=3).fingerprint()
    assert a.fingerprint() != a.replace(seed=1).fingerprint()


@pytest.mark.parametrize("change", [
    {"sr": 0.0}, {"sr": 1.5}, {"cr": 2.9, "rate": 0.2}, {"mode": "x"}, {"codec": "zip"},
    {"epochs": 0}, {"latent_dim": -1},
])
def test_config_validation(change):
    with pytest.raises(InvalidArgumentError):
        ExperimentConfig(**change)


def test_config_file_errors(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("sr = 0.3  # comment\n\nbogus_key=1\n")
    assert parse_kv(p) == {"sr": "0.3", "bogus_key": "1"}
    with pytest.raises(InvalidArgumentError, match="bogus_key"):
        ExperimentConfig.load(p)
    p.write_text("just words\n")
    with pytest.raises(InvalidArgumentError, match=":1"):
        parse_kv(p)
    p.write_text("epochs=many\n")
    with pytest.raises(InvalidArgumentError, match="epochs"):
        ExperimentConfig.load(p)


def test_seed_env(monkeypatch):
    monkeypatch.delenv("GGZ_SEED", raising=False)
    assert default_seed() == 0
    monkeypatch.setenv("GGZ_SEED", "17")
    assert default_seed() == 17
    monkeypatch.setenv("GGZ_SEED", "x")
    with pytest.raises(InvalidArgumentError):
        default_seed()


# ------------------------------------------------------------- exit codes

@pytest.mark.parametrize("argv", [
    [], ["frobnicate"], ["train", "--no-such-flag"], ["train", "--sr", "2"],
    ["train", "--epochs", "abc"], ["sweep", "--srs", "a,b"], ["export-masks", "x"],
])
def test_usage_errors_exit_1(argv, capsys):
    code, _, err = run(argv, capsys)
    assert code == EXIT_USAGE
    assert err


def test_bad_seed_env_is_usage_error(monkeypatch, capsys, tmp_path):
    monkeypatch.setenv("GGZ_SEED", "nope")
    assert run(["train", *tiny(tmp_path)], capsys)[0] == EXIT_USAGE


def test_missing_checkpoint_exits_2(capsys, tmp_path):
    code, _, err = run(["eval", str(tmp_path / "none")], capsys)
    assert code == EXIT_DATA and "not found" in err


def test_bad_csv_exits_2(capsys, tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("bs_id,timestamp,k0\na,2024-01-01T00:00:00,1\na,2024-01-01T00:00:00,2\n")
    code, _, err = run(["calibrate", "--data", str(p)], capsys)
    assert code == EXIT_DATA and "duplicate" in err


def test_too_little_data_exits_2(capsys, tmp_path):
    code, _, err = run(["train", *tiny(tmp_path), "--n-bs", "4"], capsys)
    assert code == EXIT_DATA and "calibrate" in err


def test_help_exits_0(capsys):
    assert main(["--help"]) == EXIT_OK
    assert "train" in capsys.readouterr().out


# ------------------------------------------------------------------ verbs

def test_synth_writes_csv_and_manifest(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("GGZ_SEED", "3")
    out = tmp_path / "d.csv"
    code, stdout, _ = run(["synth", "--out", str(out), "--n-bs", "4", "--n-days", "2",
                           "--n-classes", "2"], capsys)
    assert code == EXIT_OK
    manifest = json.loads((tmp_path / "d.manifest.json").read_text())
    assert manifest["n_bs"] == 4 and manifest["meta"]["seed"] == 3
    assert len(out.read_text().splitlines()) == 1 + 4 * 48


def test_calibrate(capsys, tmp_path):
    out = tmp_path / "rate.json"
    code, stdout, _ = run(["calibrate", *TINY, "--out", str(out)], capsys)
    assert code == EXIT_OK
    model = json.loads(out.read_text())
    assert model == json.loads(stdout)
    assert model["d"] == 816 and 0 < model["r_lc"] < 1.5 and model["n_calibration"] >= 100


def test_train_then_eval(capsys, tmp_path):
    code, stdout, _ = run(["train", *tiny(tmp_path, "--cr", "2.9")], capsys)
    assert code == EXIT_OK
    info = json.loads(stdout)
    run_dir = info["run_dir"]
    assert sorted(os.listdir(run_dir)) == ["config.txt", "metrics.tsv", "model.ggnz",
                                           "model.json"]
    assert len(open(os.path.join(run_dir, "metrics.tsv")).read().splitlines()) == 2
    code, stdout, _ = run(["eval", run_dir], capsys)
    assert code == EXIT_OK
    row = json.loads(stdout)
    assert row["fingerprint"] == info["fingerprint"]
    assert json.loads(open(os.path.join(run_dir, "result.json")).read())["mae"] == row["mae"]
    code, stdout, _ = run(["eval", run_dir, "--split", "val", "--deterministic"], capsys)
    assert code == EXIT_OK
    assert os.path.exists(os.path.join(run_dir, "result_val_det.json"))


def test_flags_override_config_file_and_env_seed(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("GGZ_SEED", "5")
    conf = tmp_path / "c.txt"
    conf.write_text("sr=0.2\nepochs=3\n")
    code, stdout, _ = run(["train", "--config", str(conf), *tiny(tmp_path, "--sr", "0.6")],
                          capsys)
    assert code == EXIT_OK
    cfg = ExperimentConfig.load(os.path.join(json.loads(stdout)["run_dir"], "config.txt"))
    assert (cfg.sr, cfg.epochs, cfg.seed) == (0.6, 1, 5)


def test_checkpoint_every_writes_snapshots(capsys, tmp_path):
    code, stdout, _ = run(["train", *tiny(tmp_path, "--epochs", "2", "--checkpoint-every", "1")],
                          capsys)
    assert code == EXIT_OK
    files = os.listdir(json.loads(stdout)["run_dir"])
    assert {"model.epoch001.ggnz", "model.epoch002.ggnz"} <= set(files)


def test_sweep_writes_curves(capsys, tmp_path):
    code, stdout, _ = run(["sweep", "--srs", "0.4,1.0", "--crs", "2.9",
                           "--codecs", "hybrid,generative-only", *tiny(tmp_path)], capsys)
    assert code == EXIT_OK
    out_dir = stdout.strip().splitlines()[-1].split("outputs in ")[1]
    dats = sorted(f for f in os.listdir(out_dir) if f.endswith(".dat"))
    assert dats == ["adaptive_SG_sr0.4.dat", "adaptive_SG_sr1.dat", "adaptive_SH_sr0.4.dat",
                    "adaptive_SH_sr1.dat"]
    for name in dats:
        xy = np.loadtxt(os.path.join(out_dir, name), ndmin=2)
        assert xy.shape == (1, 2)
    assert len(open(os.path.join(out_dir, "results.tsv")).read().splitlines()) == 5


# ---------------------------------------------------------------- masks

def save_model(tmp_path, **kw):
    cfg = ModelConfig(k=34, t=24, n_classes=2, latent_dim=4, ae_hidden=(8,), head_sizes=(4,),
                      **kw)
    model = GenZipModel(cfg)
    prefix = str(tmp_path / "model")
    model.save(prefix)
    return model, prefix


def test_export_zero_logits_gives_all_unsampled(capsys, tmp_path):
    model, prefix = save_model(tmp_path, tasks=[TaskSpec(0, 0), TaskSpec(1, 2)])
    for name, p in model.params.items():
        if name.startswith("policy"):
            p.data[:] = 0.0
    model.save(prefix)
    out = tmp_path / "masks"
    code, stdout, _ = run(["export-masks", prefix, "--out", str(out)], capsys)
    assert code == EXIT_OK
    files = sorted(os.listdir(out))
    assert files == ["masks_task0_class0.txt", "masks_task0_class1.txt",
                     "masks_task1_class0.txt", "masks_task1_class1.txt"]
    grids = read_mask_file(out / files[0])
    assert len(grids) == 24
    assert all(g.shape == (24, 34) and not g.any() for g in grids)


def test_export_subset_of_contexts(capsys, tmp_path):
    _, prefix = save_model(tmp_path, tasks=[TaskSpec(0, 0), TaskSpec(1, 2)])
    out = tmp_path / "m"
    code, _, _ = run(["export-masks", prefix, "--out", str(out), "--tasks", "1",
                      "--classes", "0", "--hours", "3,9"], capsys)
    assert code == EXIT_OK
    grids = read_mask_file(out / "masks_task1_class0.txt")
    assert len(grids) == 2
    assert set(np.unique(np.concatenate(grids))) <= {0, 1, 2}


def test_export_fixed_policy_has_one_grid(capsys, tmp_path):
    _, prefix = save_model(tmp_path, policy="fixed")
    out = tmp_path / "m"
    assert run(["export-masks", prefix, "--out", str(out)], capsys)[0] == EXIT_OK
    assert os.listdir(out) == ["masks_fixed.txt"]
    text = (out / "masks_fixed.txt").read_text()
    assert text.startswith("# fixed policy")
    assert len(read_mask_file(out / "masks_fixed.txt")) == 1


def test_checkpoint_without_rate_model_still_loads(tmp_path):
    model, prefix = save_model(tmp_path)
    back = GenZipModel.load(prefix)
    assert nn.dumps_params(back.params) == nn.dumps_params(model.params)


def test_compare_go_table(capsys, tmp_path):
    out = tmp_path / "cmp"
    code, stdout, _ = run(["compare-go", "--seeds", "0", "--out", str(out),
                           *tiny(tmp_path, "--go-epochs", "1", "--go-batch-size", "12")], capsys)
    assert code == EXIT_OK
    lines = stdout.strip().splitlines()
    assert lines[0] == "task\tkpi\trecon-based\tgo-e2e"
    assert len(lines) == 7
    assert "±" in lines[1]
    per_seed = json.loads((out / "compare_go.json").read_text())
    assert len(per_seed) == 1 and set(per_seed[0]) == {"recon-based", "go-e2e"}
