import json
import subprocess
import sys
import time

import numpy as np
import pytest

from hotmvl.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main, read_config, replay
from hotmvl.data import MultiViewDataset, load_manifest, write_manifest
from hotmvl.train import TrainConfig, load_model

FAST = ["--epochs", "2", "--batch-size", "50", "--hidden", "8"]


@pytest.fixture(scope="module")
def small_synth(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth") / "ds"
    assert main(["synth", "--out", str(out), "--n-samples", "300", "--seed", "1"]) == EXIT_OK
    return out


@pytest.fixture(scope="module")
def trained(small_synth, tmp_path_factory):
    out = tmp_path_factory.mktemp("train") / "run"
    code = main(["train", str(small_synth), "--out", str(out), "--mode", "semisupervised", *FAST])
    assert code == EXIT_OK
    return out


def test_synth_defaults(tmp_path):
    assert main(["synth", "--out", str(tmp_path / "d")]) == EXIT_OK
    ds = load_manifest(tmp_path / "d")
    assert ds.n_views == 6 and ds.n_samples == 2000
    assert len(set(ds.meta["planted"])) == 3
    run = json.loads((tmp_path / "d" / "run.json").read_text())
    assert run["command"] == "synth" and run["config"]["noise"] == 0.1


def test_synth_noiseless_files_keep_linear_relation(tmp_path):
    assert main(["synth", "--out", str(tmp_path), "--noise", "0", "--n-samples", "200"]) == EXIT_OK
    ds = load_manifest(tmp_path, standardize_views=False)
    A = np.hstack([ds.views[0], np.ones((200, 1))])
    coef, *_ = np.linalg.lstsq(A, ds.views[1], rcond=None)
    assert np.linalg.norm(A @ coef - ds.views[1]) / np.linalg.norm(ds.views[1]) < 1e-10


def test_synth_same_seed_same_bytes(tmp_path):
    for name in ("a", "b"):
        assert main(["synth", "--out", str(tmp_path / name), "--n-samples", "100", "--seed", "7"]) == EXIT_OK
    files = sorted(p.name for p in (tmp_path / "a").iterdir() if p.name != "run.json")
    assert "manifest.json" in files and "planted.json" in files and "labels.csv" in files
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_non_empty_output_needs_force(tmp_path, capsys):
    (tmp_path / "keep.txt").write_text("x")
    assert main(["synth", "--out", str(tmp_path), "--n-samples", "50"]) == EXIT_USAGE
    assert "--force" in capsys.readouterr().err
    assert main(["synth", "--out", str(tmp_path), "--n-samples", "50", "--force"]) == EXIT_OK


def test_config_file_is_strict(tmp_path, small_synth, capsys):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("epochs = 2\nlearning_rate = 0.1\n")
    out = tmp_path / "out"
    assert main(["train", str(small_synth), "--config", str(cfg), "--out", str(out)]) == EXIT_USAGE
    assert "cfg.txt:2" in capsys.readouterr().err
    assert not out.exists()


def test_config_precedence(tmp_path, small_synth, capsys):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("# comment\nepochs = 7\nbatch_size = 64  # inline\nseed = 3\nhidden = 16,8\n")
    assert read_config(cfg) == {"epochs": 7, "batch_size": 64, "seed": 3, "hidden": (16, 8)}
    code = main(["train", str(small_synth), "--config", str(cfg), "--batch-size", "32", "--seed", "9",
                 "--print-config"])
    assert code == EXIT_OK
    printed = read_config_text(capsys.readouterr().out, tmp_path)
    assert printed["epochs"] == 7 and printed["batch_size"] == 32 and printed["seed"] == 9
    assert printed["hidden"] == (16, 8)


def read_config_text(text, tmp_path):
    p = tmp_path / "printed.txt"
    p.write_text(text)
    return read_config(p)


def test_print_config_lists_every_default(tmp_path, capsys):
    assert main(["train", "unused", "--print-config"]) == EXIT_OK
    printed = read_config_text(capsys.readouterr().out, tmp_path)
    assert TrainConfig.from_dict(printed) == TrainConfig()


def test_train_writes_plan_and_manifest(small_synth, tmp_path):
    out = tmp_path / "run"
    code = main(["train", str(small_synth), "--out", str(out), "--regularizer", "hot_reference", *FAST])
    assert code == EXIT_OK
    plan = json.loads((out / "plan.json").read_text())
    assert (plan["rows"], plan["cols"]) == (6, 3)
    run = json.loads((out / "run.json").read_text())
    assert set(run) >= {"command", "argv", "config", "dataset", "seed", "outputs", "wall_clock", "version"}
    assert run["config"]["epochs"] == 2 and run["config"]["num_clusters"] == 3
    assert len(run["dataset"]["manifest_sha256"]) == 64
    assert len((out / "report.jsonl").read_text().splitlines()) == 2


def test_train_without_plan_for_non_hot_regularizer(small_synth, tmp_path):
    out = tmp_path / "run"
    assert main(["train", str(small_synth), "--out", str(out), "--regularizer", "sw_pairwise", *FAST]) == EXIT_OK
    assert not (out / "plan.json").exists()


def test_semisupervised_without_labels_is_a_data_error(tmp_path, capsys):
    rng = np.random.default_rng(0)
    write_manifest(MultiViewDataset([rng.standard_normal((60, 3)), rng.standard_normal((60, 2))]), tmp_path / "d")
    code = main(["train", str(tmp_path / "d"), "--out", str(tmp_path / "o"), "--mode", "semisupervised"])
    assert code == EXIT_DATA
    assert "needs labels" in capsys.readouterr().err


def test_two_epoch_smoke_run_on_default_synthetic(tmp_path):
    assert main(["synth", "--out", str(tmp_path / "d")]) == EXIT_OK
    start = time.perf_counter()
    code = main(["train", str(tmp_path / "d"), "--out", str(tmp_path / "o"), "--epochs", "2"])
    assert code == EXIT_OK
    assert time.perf_counter() - start < 30


def test_eval_is_repeatable(trained, small_synth, tmp_path):
    outs = []
    for name in ("a", "b"):
        code = main(["eval", str(small_synth), "--checkpoint", str(trained / "model.ckpt"), "--out", str(tmp_path / name)])
        assert code == EXIT_OK
        outs.append((tmp_path / name / "eval.json").read_text())
    assert outs[0] == outs[1]
    result = json.loads(outs[0])
    assert result["split"] == "test" and result["n_samples"] == 60
    assert 0.0 <= result["accuracy"] <= 1.0


def test_eval_reports_the_mismatched_view(trained, small_synth, tmp_path, capsys):
    ds = load_manifest(small_synth)
    views = list(ds.views)
    views[3] = views[3][:, :5]
    write_manifest(MultiViewDataset(views, ds.labels, names=ds.names), tmp_path / "bad")
    code = main(["eval", str(tmp_path / "bad"), "--checkpoint", str(trained / "model.ckpt"), "--out", str(tmp_path / "o")])
    assert code == EXIT_DATA
    assert "view 3 (view3)" in capsys.readouterr().err


def test_eval_of_separable_data_is_perfect(tmp_path):
    rng = np.random.default_rng(0)
    labels = np.arange(400) % 2
    views = [rng.standard_normal((400, 3)) + 4.0 * (2 * labels[:, None] - 1) for _ in range(2)]
    write_manifest(MultiViewDataset(views, labels), tmp_path / "d")
    assert main(["train", str(tmp_path / "d"), "--out", str(tmp_path / "m"), "--mode", "semisupervised",
                 "--gamma", "0", "--tau", "0", "--epochs", "20", "--batch-size", "50"]) == EXIT_OK
    assert main(["eval", str(tmp_path / "d"), "--checkpoint", str(tmp_path / "m" / "model.ckpt"),
                 "--out", str(tmp_path / "e")]) == EXIT_OK
    assert json.loads((tmp_path / "e" / "eval.json").read_text())["accuracy"] == 1.0


def test_unsupervised_train_then_eval(small_synth, tmp_path):
    assert main(["train", str(small_synth), "--out", str(tmp_path / "m"), *FAST]) == EXIT_OK
    model, meta = load_model(tmp_path / "m" / "model.ckpt")
    assert meta["mode"] == "unsupervised" and model.classifier is not None
    assert main(["eval", str(small_synth), "--checkpoint", str(tmp_path / "m" / "model.ckpt"),
                 "--out", str(tmp_path / "e"), "--split", "valid"]) == EXIT_OK


def test_ablate(small_synth, tmp_path):
    code = main(["ablate", str(small_synth), "--out", str(tmp_path), "--trials", "2", *FAST])
    assert code == EXIT_OK
    rows = json.loads((tmp_path / "ablation.json").read_text())["rows"]
    assert [r["removed"] for r in rows] == ["All"] + [f"view{s}" for s in range(6)]
    assert all(len(r["trials"]) == 2 for r in rows)


def test_export_plan(trained, small_synth, tmp_path):
    code = main(["export-plan", str(trained / "plan.json"), "--dataset", str(small_synth), "--out", str(tmp_path)])
    assert code == EXIT_OK
    lines = (tmp_path / "plan_heatmap.csv").read_text().splitlines()
    assert lines[0] == ",cluster0,cluster1,cluster2"
    assert [ln.split(",")[0] for ln in lines[1:]] == [f"view{s}" for s in range(6)]
    assert (tmp_path / "plan_heatmap.json").exists()


def test_usage_errors(tmp_path, capsys):
    assert main([]) == EXIT_USAGE
    assert main(["synth"]) == EXIT_USAGE
    assert main(["train", "x", "--out", str(tmp_path), "--regularizer", "pca"]) == EXIT_USAGE
    assert main(["train", "x", "--out", str(tmp_path), "--batch-size", "0"]) == EXIT_USAGE
    assert main(["nonsense"]) == EXIT_USAGE


def test_missing_dataset_is_a_data_error(tmp_path):
    assert main(["train", str(tmp_path / "nope"), "--out", str(tmp_path / "o")]) == EXIT_DATA


def test_replay_reproduces_outputs(trained, tmp_path):
    assert replay(trained / "run.json", out=tmp_path) == EXIT_OK
    for name in ("model.ckpt", "report.jsonl", "plan.json", "config.txt"):
        assert (tmp_path / name).read_bytes() == (trained / name).read_bytes()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "hotmvl", "synth", "--out", str(tmp_path), "--n-samples", "30"],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    proc = subprocess.run([sys.executable, "-m", "hotmvl", "train"], capture_output=True, text=True)
    assert proc.returncode == EXIT_USAGE
