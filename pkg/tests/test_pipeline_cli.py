import json

import pandas as pd
import pytest

from scripts.pipeline.main import main


@pytest.fixture(scope="module")
def world_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("world")
    code = main(["simulate", "--out", str(out), "--seed", "3", "--n-samples", "200", "--duration", "20"])
    assert code == 0
    return out


def test_simulate_writes_world_and_manifest(world_dir):
    for name in ("world.json", "radio_map.jsonl", "stream.csv", "truth.csv", "simulate.manifest.json"):
        assert (world_dir / name).exists()
    manifest = json.loads((world_dir / "simulate.manifest.json").read_text(encoding="utf-8"))
    assert manifest["seed"] == 3
    assert set(manifest["files"]) == {"world.json", "radio_map.jsonl", "stream.csv", "truth.csv"}


def test_fuse_then_eval(world_dir, capsys):
    assert main(["fuse", "--world", str(world_dir), "--method", "wknn-only"]) == 0
    est = world_dir / "trajectories" / "wknn-only.csv"
    assert est.exists()
    capsys.readouterr()

    out = world_dir / "eval_wknn"
    assert main(["eval", "--est", str(est), "--truth", str(world_dir / "truth.csv"), "--warmup", "0", "--out", str(out)]) == 0
    summary = json.loads(capsys.readouterr().out.splitlines()[0])
    assert summary["method"] == "wknn-only"
    assert summary["n"] > 0
    assert (out / "metrics.csv").exists()
    assert (out / "cdf.csv").exists()


def test_prior_map_feeds_the_particle_filter(world_dir):
    prior_dir = world_dir / "prior"
    args = ["prior-map", "--map", str(world_dir / "radio_map.jsonl"), "--cell-size", "0.5", "--out", str(prior_dir)]
    assert main(args) == 0
    assert (prior_dir / "prior_map.joblib").exists()

    args = ["fuse", "--world", str(world_dir), "--method", "ekpf-wknn", "--prior", str(prior_dir / "prior_map.joblib")]
    assert main(args + ["--seed", "1", "--out", str(world_dir / "fused")]) == 0
    frame = pd.read_csv(world_dir / "fused" / "trajectories" / "ekpf-wknn.csv")
    assert list(frame.columns) == ["t", "est_x", "est_y", "true_x", "true_y", "err", "n_eff", "spread"]


def test_localize_stream_with_wknn(world_dir):
    out = world_dir / "localized"
    args = ["localize", "--method", "wknn", "--map", str(world_dir / "radio_map.jsonl"), "--stream", str(world_dir / "stream.csv")]
    assert main(args + ["--out", str(out)]) == 0
    frame = pd.read_csv(out / "localize_wknn.csv")
    assert {"t", "est_x", "est_y", "sigma", "true_x", "true_y", "err"} <= set(frame.columns)
    assert (frame["sigma"].dropna() >= 0.5).all()


def test_eval_of_truth_against_itself_is_zero(world_dir):
    out = world_dir / "eval_truth"
    truth = str(world_dir / "truth.csv")
    assert main(["eval", "--est", truth, "--truth", truth, "--warmup", "0", "--out", str(out)]) == 0
    metrics = pd.read_csv(out / "metrics.csv")
    assert metrics.loc[0, "mean"] == 0.0
    assert metrics.loc[0, "max"] == 0.0


def test_missing_input_reports_json_error(tmp_path, capsys):
    code = main(["eval", "--est", str(tmp_path / "nope.csv"), "--truth", str(tmp_path / "nope.csv"), "--out", str(tmp_path)])
    assert code == 1
    error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert error["error"] == "FileNotFoundError"


def test_unknown_flag_is_a_usage_error(tmp_path):
    with pytest.raises(SystemExit) as excinfo:
        main(["eval", "--bogus", "--out", str(tmp_path)])
    assert excinfo.value.code == 2


def test_ekpf_fuse_needs_train_first(tmp_path, capsys):
    world = tmp_path / "world"
    assert main(["simulate", "--out", str(world), "--seed", "5", "--n-samples", "200", "--duration", "20"]) == 0
    capsys.readouterr()

    assert main(["fuse", "--world", str(world), "--method", "ekpf", "--seed", "1"]) == 1
    error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert error["error"] == "ValueError"
    assert "run `train` first" in error["message"]

    config = tmp_path / "train.yaml"
    config.write_text(
        "d_model: 8\nn_layers: 1\nn_heads: 2\nd_ff: 16\ndropout: 0.0\nepochs: 2\nbatch_size: 64\nseed: 5\n",
        encoding="utf-8",
    )
    assert main(["train", "--map", str(world / "radio_map.jsonl"), "--config", str(config), "--out", str(world)]) == 0
    assert (world / "localizer.joblib").exists()
    history = pd.read_csv(world / "training_history.csv")
    assert list(history.columns[:3]) == ["epoch", "train_loss", "val_mean_err"]

    assert main(["fuse", "--world", str(world), "--method", "ekpf", "--seed", "1", "--out", str(tmp_path / "fused")]) == 0
    frame = pd.read_csv(tmp_path / "fused" / "trajectories" / "ekpf.csv")
    assert list(frame.columns) == ["t", "est_x", "est_y", "true_x", "true_y", "err", "n_eff", "spread"]
    assert len(frame) > 0
