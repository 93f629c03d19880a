import hashlib
import json
from dataclasses import replace

import pandas as pd
import pytest

from src.evaluation.benchmark import ablation_config, benchmark_config, kidnap_config
from src.evaluation.experiment import ExperimentConfig, grid_search_fusion, rerun_experiment, run_experiment
from src.evaluation.manifest import (
    build_run_manifest,
    load_manifest,
    record_failure,
    record_files,
    reproducibility_signature,
    write_manifest,
)
from src.fusion.filters import FilterConfig
from src.fusion.methods import FusionInputs


def _tiny_config(**overrides):
    config = ExperimentConfig(
        name="tiny",
        methods=("wknn-only",),
        n_trials=1,
        seed=3,
        n_samples=200,
        duration=20.0,
        warmup=0.0,
        filter={"prior_cell_size": 0.5},
    )
    return replace(config, **overrides)


def test_manifest_records_file_hashes(tmp_path):
    data = tmp_path / "out" / "table.csv"
    data.parent.mkdir()
    data.write_text("a,b\n1,2\n", encoding="utf-8")
    manifest = build_run_manifest("eval", {"warmup": 60.0}, seed=7, entrypoint="tests")
    record_files(manifest, [data, tmp_path / "missing.csv"], root=tmp_path / "out")
    assert manifest.files == {"table.csv": hashlib.sha256(data.read_bytes()).hexdigest()}
    assert manifest.status == "ok"

    path = write_manifest(tmp_path / "out" / "eval.manifest.json", manifest)
    payload = load_manifest(path)
    assert payload["seed"] == 7
    assert payload["config"] == {"warmup": 60.0}
    assert "numpy" in payload["runtime"]["packages"]


def test_signature_ignores_timestamps_but_not_seed():
    a = build_run_manifest("fuse", {"beta": 1e-4}, seed=1)
    b = build_run_manifest("fuse", {"beta": 1e-4}, seed=1)
    c = build_run_manifest("fuse", {"beta": 1e-4}, seed=2)
    to_dict = lambda m: json.loads(json.dumps(m.__dict__))
    assert reproducibility_signature(to_dict(a)) == reproducibility_signature(to_dict(b))
    assert reproducibility_signature(to_dict(a)) != reproducibility_signature(to_dict(c))


def test_failures_mark_the_run_partial():
    manifest = build_run_manifest("run-experiment", {}, seed=0)
    record_failure(manifest, "fuse", ValueError("boom"), trial=0, method="ekpf")
    assert manifest.status == "partial"
    assert manifest.failures == [{"stage": "fuse", "error": "ValueError", "message": "boom", "trial": 0, "method": "ekpf"}]


def test_experiment_writes_reports_and_manifest(tmp_path):
    result = run_experiment(_tiny_config(), tmp_path / "run")
    assert result.manifest.status == "ok"
    assert set(result.reports) == {"wknn-only"}
    assert result.paths.eval_summary_file().exists()
    assert result.paths.manifest_file().exists()
    assert result.paths.log_file().exists()
    assert "trajectories/wknn-only_trial0.csv" in result.manifest.files
    assert "reports/comparison.csv" in result.manifest.files

    sheets = pd.read_excel(result.paths.eval_summary_file(), sheet_name=None, engine="openpyxl")
    assert {"Comparison", "Trial Metrics", "Run Metadata", "Failures"} <= set(sheets)
    assert sheets["Comparison"]["method"].tolist() == ["wknn-only"]


def test_experiment_rerun_reproduces_the_signature(tmp_path):
    first = run_experiment(_tiny_config(), tmp_path / "first")
    second = rerun_experiment(first.paths.manifest_file(), tmp_path / "second")
    assert reproducibility_signature(load_manifest(first.paths.manifest_file())) == reproducibility_signature(
        load_manifest(second.paths.manifest_file())
    )


def test_experiment_failure_is_recorded_not_raised(tmp_path):
    config = _tiny_config(methods=("wknn-only", "localizer-only"), checkpoint=str(tmp_path / "missing.joblib"))
    result = run_experiment(config, tmp_path / "run")
    assert result.manifest.status == "partial"
    stages = {f["stage"] for f in result.manifest.failures}
    assert {"localizer", "fuse"} <= stages
    assert set(result.reports) == {"wknn-only"}
    assert load_manifest(result.paths.manifest_file())["status"] == "partial"


def test_config_files_are_flat_and_validated(tmp_path):
    path = tmp_path / "experiment.yaml"
    path.write_text("name: demo\nmethods: ekpf, wknn-only\nn_trials: 2\nbeta: 0.001\n", encoding="utf-8")
    config = ExperimentConfig.from_file(path)
    assert config.methods == ("ekpf", "wknn-only")
    assert config.filter_config(seed=5).beta == pytest.approx(1e-3)

    path.write_text("methods: ekpf, kalman\n", encoding="utf-8")
    with pytest.raises(ValueError):
        ExperimentConfig.from_file(path)
    path.write_text("unknown_key: 1\n", encoding="utf-8")
    with pytest.raises(ValueError):
        ExperimentConfig.from_file(path)


def test_benchmark_presets():
    assert benchmark_config().n_trials == 5
    assert ablation_config().methods == ("ekpf", "ekpf-const-sigma")
    kidnap = kidnap_config()
    assert kidnap.kidnap_at == 120.0
    assert kidnap.methods == ("ekpf", "pf")


def test_grid_search_ranks_every_pair(small_stream, small_map):
    inputs = FusionInputs(stream=small_stream, radio_map=small_map)
    base = FilterConfig(n_particles=30, prior_cell_size=0.5, seed=1)
    table = grid_search_fusion(inputs, [1e-5, 1e-4], [100.0, 200.0], base=base, method="ekpf-wknn")
    assert len(table) == 4
    assert set(zip(table["beta"], table["gamma"])) == {(1e-5, 100.0), (1e-5, 200.0), (1e-4, 100.0), (1e-4, 200.0)}
    assert table["mean"].is_monotonic_increasing
