"""End-to-end experiment: simulate, train or load the localizer, fuse with every method, report."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import pandas as pd
from tqdm import tqdm

from ..baselines.wknn import WknnLocalizer
from ..fusion.filters import FilterConfig
from ..fusion.methods import FusionInputs, MethodRegistry, run_method
from ..fusion.prior_map import build_prior, save_prior
from ..localizer.checkpoint import load_checkpoint, save_checkpoint
from ..localizer.config import TRAIN_CONFIG_KEYS, configs_from_mapping
from ..localizer.training import fit_localizer
from ..radio.io import save_radio_map, write_table
from ..runtime.config import Config, read_flat_config, validate_flat_config
from ..runtime.project_paths import RunPaths, ensure_run_layout, run_paths, run_paths_at
from ..simulation.crowdsource import crowdsource_radio_map
from ..simulation.stream import SensorStream, online_stream
from ..simulation.trajectory import corrupt_odometry, generate_trajectory
from ..simulation.world import WorldSpec, generate_world
from .manifest import RunManifest, build_run_manifest, record_failure, record_files, write_manifest
from .metrics import ErrorReport, cdf_table, compute_metrics, pool_reports, summarize_methods


logger = logging.getLogger(__name__)

LOCALIZER_METHODS = {"ekpf", "ekf", "pf", "ekpf-const-sigma", "localizer-only"}
FILTER_KEYS = ("n_particles", "n_p", "n_r", "n_v", "beta", "gamma", "bandwidth", "resample_ratio", "sigma_reference")


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    world_spec: Optional[str] = None
    methods: Tuple[str, ...] = ("ekpf", "ekf", "pf", "wknn-only")
    n_trials: int = 5
    seed: int = 0
    n_samples: int = 2000
    loc_noise_sigma: float = 1.0
    dropout: float = 0.1
    duration: float = 300.0
    speed: float = 1.2
    fingerprint_period: float = 2.0
    kidnap_at: Optional[float] = None
    scale_error: float = 0.05
    heading_drift: float = 0.001
    odometry_noise: float = 0.01
    warmup: float = 60.0
    checkpoint: Optional[str] = None
    training_config: Optional[str] = None
    training: Dict[str, Any] = field(default_factory=dict)
    filter: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def keys(cls) -> List[str]:
        return [f.name for f in fields(cls) if f.name not in {"training", "filter"}] + list(FILTER_KEYS)

    @classmethod
    def from_mapping(cls, raw: Dict[str, Any], base_dir: Optional[Path] = None) -> "ExperimentConfig":
        values = validate_flat_config(raw, "experiment", cls.keys())
        filter_values = {k: values.pop(k) for k in FILTER_KEYS if k in values}
        methods = values.get("methods", cls.methods)
        if isinstance(methods, str):
            methods = [m.strip() for m in methods.split(",") if m.strip()]
        for name in methods:
            MethodRegistry.get_method(name)
        values["methods"] = tuple(methods)
        for key in ("world_spec", "checkpoint", "training_config"):
            if values.get(key) and base_dir is not None and not Path(values[key]).is_absolute():
                values[key] = str((Path(base_dir) / values[key]).resolve())
        config = cls(**values, filter=filter_values)
        if config.n_trials < 1:
            raise ValueError(f"Invalid experiment config: n_trials={config.n_trials}")
        return config

    @classmethod
    def from_file(cls, path: Path) -> "ExperimentConfig":
        path = Path(path)
        return cls.from_mapping(read_flat_config(path, "experiment", cls.keys()), base_dir=path.parent)

    def to_dict(self) -> Dict[str, Any]:
        payload = asdict(self)
        payload["methods"] = list(self.methods)
        return payload

    def filter_config(self, seed: int) -> FilterConfig:
        return FilterConfig.from_mapping({**self.filter, "seed": seed})


@dataclass
class ExperimentResult:
    paths: RunPaths
    reports: Dict[str, ErrorReport]
    trial_metrics: pd.DataFrame
    comparison: pd.DataFrame
    manifest: RunManifest


def trial_stream(world, config: ExperimentConfig, trial_seed: int) -> SensorStream:
    traj = generate_trajectory(world, config.duration, config.speed, seed=trial_seed, kidnap_at=config.kidnap_at)
    odometry = corrupt_odometry(
        traj,
        scale_error=config.scale_error,
        heading_drift=config.heading_drift,
        noise_sigma=config.odometry_noise,
        seed=trial_seed,
    )
    return online_stream(world, traj, config.fingerprint_period, seed=trial_seed, odometry=odometry)


def _localizer(config: ExperimentConfig, radio_map, paths: RunPaths):
    if config.checkpoint:
        return load_checkpoint(Path(config.checkpoint), mac_table=radio_map.mac_table)
    raw = dict(config.training)
    if config.training_config:
        raw = {**read_flat_config(Path(config.training_config), "training", TRAIN_CONFIG_KEYS), **raw}
    raw.setdefault("seed", config.seed)
    localizer_config, training_config = configs_from_mapping(raw)
    model, history = fit_localizer(
        radio_map,
        localizer_config,
        training_config,
        val_ratio=float(raw.get("val_ratio", Config.TRAIN_VAL_RATIO)),
        split_seed=config.seed,
        cell_size=raw.get("cell_size"),
    )
    save_checkpoint(model, paths.checkpoint_file, metadata={"experiment": config.name})
    write_table(history.to_frame(), paths.model_dir / "training_history.csv")
    return model


def _write_reports(
    paths: RunPaths,
    reports: Dict[str, ErrorReport],
    trial_metrics: pd.DataFrame,
    comparison: pd.DataFrame,
    manifest: RunManifest,
) -> List[Path]:
    written = [
        write_table(trial_metrics, paths.metrics_file()),
        write_table(comparison, paths.report_dir / "comparison.csv"),
    ]
    for name, report in reports.items():
        written.append(write_table(cdf_table(report), paths.report_dir / f"cdf_{name}.csv"))

    failures = pd.DataFrame(manifest.failures, columns=["stage", "error", "message", "trial", "method"])
    run_metadata = pd.DataFrame(
        [{"Key": key, "Value": json.dumps(value, sort_keys=True)} for key, value in sorted(manifest.config.items())]
    )
    with pd.ExcelWriter(paths.eval_summary_file(), engine="openpyxl") as writer:
        comparison.to_excel(writer, sheet_name="Comparison", index=False)
        trial_metrics.to_excel(writer, sheet_name="Trial Metrics", index=False)
        run_metadata.to_excel(writer, sheet_name="Run Metadata", index=False)
        failures.to_excel(writer, sheet_name="Failures", index=False)
    return written


def run_experiment(
    config: ExperimentConfig | Path,
    out_dir: Optional[Path] = None,
    entrypoint: str = "",
) -> ExperimentResult:
    """Run every method over ``n_trials`` seeded streams; stage failures land in the manifest."""
    if not isinstance(config, ExperimentConfig):
        config = ExperimentConfig.from_file(Path(config))
    if out_dir is not None:
        paths = run_paths_at(Path(out_dir))
    else:
        paths = run_paths(config.name, f"seed{config.seed}", root=Config.RUNS_DIR)
    ensure_run_layout(paths)
    handler = logging.FileHandler(paths.log_file(), mode="w", encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s"))
    logging.getLogger().addHandler(handler)
    try:
        return _run_stages(config, paths, entrypoint)
    finally:
        logging.getLogger().removeHandler(handler)
        handler.close()


def _run_stages(config: ExperimentConfig, paths: RunPaths, entrypoint: str) -> ExperimentResult:
    manifest = build_run_manifest("run-experiment", config.to_dict(), seed=config.seed, entrypoint=entrypoint)
    written: List[Path] = []
    reports: Dict[str, ErrorReport] = {}
    trial_rows: List[Dict[str, Any]] = []
    comparison = pd.DataFrame()

    try:
        spec = WorldSpec.from_file(Path(config.world_spec)) if config.world_spec else WorldSpec(seed=config.seed)
        world = generate_world(spec)
        paths.world_file.write_text(json.dumps(world.to_dict(), indent=2, sort_keys=True), encoding="utf-8")
        radio_map = crowdsource_radio_map(world, config.n_samples, config.loc_noise_sigma, config.dropout, config.seed)
        written += [paths.world_file, save_radio_map(radio_map, paths.radio_map_file)]
    except Exception as exc:
        logger.error("World stage failed: %s", exc)
        record_failure(manifest, "world", exc)
        write_manifest(paths.manifest_file(), manifest)
        return ExperimentResult(paths, reports, pd.DataFrame(trial_rows), comparison, manifest)

    model = None
    if LOCALIZER_METHODS.intersection(config.methods):
        try:
            model = _localizer(config, radio_map, paths)
            written += [paths.checkpoint_file, paths.model_dir / "training_history.csv"]
        except Exception as exc:
            logger.error("Localizer stage failed: %s", exc)
            record_failure(manifest, "localizer", exc)

    base_filter = config.filter_config(config.seed)
    prior = None
    try:
        prior = build_prior(radio_map, base_filter.bandwidth, base_filter.beta, base_filter.prior_cell_size)
        written.append(save_prior(prior, paths.prior_file, metadata={"experiment": config.name}))
    except Exception as exc:
        logger.error("Prior stage failed: %s", exc)
        record_failure(manifest, "prior", exc)

    wknn = WknnLocalizer(radio_map)
    per_method: Dict[str, List[ErrorReport]] = {name: [] for name in config.methods}
    for trial in tqdm(range(config.n_trials), desc="trials", disable=not Config.PROGRESS):
        trial_seed = config.seed + trial
        try:
            stream = trial_stream(world, config, trial_seed)
        except Exception as exc:
            logger.error("Trial %d stream failed: %s", trial, exc)
            record_failure(manifest, "stream", exc, trial=trial)
            continue
        inputs = FusionInputs(stream=stream, radio_map=radio_map, localizer=model, prior=prior, wknn=wknn)
        for name in config.methods:
            try:
                trajectory = run_method(name, inputs, replace(base_filter, seed=trial_seed))
                written.append(write_table(trajectory, paths.trajectory_dir / f"{name}_trial{trial}.csv"))
                report = compute_metrics(trajectory, stream.truth, warmup=config.warmup, method=name)
            except Exception as exc:
                logger.error("Trial %d method %s failed: %s", trial, name, exc)
                record_failure(manifest, "fuse", exc, trial=trial, method=name)
                continue
            per_method[name].append(report)
            trial_rows.append({"trial": trial, "seed": trial_seed, **report.summary()})

    for name, trial_reports in per_method.items():
        if trial_reports:
            reports[name] = pool_reports(trial_reports, method=name)
    trial_metrics = pd.DataFrame(trial_rows)
    if reports:
        comparison = summarize_methods(reports, trials={k: len(v) for k, v in per_method.items()})
        written += _write_reports(paths, reports, trial_metrics, comparison, manifest)

    record_files(manifest, written, root=paths.run_dir)
    write_manifest(paths.manifest_file(), manifest)
    logger.info("Experiment %s finished with status %s (%d failures)", config.name, manifest.status, len(manifest.failures))
    return ExperimentResult(paths, reports, trial_metrics, comparison, manifest)


def rerun_experiment(manifest_path: Path, out_dir: Path, entrypoint: str = "") -> ExperimentResult:
    """Replay the configuration recorded in a run manifest."""
    payload = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    raw = dict(payload["config"])
    filter_values = raw.pop("filter", {}) or {}
    training = raw.pop("training", {}) or {}
    raw["methods"] = tuple(raw.get("methods", ()))
    config = replace(ExperimentConfig(**raw), filter=filter_values, training=training)
    return run_experiment(config, out_dir, entrypoint=entrypoint)


def grid_search_fusion(
    inputs: FusionInputs,
    beta_values: Sequence[float],
    gamma_values: Sequence[float],
    base: Optional[FilterConfig] = None,
    method: str = "ekpf",
    warmup: float = 0.0,
) -> pd.DataFrame:
    """Mean error for every (beta, gamma) pair on one validation stream, best first."""
    base = base or FilterConfig()
    rows = []
    for beta in beta_values:
        config = replace(base, beta=float(beta))
        trial_inputs = replace(inputs, prior=build_prior(inputs.radio_map, config.bandwidth, config.beta, config.prior_cell_size))
        for gamma in gamma_values:
            trajectory = run_method(method, trial_inputs, replace(config, gamma=float(gamma)))
            report = compute_metrics(trajectory, inputs.stream.truth, warmup=warmup, method=method)
            rows.append({"beta": float(beta), "gamma": float(gamma), "mean": report.mean, "p95": report.p95})
    frame = pd.DataFrame(rows, columns=["beta", "gamma", "mean", "p95"])
    return frame.sort_values(["mean", "beta", "gamma"], kind="mergesort").reset_index(drop=True)


__all__ = [
    "ExperimentConfig",
    "ExperimentResult",
    "LOCALIZER_METHODS",
    "grid_search_fusion",
    "rerun_experiment",
    "run_experiment",
    "trial_stream",
]
