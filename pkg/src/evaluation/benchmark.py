"""Pinned synthetic benchmarks: the toy world, the noisy crowdsourced map and the kidnap scenario."""

from __future__ import annotations

from dataclasses import replace
from typing import Any, Dict

from ..radio.types import RadioMap
from ..simulation.crowdsource import crowdsource_radio_map
from ..simulation.world import WorldSpec, generate_world
from .experiment import ExperimentConfig

BENCHMARK_SEED = 7
KIDNAP_SEED = 11

# small network so the benchmark trains on a laptop CPU
BENCHMARK_TRAINING: Dict[str, Any] = {
    "d_model": 32,
    "n_layers": 2,
    "n_heads": 2,
    "d_ff": 64,
    "dropout": 0.1,
    "activation": "relu",
    "lr": 1e-3,
    "weight_decay": 1e-3,
    "epochs": 40,
    "batch_size": 64,
}

# acceptance thresholds
ORDERING_MARGIN = 0.85
ABLATION_DEGRADATION = 1.05
KIDNAP_RECOVERY_FINGERPRINTS = 20
KIDNAP_PF_WINDOW_S = 60.0
RECOVERY_THRESHOLD_M = 3.0
TOY_TRAINING_EPOCHS = 200
TOY_VAL_MEAN_ERR_M = 2.0


def benchmark_config(**overrides: Any) -> ExperimentConfig:
    """Toy world, map noise 1 m, 5 trials, default filter constants."""
    config = ExperimentConfig(
        name="benchmark",
        methods=("ekpf", "ekf", "pf", "wknn-only", "localizer-only"),
        n_trials=5,
        seed=BENCHMARK_SEED,
        n_samples=2000,
        loc_noise_sigma=1.0,
        dropout=0.1,
        duration=300.0,
        fingerprint_period=2.0,
        training=dict(BENCHMARK_TRAINING),
        filter={
            "n_particles": 400,
            "n_p": 0.1,
            "n_r": 0.05,
            "beta": 1e-4,
            "gamma": 150.0,
            "bandwidth": 1.0,
        },
    )
    return replace(config, **overrides)


def toy_training_map(seed: int = BENCHMARK_SEED) -> RadioMap:
    """Noiseless 20 x 20 m floor, 8 APs, 2000 samples with exact positions and no shadowing."""
    world = generate_world(WorldSpec(area_w=20.0, area_h=20.0, n_aps=8, shadow_sigma=0.0, seed=seed))
    return crowdsource_radio_map(world, 2000, loc_noise_sigma=0.0, dropout=0.0, seed=seed)


def ablation_config(**overrides: Any) -> ExperimentConfig:
    return benchmark_config(name="uncertainty-ablation", methods=("ekpf", "ekpf-const-sigma"), **overrides)


def kidnap_config(**overrides: Any) -> ExperimentConfig:
    """One 240 s walk teleported to a far corridor at 120 s."""
    return benchmark_config(
        name="kidnap",
        methods=("ekpf", "pf"),
        n_trials=1,
        seed=KIDNAP_SEED,
        duration=240.0,
        kidnap_at=120.0,
        warmup=0.0,
        **overrides,
    )


__all__ = [
    "ABLATION_DEGRADATION",
    "BENCHMARK_SEED",
    "BENCHMARK_TRAINING",
    "KIDNAP_PF_WINDOW_S",
    "KIDNAP_RECOVERY_FINGERPRINTS",
    "KIDNAP_SEED",
    "ORDERING_MARGIN",
    "RECOVERY_THRESHOLD_M",
    "TOY_TRAINING_EPOCHS",
    "TOY_VAL_MEAN_ERR_M",
    "ablation_config",
    "benchmark_config",
    "kidnap_config",
    "toy_training_map",
]
