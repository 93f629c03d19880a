import importlib.util
import logging
import os
import sys
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional

import yaml
from dotenv import load_dotenv

from .project_paths import DEFAULT_RUNS_DIR_NAME, runs_root


ENV_PREFIX = "RMF_"


def _env_flag(name: str, default: bool = False) -> bool:
    raw = os.environ.get(ENV_PREFIX + name)
    if raw is None:
        return default
    return str(raw).strip().lower() in {"1", "true", "yes", "on"}


def _env_float(name: str, default: float) -> float:
    return float(os.environ.get(ENV_PREFIX + name, default))


def _env_int(name: str, default: int) -> int:
    return int(os.environ.get(ENV_PREFIX + name, default))


class Config:
    # Project Root
    PROJECT_ROOT = Path(__file__).resolve().parents[2]

    # Configure logging
    logging.basicConfig(
        level=logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )

    # Output Paths
    RUNS_DIR = runs_root(PROJECT_ROOT)
    MODELS_DIR = PROJECT_ROOT / "output" / "models"

    # Radio map / embedding
    RSS_MIN_DBM = -120.0
    RSS_MAX_DBM = 0.0
    DIST_MAP_CELL_SIZE = _env_float("DIST_MAP_CELL_SIZE", 1.0)
    DIST_MAP_WINDOW = _env_int("DIST_MAP_WINDOW", 64)
    TRAIN_VAL_RATIO = _env_float("TRAIN_VAL_RATIO", 0.9)

    # Localizer training
    LEARNING_RATE = _env_float("LEARNING_RATE", 1e-4)
    WEIGHT_DECAY = _env_float("WEIGHT_DECAY", 1e-3)
    ADAM_BETAS = (0.9, 0.999)
    ADAM_EPS = 1e-8
    MAX_EPOCHS = _env_int("MAX_EPOCHS", 200)
    BATCH_SIZE = _env_int("BATCH_SIZE", 64)
    SIGMA_FLOOR = 1e-3
    CONSTANT_SIGMA_M = _env_float("CONSTANT_SIGMA_M", 3.0)

    # Baselines
    WKNN_K = _env_int("WKNN_K", 50)
    WKNN_MISSING_RSS = _env_float("WKNN_MISSING_RSS", -100.0)
    WKNN_SIGMA_FLOOR = _env_float("WKNN_SIGMA_FLOOR", 0.5)

    # Prior map
    KDE_BANDWIDTH = _env_float("KDE_BANDWIDTH", 1.0)
    PRIOR_CELL_SIZE = _env_float("PRIOR_CELL_SIZE", 0.25)
    BETA = _env_float("BETA", 1e-4)
    PRIOR_NORMALIZATION = os.environ.get(ENV_PREFIX + "PRIOR_NORMALIZATION", "max")

    # Fusion
    N_PARTICLES = _env_int("N_PARTICLES", 400)
    N_P = _env_float("N_P", 0.1)
    N_R = _env_float("N_R", 0.05)
    N_V = _env_float("N_V", 1e-4)
    GAMMA = _env_float("GAMMA", 150.0)
    SIGMA_REFERENCE_M = _env_float("SIGMA_REFERENCE_M", 1.0)
    RESAMPLE_RATIO = _env_float("RESAMPLE_RATIO", 0.5)
    NOISE_REFERENCE_PERIOD = _env_float("NOISE_REFERENCE_PERIOD", 1.0)
    INITIAL_COVARIANCE = (4.0, 4.0, 0.5, 0.01)

    # Evaluation
    WARMUP_SECONDS = _env_float("WARMUP_SECONDS", 60.0)
    TIME_ALIGN_TOLERANCE = 0.2
    SEED = _env_int("SEED", 0)
    PROGRESS = _env_flag("PROGRESS", True)
    CSV_FLOAT_FORMAT = "%.10g"

    @classmethod
    def load_env(cls, env_path: Optional[Path] = None):
        """Load environment variables from a .env file using python-dotenv"""
        if env_path is None:
            env_path = cls.PROJECT_ROOT / ".env"

        if env_path.exists():
            logging.getLogger(__name__).info("Loading environment from %s", env_path)
            load_dotenv(env_path)

            cls.DIST_MAP_CELL_SIZE = _env_float("DIST_MAP_CELL_SIZE", cls.DIST_MAP_CELL_SIZE)
            cls.DIST_MAP_WINDOW = _env_int("DIST_MAP_WINDOW", cls.DIST_MAP_WINDOW)
            cls.TRAIN_VAL_RATIO = _env_float("TRAIN_VAL_RATIO", cls.TRAIN_VAL_RATIO)
            cls.LEARNING_RATE = _env_float("LEARNING_RATE", cls.LEARNING_RATE)
            cls.WEIGHT_DECAY = _env_float("WEIGHT_DECAY", cls.WEIGHT_DECAY)
            cls.MAX_EPOCHS = _env_int("MAX_EPOCHS", cls.MAX_EPOCHS)
            cls.BATCH_SIZE = _env_int("BATCH_SIZE", cls.BATCH_SIZE)
            cls.CONSTANT_SIGMA_M = _env_float("CONSTANT_SIGMA_M", cls.CONSTANT_SIGMA_M)
            cls.WKNN_K = _env_int("WKNN_K", cls.WKNN_K)
            cls.WKNN_MISSING_RSS = _env_float("WKNN_MISSING_RSS", cls.WKNN_MISSING_RSS)
            cls.WKNN_SIGMA_FLOOR = _env_float("WKNN_SIGMA_FLOOR", cls.WKNN_SIGMA_FLOOR)
            cls.KDE_BANDWIDTH = _env_float("KDE_BANDWIDTH", cls.KDE_BANDWIDTH)
            cls.PRIOR_CELL_SIZE = _env_float("PRIOR_CELL_SIZE", cls.PRIOR_CELL_SIZE)
            cls.BETA = _env_float("BETA", cls.BETA)
            cls.PRIOR_NORMALIZATION = os.environ.get(
                ENV_PREFIX + "PRIOR_NORMALIZATION",
                cls.PRIOR_NORMALIZATION,
            )
            cls.N_PARTICLES = _env_int("N_PARTICLES", cls.N_PARTICLES)
            cls.N_P = _env_float("N_P", cls.N_P)
            cls.N_R = _env_float("N_R", cls.N_R)
            cls.N_V = _env_float("N_V", cls.N_V)
            cls.GAMMA = _env_float("GAMMA", cls.GAMMA)
            cls.SIGMA_REFERENCE_M = _env_float("SIGMA_REFERENCE_M", cls.SIGMA_REFERENCE_M)
            cls.RESAMPLE_RATIO = _env_float("RESAMPLE_RATIO", cls.RESAMPLE_RATIO)
            cls.NOISE_REFERENCE_PERIOD = _env_float(
                "NOISE_REFERENCE_PERIOD",
                cls.NOISE_REFERENCE_PERIOD,
            )
            cls.WARMUP_SECONDS = _env_float("WARMUP_SECONDS", cls.WARMUP_SECONDS)
            cls.SEED = _env_int("SEED", cls.SEED)
            cls.PROGRESS = _env_flag("PROGRESS", cls.PROGRESS)

        cls.RUNS_DIR.mkdir(parents=True, exist_ok=True)
        cls.MODELS_DIR.mkdir(parents=True, exist_ok=True)

    @classmethod
    def validate_runtime_environment(cls, required_modules: Optional[Iterable[str]] = None):
        current_runtime = f"{sys.version_info[0]}.{sys.version_info[1]}"
        modules = tuple(required_modules or ("numpy", "scipy", "pandas", "sklearn", "joblib", "yaml"))
        missing = [name for name in modules if importlib.util.find_spec(name) is None]
        if missing:
            raise RuntimeError(
                f"Missing required dependencies for runtime {current_runtime}: {', '.join(sorted(missing))}. "
                "Install the project with `pip install -e .`."
            )


def read_flat_config(path: Path, kind: str, allowed_keys: Iterable[str]) -> dict[str, Any]:
    """Read a flat key/value YAML file and reject keys outside ``allowed_keys``."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{kind} config file does not exist: {path}")
    raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    return validate_flat_config(raw, kind, allowed_keys)


def validate_flat_config(raw: Any, kind: str, allowed_keys: Iterable[str]) -> dict[str, Any]:
    if not isinstance(raw, Mapping):
        raise ValueError(f"Invalid {kind} config: top level must be a mapping")
    allowed = set(allowed_keys)
    unknown = sorted(str(key) for key in raw if key not in allowed)
    if unknown:
        raise ValueError(f"Invalid {kind} config: unknown keys {', '.join(unknown)}")
    nested = sorted(str(key) for key, value in raw.items() if isinstance(value, Mapping))
    if nested:
        raise ValueError(f"Invalid {kind} config: values must be flat, nested keys {', '.join(nested)}")
    return dict(raw)


__all__ = [
    "Config",
    "DEFAULT_RUNS_DIR_NAME",
    "read_flat_config",
    "validate_flat_config",
]
