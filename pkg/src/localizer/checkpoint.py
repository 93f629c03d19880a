from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
from joblib import dump, load

from ..radio.dataset import CoordinateTransform
from ..radio.types import MacTable
from .config import LocalizerConfig
from .model import LocalizerModel


logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "radiomap-localizer/1"


def save_checkpoint(model: LocalizerModel, path: Path, *, metadata: Dict[str, Any] | None = None) -> Path:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "metadata": {**model.metadata, **dict(metadata or {})},
        "config": model.config.to_dict(),
        "macs": list(model.mac_table.macs),
        "mac_table_sha256": model.mac_table.sha256(),
        "parameters": model.parameter_vector(),
        "windows": model.windows,
        "denorm": model.transform.to_dict(),
        "constant_sigma": model.constant_sigma,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dump(payload, path)
    logger.info("Saved localizer checkpoint to %s", path)
    return path


def load_checkpoint(path: Path, mac_table: Optional[MacTable] = None) -> LocalizerModel:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Checkpoint does not exist: {path}")
    payload = load(path)
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        found = payload.get("format") if isinstance(payload, dict) else type(payload).__name__
        raise ValueError(f"Invalid checkpoint: format={found!r}, expected {CHECKPOINT_FORMAT!r}")

    table = MacTable(tuple(payload["macs"]))
    if table.sha256() != payload["mac_table_sha256"]:
        raise ValueError(f"Invalid checkpoint: MAC table hash mismatch in {path}")
    if mac_table is not None and mac_table.sha256() != payload["mac_table_sha256"]:
        raise ValueError("Invalid checkpoint: radio map MAC table differs from the checkpoint's")

    windows = payload.get("windows")
    model = LocalizerModel(
        LocalizerConfig.from_dict(payload["config"]),
        table,
        windows=None if windows is None else np.asarray(windows, dtype=float),
        transform=CoordinateTransform.from_dict(payload["denorm"]),
    )
    model.set_parameter_vector(np.asarray(payload["parameters"], dtype=float))
    model.constant_sigma = payload.get("constant_sigma")
    model.metadata = dict(payload.get("metadata", {}) or {})
    return model


def load_checkpoint_metadata(path: Path) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        return {}
    payload = load(path)
    if not isinstance(payload, dict):
        return {}
    return dict(payload.get("metadata", {}) or {})


__all__ = ["CHECKPOINT_FORMAT", "load_checkpoint", "load_checkpoint_metadata", "save_checkpoint"]
