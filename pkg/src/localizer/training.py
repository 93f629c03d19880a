from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from ..radio.dataset import normalize_coordinates, split_train_val
from ..radio.distribution_maps import build_rss_distribution_maps
from ..radio.errors import NonFiniteGradientError, TrainingDivergedError
from ..radio.types import RadioMap
from ..runtime.config import Config
from .config import LocalizerConfig, TrainingConfig
from .inference import predict_normalized, uncertainty_error_correlation
from .model import LocalizerModel, TokenBatch, encode_fingerprints
from .optim import AdamW


logger = logging.getLogger(__name__)


@dataclass
class TrainingHistory:
    rows: List[Dict[str, float]] = field(default_factory=list)
    best_epoch: int = 0
    best_val_mean_err: float = math.inf
    diverged: bool = False
    uncertainty_correlation: float = float("nan")

    def to_frame(self) -> pd.DataFrame:
        """``epoch, train_loss, val_mean_err`` first, then ``val_mean_sigma`` (mean predicted sigma, metres)."""
        return pd.DataFrame(self.rows, columns=["epoch", "train_loss", "val_mean_err", "val_mean_sigma"])

    def summary(self) -> Dict[str, float]:
        return {
            "epochs_run": len(self.rows),
            "best_epoch": self.best_epoch,
            "best_val_mean_err": self.best_val_mean_err,
            "diverged": self.diverged,
            "uncertainty_correlation": self.uncertainty_correlation,
        }


def build_localizer(
    radio_map: RadioMap,
    config: Optional[LocalizerConfig] = None,
    cell_size: Optional[float] = None,
) -> LocalizerModel:
    """Fresh model wired to the map's MAC table, distribution maps and coordinate normalization."""
    config = (config or LocalizerConfig()).validate()
    _, transform = normalize_coordinates(radio_map)
    windows = None
    if config.embedding.mac_embedding == "distribution_map":
        dist_maps = build_rss_distribution_maps(radio_map, cell_size)
        windows = dist_maps.windowed(config.embedding.window)
    model = LocalizerModel(config, radio_map.mac_table, windows=windows, transform=transform)
    logger.info(
        "Built localizer: %d parameters, d_model=%d, %d layers, %d heads, embedding=%s",
        model.n_parameters,
        config.d_model,
        config.encoder.n_layers,
        config.encoder.n_heads,
        config.embedding.mac_embedding,
    )
    return model


def _validate(model: LocalizerModel, batch: TokenBatch, locations_m: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    mu, sigma = predict_normalized(model, batch)
    mu_m = model.transform.invert(mu)
    errors = np.linalg.norm(mu_m - locations_m, axis=1)
    return errors, sigma * model.transform.mean_extent


def train(
    model: LocalizerModel,
    train_map: RadioMap,
    val_map: RadioMap,
    config: Optional[TrainingConfig] = None,
) -> Tuple[LocalizerModel, TrainingHistory]:
    """AdamW training; the returned model holds the parameters with the lowest validation mean error."""
    config = config or TrainingConfig()
    if train_map.mac_table != model.mac_table or val_map.mac_table != model.mac_table:
        raise ValueError("Training failed: train/val maps must share the model's MAC table")

    train_batch, _ = encode_fingerprints(train_map.fingerprints, model.mac_table)
    val_batch, _ = encode_fingerprints(val_map.fingerprints, model.mac_table)
    targets = model.transform.apply(train_map.locations())
    val_locations = val_map.locations()

    shuffle_seq, dropout_seq = np.random.SeedSequence(config.seed).spawn(2)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    dropout_rng = np.random.default_rng(dropout_seq)
    optimizer = AdamW(
        model.n_parameters,
        lr=config.lr,
        betas=config.betas,
        eps=config.eps,
        weight_decay=config.weight_decay,
    )

    history = TrainingHistory()
    params = model.parameter_vector()
    errors, sigmas = _validate(model, val_batch, val_locations)
    best = params.copy()
    history.best_val_mean_err = float(errors.mean())
    n = len(train_batch)

    epochs = tqdm(range(1, config.epochs + 1), desc="train", disable=not Config.PROGRESS)
    for epoch in epochs:
        order = shuffle_rng.permutation(n)
        losses = []
        diverged = False
        for start in range(0, n, config.batch_size):
            rows = order[start:start + config.batch_size]
            try:
                loss, grad = model.loss_and_grad(
                    train_batch.take(rows),
                    targets[rows],
                    rng=dropout_rng,
                    training=True,
                    use_uncertainty=config.use_uncertainty,
                )
            except NonFiniteGradientError as exc:
                logger.warning("Epoch %d: %s", epoch, exc)
                diverged = True
                break
            if not math.isfinite(loss):
                logger.warning("Epoch %d: non-finite training loss", epoch)
                diverged = True
                break
            losses.append(loss)
            params = optimizer.step(params, grad)
            model.set_parameter_vector(params)

        if diverged:
            history.diverged = True
            model.set_parameter_vector(best)
            logger.warning("Training diverged at epoch %d; restored epoch %d parameters", epoch, history.best_epoch)
            if config.raise_on_divergence:
                raise TrainingDivergedError(epoch, best.copy())
            break

        errors, sigmas = _validate(model, val_batch, val_locations)
        val_err = float(errors.mean())
        history.rows.append(
            {
                "epoch": epoch,
                "train_loss": float(np.mean(losses)),
                "val_mean_err": val_err,
                "val_mean_sigma": float(sigmas.mean()),
            }
        )
        if val_err < history.best_val_mean_err:
            history.best_val_mean_err = val_err
            history.best_epoch = epoch
            best = params.copy()
        epochs.set_postfix(loss=f"{history.rows[-1]['train_loss']:.4f}", val=f"{val_err:.3f}")

    model.set_parameter_vector(best)
    errors, sigmas = _validate(model, val_batch, val_locations)
    history.uncertainty_correlation = uncertainty_error_correlation(sigmas, errors)
    model.metadata.update(
        {
            "best_epoch": history.best_epoch,
            "best_val_mean_err": history.best_val_mean_err,
            "val_mean_sigma_m": float(sigmas.mean()),
            "use_uncertainty": config.use_uncertainty,
            "training": config.to_dict(),
        }
    )
    if not config.use_uncertainty:
        model.constant_sigma = float(Config.CONSTANT_SIGMA_M)
    logger.info(
        "Training finished: best epoch %d, val mean error %.3f m, sigma/error r=%.3f",
        history.best_epoch,
        history.best_val_mean_err,
        history.uncertainty_correlation,
    )
    return model, history


def fit_localizer(
    radio_map: RadioMap,
    localizer_config: Optional[LocalizerConfig] = None,
    training_config: Optional[TrainingConfig] = None,
    val_ratio: float = Config.TRAIN_VAL_RATIO,
    split_seed: int = 0,
    cell_size: Optional[float] = None,
) -> Tuple[LocalizerModel, TrainingHistory]:
    train_map, val_map = split_train_val(radio_map, val_ratio, split_seed)
    model = build_localizer(radio_map, localizer_config, cell_size=cell_size)
    return train(model, train_map, val_map, training_config)


__all__ = ["TrainingHistory", "build_localizer", "fit_localizer", "train"]
