from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from ..radio.dataset import CoordinateTransform
from ..radio.distribution_maps import RssDistributionMaps
from ..radio.errors import EmptyFingerprintError
from ..radio.types import Fingerprint, GaussianLocation, Location, RadioMap
from .model import LocalizerModel, TokenBatch, encode_fingerprints


PREDICT_CHUNK = 256


def forward(model: LocalizerModel, fp: Fingerprint, dist_maps: Optional[RssDistributionMaps] = None, mode: str = "eval", rng=None) -> GaussianLocation:
    """Single fingerprint through the network; normalized coordinates."""
    if mode not in {"train", "eval"}:
        raise ValueError(f"Invalid mode: {mode}")
    batch, _ = encode_fingerprints([fp], model.mac_table)
    windows = None
    if dist_maps is not None and model.config.embedding.mac_embedding == "distribution_map":
        windows = dist_maps.windowed(model.config.embedding.window)
    mu, sigma, _ = model.forward_batch(batch, training=mode == "train", rng=rng, windows=windows)
    return GaussianLocation(Location(float(mu[0, 0]), float(mu[0, 1])), float(sigma[0]))


def predict_normalized(model: LocalizerModel, batch: TokenBatch) -> Tuple[np.ndarray, np.ndarray]:
    mus, sigmas = [], []
    for start in range(0, len(batch), PREDICT_CHUNK):
        rows = np.arange(start, min(start + PREDICT_CHUNK, len(batch)))
        mu, sigma = model.predict(batch.take(rows))
        mus.append(mu)
        sigmas.append(sigma)
    return np.concatenate(mus), np.concatenate(sigmas)


def to_meters(
    model: LocalizerModel,
    mu: np.ndarray,
    sigma: np.ndarray,
    denorm: Optional[CoordinateTransform] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    transform = denorm or model.transform
    mu_m = transform.invert(mu)
    if model.constant_sigma is not None:
        return mu_m, np.full(len(sigma), float(model.constant_sigma))
    return mu_m, sigma * transform.mean_extent


def localize(
    model: LocalizerModel,
    fp: Fingerprint,
    dist_maps: Optional[RssDistributionMaps] = None,
    denorm: Optional[CoordinateTransform] = None,
) -> GaussianLocation:
    pred = forward(model, fp, dist_maps=dist_maps, mode="eval")
    mu_m, sigma_m = to_meters(model, pred.mu.as_array()[None, :], np.array([pred.sigma]), denorm)
    return GaussianLocation(Location(float(mu_m[0, 0]), float(mu_m[0, 1])), float(sigma_m[0]))


def localize_many(model: LocalizerModel, fingerprints: Sequence[Fingerprint]) -> List[Optional[GaussianLocation]]:
    """Batched localize; fingerprints without any known MAC map to None."""
    results: List[Optional[GaussianLocation]] = [None] * len(fingerprints)
    if not fingerprints:
        return results
    try:
        batch, kept = encode_fingerprints(fingerprints, model.mac_table, skip_empty=True)
    except EmptyFingerprintError:
        return results
    mu, sigma = predict_normalized(model, batch)
    mu_m, sigma_m = to_meters(model, mu, sigma)
    for row, i in enumerate(kept):
        results[int(i)] = GaussianLocation(Location(float(mu_m[row, 0]), float(mu_m[row, 1])), float(sigma_m[row]))
    return results


def evaluate_map(model: LocalizerModel, radio_map: RadioMap) -> pd.DataFrame:
    """Per-sample predictions against the recorded locations of ``radio_map``."""
    batch, kept = encode_fingerprints(radio_map.fingerprints, model.mac_table, skip_empty=True)
    mu, sigma = predict_normalized(model, batch)
    mu_m, sigma_m = to_meters(model, mu, sigma)
    truth = radio_map.locations()[kept]
    err = np.linalg.norm(mu_m - truth, axis=1)
    return pd.DataFrame(
        {
            "est_x": mu_m[:, 0],
            "est_y": mu_m[:, 1],
            "true_x": truth[:, 0],
            "true_y": truth[:, 1],
            "sigma": sigma_m,
            "err": err,
        }
    )


def uncertainty_error_correlation(sigmas: np.ndarray, errors: np.ndarray) -> float:
    """Pearson r between predicted sigma and realized error; NaN when either is constant."""
    sigmas = np.asarray(sigmas, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if len(sigmas) < 2 or np.ptp(sigmas) == 0 or np.ptp(errors) == 0:
        return float("nan")
    return float(stats.pearsonr(sigmas, errors)[0])


def export_embeddings(model: LocalizerModel, radio_map: Optional[RadioMap] = None) -> pd.DataFrame:
    """One row per MAC of the model's table: ``mac, e0 .. e{d-1}``."""
    if radio_map is not None and radio_map.mac_table != model.mac_table:
        raise ValueError("Embedding export failed: radio map MAC table differs from the model's")
    emb, _ = model.mac_embeddings(np.arange(len(model.mac_table)))
    frame = pd.DataFrame(emb, columns=[f"e{i}" for i in range(emb.shape[1])])
    frame.insert(0, "mac", list(model.mac_table.macs))
    return frame


__all__ = [
    "evaluate_map",
    "export_embeddings",
    "forward",
    "localize",
    "localize_many",
    "predict_normalized",
    "to_meters",
    "uncertainty_error_correlation",
]
