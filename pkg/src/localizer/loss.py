from __future__ import annotations

from typing import Tuple

import numpy as np

from ..radio.types import GaussianLocation, Location


def loss(pred: GaussianLocation, target: Location) -> float:
    """Error over sigma plus log sigma for one prediction."""
    e = float(np.hypot(pred.mu.x - target.x, pred.mu.y - target.y))
    return e / pred.sigma + float(np.log(pred.sigma))


def batch_loss(
    mu: np.ndarray,
    sigma: np.ndarray,
    targets: np.ndarray,
    use_uncertainty: bool = True,
) -> Tuple[float, np.ndarray, np.ndarray]:
    """Mean loss over the batch and its gradients with respect to ``mu`` and ``sigma``.

    With ``use_uncertainty`` off the loss is the plain mean Euclidean error and sigma gets no gradient.
    """
    diff = mu - targets
    e = np.linalg.norm(diff, axis=1)
    n = len(e)
    unit = diff / np.maximum(e, 1e-12)[:, None]
    if not use_uncertainty:
        return float(e.mean()), unit / n, np.zeros_like(sigma)
    per_sample = e / sigma + np.log(sigma)
    dmu = unit / sigma[:, None] / n
    dsigma = (-e / sigma**2 + 1.0 / sigma) / n
    return float(per_sample.mean()), dmu, dsigma


__all__ = ["batch_loss", "loss"]
