"""Finite-difference checks for the hand-written backward pass."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from .loss import batch_loss
from .model import LocalizerModel, TokenBatch


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GradientCheckReport:
    max_relative_error: float
    n_directions: int
    per_block: Dict[str, float] = field(default_factory=dict)

    @property
    def worst_block(self) -> str:
        if not self.per_block:
            return ""
        return max(self.per_block, key=self.per_block.get)


def _relative_error(a: float, b: float, floor: float = 1e-10) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def batch_objective(
    model: LocalizerModel,
    batch: TokenBatch,
    targets: np.ndarray,
    dropout_seed: int = 0,
    training: bool = True,
    use_uncertainty: bool = True,
):
    """Loss as a function of the parameter vector, with dropout masks pinned by ``dropout_seed``."""

    def objective(vector: np.ndarray) -> float:
        model.set_parameter_vector(vector)
        rng = np.random.default_rng(dropout_seed)
        mu, sigma, _ = model.forward_batch(batch, training=training, rng=rng)
        return batch_loss(mu, sigma, targets, use_uncertainty=use_uncertainty)[0]

    return objective


def analytic_gradient(
    model: LocalizerModel,
    batch: TokenBatch,
    targets: np.ndarray,
    dropout_seed: int = 0,
    training: bool = True,
    use_uncertainty: bool = True,
) -> np.ndarray:
    rng = np.random.default_rng(dropout_seed)
    return model.loss_and_grad(batch, targets, rng=rng, training=training, use_uncertainty=use_uncertainty)[1]


def gradient_check(
    model: LocalizerModel,
    batch: TokenBatch,
    targets: np.ndarray,
    n_directions: int = 200,
    h: float = 1e-4,
    seed: int = 0,
    dropout_seed: int = 0,
    training: bool = True,
) -> GradientCheckReport:
    """Compare directional derivatives against central differences along random unit directions."""
    base = model.parameter_vector()
    grad = analytic_gradient(model, batch, targets, dropout_seed, training)
    objective = batch_objective(model, batch, targets, dropout_seed, training)
    rng = np.random.default_rng(seed)
    worst = 0.0
    try:
        for _ in range(n_directions):
            direction = rng.normal(size=base.shape)
            direction /= np.linalg.norm(direction)
            numeric = (objective(base + h * direction) - objective(base - h * direction)) / (2.0 * h)
            worst = max(worst, _relative_error(float(grad @ direction), numeric))
    finally:
        model.set_parameter_vector(base)
    logger.info("Directional gradient check: %d directions, max relative error %.2e", n_directions, worst)
    return GradientCheckReport(max_relative_error=worst, n_directions=n_directions)


def block_gradient_check(
    model: LocalizerModel,
    batch: TokenBatch,
    targets: np.ndarray,
    samples_per_block: int = 8,
    h: float = 1e-4,
    seed: int = 0,
    dropout_seed: int = 0,
    training: bool = True,
    abs_floor: float = 1e-7,
) -> GradientCheckReport:
    """Per-coordinate central differences on a sample of entries from every parameter block.

    Entries whose analytic and numeric derivatives are both below ``abs_floor`` count as exact.
    """
    base = model.parameter_vector()
    grad = analytic_gradient(model, batch, targets, dropout_seed, training)
    objective = batch_objective(model, batch, targets, dropout_seed, training)
    rng = np.random.default_rng(seed)
    per_block: Dict[str, float] = {}
    offset = 0
    try:
        for name, shape in zip(model.parameter_names, (model.params[n].shape for n in model.parameter_names)):
            size = int(np.prod(shape))
            picks = rng.choice(size, size=min(samples_per_block, size), replace=False)
            worst = 0.0
            for local in picks:
                i = offset + int(local)
                step = np.zeros_like(base)
                step[i] = h
                numeric = (objective(base + step) - objective(base - step)) / (2.0 * h)
                if max(abs(numeric), abs(grad[i])) < abs_floor:
                    continue
                worst = max(worst, _relative_error(float(grad[i]), numeric))
            per_block[name] = worst
            offset += size
    finally:
        model.set_parameter_vector(base)
    return GradientCheckReport(
        max_relative_error=max(per_block.values(), default=0.0),
        n_directions=0,
        per_block=per_block,
    )


__all__ = ["GradientCheckReport", "analytic_gradient", "batch_objective", "block_gradient_check", "gradient_check"]
