from __future__ import annotations

from typing import Tuple

import numpy as np


class AdamW:
    """Decoupled weight decay Adam over a flat parameter vector.

    Decay is applied to the parameters before the moment update, so a step reads
    ``p <- p - lr*wd*p`` then ``p <- p - lr * m_hat / (sqrt(v_hat) + eps)``.
    """

    def __init__(
        self,
        n_parameters: int,
        lr: float,
        betas: Tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ):
        if lr < 0:
            raise ValueError(f"Invalid learning rate: {lr}")
        if not (0.0 <= betas[0] < 1.0 and 0.0 <= betas[1] < 1.0):
            raise ValueError(f"Invalid betas: {betas}")
        self.lr = float(lr)
        self.beta1, self.beta2 = float(betas[0]), float(betas[1])
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.m = np.zeros(n_parameters)
        self.v = np.zeros(n_parameters)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        params = params * (1.0 - self.lr * self.weight_decay)
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


__all__ = ["AdamW"]
