"""Forward/backward pairs for the numpy localizer.

Every ``*_forward`` returns ``(output, cache)`` and the matching ``*_backward``
takes the upstream gradient plus that cache. Parameters arrive as plain arrays;
gradients come back in dicts keyed like the parameters.
"""

from __future__ import annotations

import math
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit, softmax


_GELU_C = math.sqrt(2.0 / math.pi)
LAYER_NORM_EPS = 1e-5


# activations

def activation_forward(x: np.ndarray, kind: str) -> Tuple[np.ndarray, tuple]:
    if kind == "relu":
        return np.maximum(x, 0.0), (kind, x)
    if kind == "gelu":
        inner = _GELU_C * (x + 0.044715 * x**3)
        t = np.tanh(inner)
        return 0.5 * x * (1.0 + t), (kind, x, t)
    raise ValueError(f"Unknown activation: {kind}")


def activation_backward(dy: np.ndarray, cache: tuple) -> np.ndarray:
    kind = cache[0]
    if kind == "relu":
        return dy * (cache[1] > 0)
    x, t = cache[1], cache[2]
    dinner = _GELU_C * (1.0 + 3.0 * 0.044715 * x**2)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * dinner)


# dense

def linear_forward(x: np.ndarray, w: np.ndarray, b: Optional[np.ndarray] = None):
    y = x @ w
    if b is not None:
        y = y + b
    return y, x


def linear_backward(dy: np.ndarray, x: np.ndarray, w: np.ndarray, with_bias: bool = True):
    x2 = x.reshape(-1, x.shape[-1])
    dy2 = dy.reshape(-1, dy.shape[-1])
    grads = {"w": x2.T @ dy2}
    if with_bias:
        grads["b"] = dy2.sum(axis=0)
    return dy @ w.T, grads


def mlp_forward(x: np.ndarray, weights: Sequence[Tuple[np.ndarray, np.ndarray]], activation: str):
    """Dense stack with ``activation`` between layers and a linear last layer."""
    caches = []
    h = x
    for i, (w, b) in enumerate(weights):
        h, lin_cache = linear_forward(h, w, b)
        act_cache = None
        if i < len(weights) - 1:
            h, act_cache = activation_forward(h, activation)
        caches.append((lin_cache, act_cache))
    return h, caches


def mlp_backward(dy: np.ndarray, weights, caches):
    grads = [None] * len(weights)
    d = dy
    for i in range(len(weights) - 1, -1, -1):
        lin_cache, act_cache = caches[i]
        if act_cache is not None:
            d = activation_backward(d, act_cache)
        d, grads[i] = linear_backward(d, lin_cache, weights[i][0])
    return d, grads


# normalization and dropout

def layer_norm_forward(x: np.ndarray, gain: np.ndarray, bias: np.ndarray):
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LAYER_NORM_EPS)
    xhat = (x - mean) * inv
    return xhat * gain + bias, (xhat, inv, gain)


def layer_norm_backward(dy: np.ndarray, cache):
    xhat, inv, gain = cache
    d = xhat.shape[-1]
    dgain = (dy * xhat).reshape(-1, d).sum(axis=0)
    dbias = dy.reshape(-1, d).sum(axis=0)
    dxhat = dy * gain
    dx = inv / d * (
        d * dxhat
        - dxhat.sum(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
    )
    return dx, {"g": dgain, "b": dbias}


def dropout_forward(x: np.ndarray, rate: float, rng: Optional[np.random.Generator]):
    if rng is None or rate <= 0.0:
        return x, None
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(dy: np.ndarray, mask):
    return dy if mask is None else dy * mask


# attention

def attention_head(E: np.ndarray, W_Q: np.ndarray, W_K: np.ndarray, W_V: np.ndarray) -> np.ndarray:
    """softmax(E W_Q (E W_K)^T / sqrt(d_k)) E W_V for one token set."""
    q, k, v = E @ W_Q, E @ W_K, E @ W_V
    weights = softmax(q @ k.T / math.sqrt(W_K.shape[1]), axis=-1)
    return weights @ v


def multi_head(
    E: np.ndarray,
    head_weights: Sequence[Tuple[np.ndarray, np.ndarray, np.ndarray]],
    W_O: np.ndarray,
) -> np.ndarray:
    heads = [attention_head(E, wq, wk, wv) for wq, wk, wv in head_weights]
    return np.concatenate(heads, axis=-1) @ W_O


def mha_forward(x: np.ndarray, key_mask: np.ndarray, p: Dict[str, np.ndarray], n_heads: int):
    """Batched multi-head attention; ``key_mask`` is (B, T) with True on real tokens."""
    B, T, D = x.shape
    dk = D // n_heads

    def split(a):
        return a.reshape(B, T, n_heads, dk).transpose(0, 2, 1, 3)

    q, k, v = split(x @ p["wq"]), split(x @ p["wk"]), split(x @ p["wv"])
    scores = q @ k.transpose(0, 1, 3, 2) / math.sqrt(dk)
    scores = np.where(key_mask[:, None, None, :], scores, -np.inf)
    attn = softmax(scores, axis=-1)
    heads = attn @ v
    concat = heads.transpose(0, 2, 1, 3).reshape(B, T, D)
    out = concat @ p["wo"]
    return out, (x, q, k, v, attn, concat, n_heads)


def mha_backward(dout: np.ndarray, cache, p: Dict[str, np.ndarray]):
    x, q, k, v, attn, concat, n_heads = cache
    B, T, D = x.shape
    dk = D // n_heads
    grads = {"wo": concat.reshape(-1, D).T @ dout.reshape(-1, D)}
    dconcat = dout @ p["wo"].T
    dheads = dconcat.reshape(B, T, n_heads, dk).transpose(0, 2, 1, 3)

    dattn = dheads @ v.transpose(0, 1, 3, 2)
    dv = attn.transpose(0, 1, 3, 2) @ dheads
    dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
    dscores /= math.sqrt(dk)
    dq = dscores @ k
    dkey = dscores.transpose(0, 1, 3, 2) @ q

    def merge(a):
        return a.transpose(0, 2, 1, 3).reshape(B, T, D)

    dq, dkey, dv = merge(dq), merge(dkey), merge(dv)
    x2 = x.reshape(-1, D)
    grads["wq"] = x2.T @ dq.reshape(-1, D)
    grads["wk"] = x2.T @ dkey.reshape(-1, D)
    grads["wv"] = x2.T @ dv.reshape(-1, D)
    dx = dq @ p["wq"].T + dkey @ p["wk"].T + dv @ p["wv"].T
    return dx, grads


# convolution

def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int):
    """Valid convolution on NCHW input via strided windows."""
    out_c, in_c, kh, kw = w.shape
    windows = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    n, _, oh, ow = windows.shape[:4]
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n, oh, ow, in_c * kh * kw)
    out = cols @ w.reshape(out_c, -1).T + b
    return out.transpose(0, 3, 1, 2), (x.shape, cols, stride)


def conv2d_backward(dout: np.ndarray, cache, w: np.ndarray, need_input_grad: bool = True):
    x_shape, cols, stride = cache
    out_c, in_c, kh, kw = w.shape
    n, _, oh, ow = dout.shape
    d = dout.transpose(0, 2, 3, 1)
    grads = {
        "w": (d.reshape(-1, out_c).T @ cols.reshape(-1, cols.shape[-1])).reshape(w.shape),
        "b": d.reshape(-1, out_c).sum(axis=0),
    }
    if not need_input_grad:
        return None, grads
    dcols = (d @ w.reshape(out_c, -1)).reshape(n, oh, ow, in_c, kh, kw)
    dx = np.zeros(x_shape)
    row_stop = stride * (oh - 1) + 1
    col_stop = stride * (ow - 1) + 1
    for i in range(kh):
        for j in range(kw):
            dx[:, :, i:i + row_stop:stride, j:j + col_stop:stride] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return dx, grads


def sigmoid(x: np.ndarray) -> np.ndarray:
    return expit(x)


__all__ = [
    "activation_backward",
    "activation_forward",
    "attention_head",
    "conv2d_backward",
    "conv2d_forward",
    "dropout_backward",
    "dropout_forward",
    "layer_norm_backward",
    "layer_norm_forward",
    "linear_backward",
    "linear_forward",
    "mha_backward",
    "mha_forward",
    "mlp_backward",
    "mlp_forward",
    "multi_head",
    "sigmoid",
]
