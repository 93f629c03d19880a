from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..radio.dataset import CoordinateTransform
from ..radio.errors import EmptyFingerprintError, NonFiniteGradientError
from ..radio.types import Fingerprint, MacTable, normalize_rss
from .config import LocalizerConfig
from .layers import (
    activation_backward,
    activation_forward,
    conv2d_backward,
    conv2d_forward,
    dropout_backward,
    dropout_forward,
    layer_norm_backward,
    layer_norm_forward,
    linear_backward,
    linear_forward,
    mha_backward,
    mha_forward,
    mlp_backward,
    mlp_forward,
    sigmoid,
)
from .loss import batch_loss


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TokenBatch:
    mac_idx: np.ndarray
    rss: np.ndarray
    mask: np.ndarray

    def __len__(self) -> int:
        return int(self.mac_idx.shape[0])

    def take(self, rows: np.ndarray) -> "TokenBatch":
        mask = self.mask[rows]
        width = max(int(mask.sum(axis=1).max()), 1)
        return TokenBatch(self.mac_idx[rows, :width], self.rss[rows, :width], mask[:, :width])


def encode_fingerprints(
    fingerprints: Sequence[Fingerprint],
    mac_table: MacTable,
    skip_empty: bool = False,
) -> Tuple[TokenBatch, np.ndarray]:
    """Pad fingerprints into index/RSS arrays, entries sorted by MAC index.

    Unknown MACs are dropped. Returns the batch and the positions of the
    fingerprints it holds (all of them unless ``skip_empty`` removed some).
    """
    rows: List[Tuple[np.ndarray, np.ndarray]] = []
    kept = []
    dropped = 0
    for i, fp in enumerate(fingerprints):
        idx, rss = [], []
        for mac, value in fp.entries:
            if mac in mac_table:
                idx.append(mac_table.index_of(mac))
                rss.append(value)
            else:
                dropped += 1
        if not idx:
            if skip_empty:
                continue
            raise EmptyFingerprintError(f"Fingerprint at t={fp.timestamp:g} has no MAC known to the radio map")
        order = np.argsort(idx, kind="stable")
        rows.append((np.asarray(idx)[order], np.asarray(rss, dtype=float)[order]))
        kept.append(i)
    if dropped:
        logger.warning("Dropped %d observations of MACs unknown to the radio map", dropped)
    if not rows:
        raise EmptyFingerprintError("No fingerprint has a MAC known to the radio map")

    width = max(len(r[0]) for r in rows)
    mac_idx = np.zeros((len(rows), width), dtype=np.intp)
    rss = np.zeros((len(rows), width), dtype=float)
    mask = np.zeros((len(rows), width), dtype=bool)
    for r, (idx, values) in enumerate(rows):
        mac_idx[r, : len(idx)] = idx
        rss[r, : len(idx)] = normalize_rss(values)
        mask[r, : len(idx)] = True
    return TokenBatch(mac_idx, rss, mask), np.asarray(kept, dtype=np.intp)


def parameter_shapes(config: LocalizerConfig, n_macs: int) -> List[Tuple[str, Tuple[int, ...]]]:
    emb, enc = config.embedding, config.encoder
    d = emb.d_model
    shapes: List[Tuple[str, Tuple[int, ...]]] = []
    if emb.mac_embedding == "distribution_map":
        k1, k2 = emb.conv_kernels
        c = emb.conv_channels
        shapes += [
            ("embed.conv1.w", (c, 1, k1, k1)),
            ("embed.conv1.b", (c,)),
            ("embed.conv2.w", (c, c, k2, k2)),
            ("embed.conv2.b", (c,)),
            ("embed.proj.w", (emb.cnn_features, d)),
            ("embed.proj.b", (d,)),
        ]
    else:
        shapes.append(("embed.table", (n_macs, d)))
    widths = emb.rss_widths
    for i in range(len(widths) - 1):
        shapes += [(f"rss.{i}.w", (widths[i], widths[i + 1])), (f"rss.{i}.b", (widths[i + 1],))]
    for layer in range(enc.n_layers):
        prefix = f"enc{layer}"
        shapes += [(f"{prefix}.attn.{name}", (d, d)) for name in ("wq", "wk", "wv", "wo")]
        if enc.layer_norm:
            shapes += [(f"{prefix}.ln1.g", (d,)), (f"{prefix}.ln1.b", (d,))]
        shapes += [
            (f"{prefix}.ff.0.w", (d, enc.d_ff)),
            (f"{prefix}.ff.0.b", (enc.d_ff,)),
            (f"{prefix}.ff.1.w", (enc.d_ff, d)),
            (f"{prefix}.ff.1.b", (d,)),
        ]
        if enc.layer_norm:
            shapes += [(f"{prefix}.ln2.g", (d,)), (f"{prefix}.ln2.b", (d,))]
    for head, out in (("mu", 2), ("sigma", 1)):
        dims = (d, *config.head_widths, out)
        for i in range(len(dims) - 1):
            shapes += [(f"{head}.{i}.w", (dims[i], dims[i + 1])), (f"{head}.{i}.b", (dims[i + 1],))]
    return shapes


def init_parameters(config: LocalizerConfig, n_macs: int) -> Dict[str, np.ndarray]:
    rng = np.random.default_rng(config.seed)
    params: Dict[str, np.ndarray] = {}
    for name, shape in parameter_shapes(config, n_macs):
        if name.endswith(".g"):
            params[name] = np.ones(shape)
        elif len(shape) == 1:
            params[name] = np.zeros(shape)
        else:
            if len(shape) == 4:
                receptive = shape[2] * shape[3]
                fan_in, fan_out = shape[1] * receptive, shape[0] * receptive
            else:
                fan_in, fan_out = shape
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            params[name] = rng.uniform(-limit, limit, size=shape)
    return params


class LocalizerModel:
    """Set-attention localizer mapping a fingerprint to a Gaussian location in normalized units."""

    def __init__(
        self,
        config: LocalizerConfig,
        mac_table: MacTable,
        windows: Optional[np.ndarray] = None,
        transform: Optional[CoordinateTransform] = None,
        params: Optional[Dict[str, np.ndarray]] = None,
    ):
        self.config = config.validate()
        self.mac_table = mac_table
        if config.embedding.mac_embedding == "distribution_map":
            if windows is None:
                raise ValueError("Distribution-map embedding requires RSS distribution map windows")
            expected = (len(mac_table), config.embedding.window, config.embedding.window)
            if windows.shape != expected:
                raise ValueError(f"Invalid windows shape: {windows.shape}, expected {expected}")
        self.windows = None if windows is None else np.asarray(windows, dtype=float)
        self.transform = transform or CoordinateTransform.identity()
        self._shapes = parameter_shapes(self.config, len(mac_table))
        self.params = params if params is not None else init_parameters(self.config, len(mac_table))
        self.constant_sigma: Optional[float] = None
        self.metadata: Dict[str, object] = {}

    # parameter vector view

    @property
    def parameter_names(self) -> List[str]:
        return [name for name, _ in self._shapes]

    @property
    def n_parameters(self) -> int:
        return int(sum(np.prod(shape) for _, shape in self._shapes))

    def parameter_vector(self) -> np.ndarray:
        return np.concatenate([self.params[name].ravel() for name, _ in self._shapes])

    def set_parameter_vector(self, vector: np.ndarray) -> None:
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (self.n_parameters,):
            raise ValueError(f"Invalid parameter vector: shape={vector.shape}, expected ({self.n_parameters},)")
        offset = 0
        for name, shape in self._shapes:
            size = int(np.prod(shape))
            self.params[name] = vector[offset:offset + size].reshape(shape).copy()
            offset += size

    def gradient_vector(self, grads: Dict[str, np.ndarray]) -> np.ndarray:
        parts = []
        for name, shape in self._shapes:
            g = grads.get(name)
            if g is None:
                g = np.zeros(shape)
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradientError(name)
            parts.append(np.asarray(g, dtype=float).ravel())
        return np.concatenate(parts)

    # embedding

    def _head_weights(self, prefix: str, n_layers: int):
        return [(self.params[f"{prefix}.{i}.w"], self.params[f"{prefix}.{i}.b"]) for i in range(n_layers)]

    def _rss_weights(self):
        return self._head_weights("rss", len(self.config.embedding.rss_widths) - 1)

    def _mlp_head(self, prefix: str):
        return self._head_weights(prefix, len(self.config.head_widths) + 1)

    def mac_embeddings(self, mac_indices: np.ndarray, windows: Optional[np.ndarray] = None):
        """d_model vectors for the given MAC indices, plus the cache for backward.

        ``windows`` overrides the model's distribution-map windows for this call only.
        """
        mac_indices = np.asarray(mac_indices, dtype=np.intp)
        p = self.params
        act = self.config.activation
        if self.config.embedding.mac_embedding == "index":
            return p["embed.table"][mac_indices], ("index", mac_indices)
        s1, s2 = self.config.embedding.conv_strides
        source = self.windows if windows is None else windows
        x = source[mac_indices][:, None, :, :]
        c1, conv1 = conv2d_forward(x, p["embed.conv1.w"], p["embed.conv1.b"], s1)
        a1, act1 = activation_forward(c1, act)
        c2, conv2 = conv2d_forward(a1, p["embed.conv2.w"], p["embed.conv2.b"], s2)
        a2, act2 = activation_forward(c2, act)
        flat = a2.reshape(len(mac_indices), -1)
        emb, proj = linear_forward(flat, p["embed.proj.w"], p["embed.proj.b"])
        return emb, ("cnn", conv1, act1, conv2, act2, a2.shape, proj)

    def _mac_embeddings_backward(self, demb: np.ndarray, cache, grads: Dict[str, np.ndarray]) -> None:
        p = self.params
        if cache[0] == "index":
            table_grad = np.zeros_like(p["embed.table"])
            np.add.at(table_grad, cache[1], demb)
            grads["embed.table"] = table_grad
            return
        _, conv1, act1, conv2, act2, a2_shape, proj = cache
        dflat, g = linear_backward(demb, proj, p["embed.proj.w"])
        grads["embed.proj.w"], grads["embed.proj.b"] = g["w"], g["b"]
        da2 = activation_backward(dflat.reshape(a2_shape), act2)
        da1, g = conv2d_backward(da2, conv2, p["embed.conv2.w"])
        grads["embed.conv2.w"], grads["embed.conv2.b"] = g["w"], g["b"]
        dc1 = activation_backward(da1, act1)
        _, g = conv2d_backward(dc1, conv1, p["embed.conv1.w"], need_input_grad=False)
        grads["embed.conv1.w"], grads["embed.conv1.b"] = g["w"], g["b"]

    def rss_scale(self, rss_normalized: np.ndarray):
        h, cache = mlp_forward(np.asarray(rss_normalized, dtype=float)[..., None], self._rss_weights(), self.config.activation)
        return sigmoid(h), cache

    # encoder

    def _encoder_layer_forward(self, x, mask, layer: int, rng):
        enc = self.config.encoder
        p = self.params
        prefix = f"enc{layer}"
        attn_p = {name: p[f"{prefix}.attn.{name}"] for name in ("wq", "wk", "wv", "wo")}
        a, mha_cache = mha_forward(x, mask, attn_p, enc.n_heads)
        a, drop1 = dropout_forward(a, enc.dropout, rng)
        h = x + a if enc.residual else a
        ln1 = None
        if enc.layer_norm:
            h, ln1 = layer_norm_forward(h, p[f"{prefix}.ln1.g"], p[f"{prefix}.ln1.b"])
        ff_w = self._head_weights(f"{prefix}.ff", 2)
        f, ff_cache = mlp_forward(h, ff_w, self.config.activation)
        f, drop2 = dropout_forward(f, enc.dropout, rng)
        y = h + f if enc.residual else f
        ln2 = None
        if enc.layer_norm:
            y, ln2 = layer_norm_forward(y, p[f"{prefix}.ln2.g"], p[f"{prefix}.ln2.b"])
        return y, (attn_p, mha_cache, drop1, ln1, ff_w, ff_cache, drop2, ln2)

    def _encoder_layer_backward(self, dy, cache, layer: int, grads):
        enc = self.config.encoder
        prefix = f"enc{layer}"
        attn_p, mha_cache, drop1, ln1, ff_w, ff_cache, drop2, ln2 = cache
        if ln2 is not None:
            dy, g = layer_norm_backward(dy, ln2)
            grads[f"{prefix}.ln2.g"], grads[f"{prefix}.ln2.b"] = g["g"], g["b"]
        df = dropout_backward(dy, drop2)
        dh, ff_grads = mlp_backward(df, ff_w, ff_cache)
        for i, g in enumerate(ff_grads):
            grads[f"{prefix}.ff.{i}.w"], grads[f"{prefix}.ff.{i}.b"] = g["w"], g["b"]
        if enc.residual:
            dh = dh + dy
        if ln1 is not None:
            dh, g = layer_norm_backward(dh, ln1)
            grads[f"{prefix}.ln1.g"], grads[f"{prefix}.ln1.b"] = g["g"], g["b"]
        da = dropout_backward(dh, drop1)
        dx, g = mha_backward(da, mha_cache, attn_p)
        for name, value in g.items():
            grads[f"{prefix}.attn.{name}"] = value
        if enc.residual:
            dx = dx + dh
        return dx

    # full pass

    def forward_batch(
        self,
        batch: TokenBatch,
        training: bool = False,
        rng: Optional[np.random.Generator] = None,
        windows: Optional[np.ndarray] = None,
    ):
        """Returns ``(mu (B, 2), sigma (B,), cache)`` in normalized coordinates."""
        drop_rng = rng if training else None
        mask = batch.mask
        unique = np.unique(batch.mac_idx[mask])
        emb_u, emb_cache = self.mac_embeddings(unique, windows=windows)
        pos = np.clip(np.searchsorted(unique, batch.mac_idx), 0, len(unique) - 1)
        tokens = emb_u[pos]
        scale, rss_cache = self.rss_scale(batch.rss)
        maskf = mask[..., None].astype(float)
        x = scale * tokens * maskf

        layer_caches = []
        for layer in range(self.config.encoder.n_layers):
            x, cache = self._encoder_layer_forward(x, mask, layer, drop_rng)
            layer_caches.append(cache)

        counts = mask.sum(axis=1).astype(float)
        pooled = (x * maskf).sum(axis=1) / counts[:, None]
        mu, mu_cache = mlp_forward(pooled, self._mlp_head("mu"), self.config.activation)
        z, sigma_cache = mlp_forward(pooled, self._mlp_head("sigma"), self.config.activation)
        raw_sigma = sigmoid(z[:, 0])
        sigma = np.maximum(raw_sigma, self.config.sigma_floor)
        cache = (batch, unique, emb_cache, pos, tokens, scale, rss_cache, maskf, layer_caches, counts, mu_cache, sigma_cache, raw_sigma)
        return mu, sigma, cache

    def backward(self, cache, dmu: np.ndarray, dsigma: np.ndarray) -> Dict[str, np.ndarray]:
        (batch, unique, emb_cache, pos, tokens, scale, rss_cache, maskf, layer_caches, counts, mu_cache, sigma_cache, raw_sigma) = cache
        grads: Dict[str, np.ndarray] = {}
        dpooled, head_grads = mlp_backward(dmu, self._mlp_head("mu"), mu_cache)
        for i, g in enumerate(head_grads):
            grads[f"mu.{i}.w"], grads[f"mu.{i}.b"] = g["w"], g["b"]
        active = raw_sigma > self.config.sigma_floor
        dz = (dsigma * active * raw_sigma * (1.0 - raw_sigma))[:, None]
        dpooled_s, head_grads = mlp_backward(dz, self._mlp_head("sigma"), sigma_cache)
        for i, g in enumerate(head_grads):
            grads[f"sigma.{i}.w"], grads[f"sigma.{i}.b"] = g["w"], g["b"]
        dpooled = dpooled + dpooled_s

        dx = dpooled[:, None, :] * maskf / counts[:, None, None]
        for layer in range(self.config.encoder.n_layers - 1, -1, -1):
            dx = self._encoder_layer_backward(dx, layer_caches[layer], layer, grads)

        dx = dx * maskf
        dscale = (dx * tokens).sum(axis=-1, keepdims=True)
        dtokens = dx * scale
        dh = dscale * scale * (1.0 - scale)
        _, rss_grads = mlp_backward(dh, self._rss_weights(), rss_cache)
        for i, g in enumerate(rss_grads):
            grads[f"rss.{i}.w"], grads[f"rss.{i}.b"] = g["w"], g["b"]

        demb = np.zeros((len(unique), self.config.d_model))
        np.add.at(demb, pos[batch.mask], dtokens[batch.mask])
        self._mac_embeddings_backward(demb, emb_cache, grads)
        return grads

    def loss_and_grad(
        self,
        batch: TokenBatch,
        targets: np.ndarray,
        rng: Optional[np.random.Generator] = None,
        training: bool = True,
        use_uncertainty: bool = True,
    ) -> Tuple[float, np.ndarray]:
        mu, sigma, cache = self.forward_batch(batch, training=training, rng=rng)
        loss, dmu, dsigma = batch_loss(mu, sigma, targets, use_uncertainty=use_uncertainty)
        grads = self.backward(cache, dmu, dsigma)
        return loss, self.gradient_vector(grads)

    def predict(self, batch: TokenBatch) -> Tuple[np.ndarray, np.ndarray]:
        mu, sigma, _ = self.forward_batch(batch, training=False)
        return mu, sigma

    def copy(self) -> "LocalizerModel":
        clone = LocalizerModel(
            self.config,
            self.mac_table,
            windows=self.windows,
            transform=self.transform,
            params={k: v.copy() for k, v in self.params.items()},
        )
        clone.constant_sigma = self.constant_sigma
        clone.metadata = dict(self.metadata)
        return clone


def embed_fingerprint(model: LocalizerModel, fp: Fingerprint, dist_maps=None) -> np.ndarray:
    """Token matrix |fp| x d_model in the fingerprint's own entry order.

    ``dist_maps`` may supply replacement RSS distribution maps sharing the model's MAC table.
    """
    known = [(mac, rss) for mac, rss in fp.entries if mac in model.mac_table]
    if not known:
        raise EmptyFingerprintError(f"Fingerprint at t={fp.timestamp:g} has no MAC known to the radio map")
    idx = np.array([model.mac_table.index_of(mac) for mac, _ in known], dtype=np.intp)
    windows = None
    if dist_maps is not None and model.config.embedding.mac_embedding == "distribution_map":
        windows = dist_maps.windowed(model.config.embedding.window)
    emb, _ = model.mac_embeddings(idx, windows=windows)
    scale, _ = model.rss_scale(normalize_rss([rss for _, rss in known]))
    return scale * emb


__all__ = [
    "LocalizerModel",
    "TokenBatch",
    "embed_fingerprint",
    "encode_fingerprints",
    "init_parameters",
    "parameter_shapes",
]
