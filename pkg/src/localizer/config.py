from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Tuple

from ..runtime.config import Config, read_flat_config


ACTIVATIONS = ("relu", "gelu")
MAC_EMBEDDINGS = ("distribution_map", "index")


def conv_output_size(size: int, kernel: int, stride: int) -> int:
    return (size - kernel) // stride + 1


@dataclass(frozen=True)
class EmbeddingConfig:
    d_model: int = 256
    conv_channels: int = 16
    conv_kernels: Tuple[int, int] = (20, 5)
    conv_strides: Tuple[int, int] = (4, 2)
    rss_widths: Tuple[int, ...] = (1, 128, 64, 1)
    window: int = 64
    mac_embedding: str = "distribution_map"

    def conv_shapes(self) -> Tuple[int, int]:
        first = conv_output_size(self.window, self.conv_kernels[0], self.conv_strides[0])
        second = conv_output_size(first, self.conv_kernels[1], self.conv_strides[1])
        return first, second

    @property
    def cnn_features(self) -> int:
        _, second = self.conv_shapes()
        return self.conv_channels * second * second


@dataclass(frozen=True)
class EncoderConfig:
    n_layers: int = 4
    n_heads: int = 4
    d_ff: int = 256
    dropout: float = 0.2
    residual: bool = True
    layer_norm: bool = True


@dataclass(frozen=True)
class LocalizerConfig:
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    head_widths: Tuple[int, ...] = (256, 128, 64)
    activation: str = "relu"
    sigma_floor: float = Config.SIGMA_FLOOR
    seed: int = 0

    @property
    def d_model(self) -> int:
        return self.embedding.d_model

    @property
    def d_k(self) -> int:
        return self.embedding.d_model // self.encoder.n_heads

    def validate(self) -> "LocalizerConfig":
        emb, enc = self.embedding, self.encoder
        if emb.d_model < 8:
            raise ValueError(f"Invalid localizer config: d_model={emb.d_model}, need at least 8")
        if enc.n_heads < 1 or emb.d_model % enc.n_heads != 0:
            raise ValueError(
                f"Invalid localizer config: d_model={emb.d_model} not divisible by n_heads={enc.n_heads}"
            )
        if enc.n_layers < 1:
            raise ValueError(f"Invalid localizer config: n_layers={enc.n_layers}")
        if not 0.0 <= enc.dropout < 1.0:
            raise ValueError(f"Invalid localizer config: dropout={enc.dropout}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"Invalid localizer config: activation={self.activation}")
        if emb.mac_embedding not in MAC_EMBEDDINGS:
            raise ValueError(f"Invalid localizer config: mac_embedding={emb.mac_embedding}")
        if emb.mac_embedding == "distribution_map" and min(emb.conv_shapes()) < 1:
            raise ValueError(
                f"Invalid localizer config: window={emb.window} too small for kernels {emb.conv_kernels}"
            )
        if emb.rss_widths[0] != 1 or emb.rss_widths[-1] != 1:
            raise ValueError(f"Invalid localizer config: rss_widths={emb.rss_widths} must start and end with 1")
        if not self.sigma_floor > 0:
            raise ValueError(f"Invalid localizer config: sigma_floor={self.sigma_floor}")
        return self

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "LocalizerConfig":
        embedding = dict(payload.get("embedding", {}))
        for key in ("conv_kernels", "conv_strides", "rss_widths"):
            if key in embedding:
                embedding[key] = tuple(embedding[key])
        top = {k: v for k, v in payload.items() if k not in {"embedding", "encoder"}}
        if "head_widths" in top:
            top["head_widths"] = tuple(top["head_widths"])
        return cls(
            embedding=EmbeddingConfig(**embedding),
            encoder=EncoderConfig(**dict(payload.get("encoder", {}))),
            **top,
        ).validate()


@dataclass(frozen=True)
class TrainingConfig:
    lr: float = Config.LEARNING_RATE
    betas: Tuple[float, float] = Config.ADAM_BETAS
    eps: float = Config.ADAM_EPS
    weight_decay: float = Config.WEIGHT_DECAY
    epochs: int = Config.MAX_EPOCHS
    batch_size: int = Config.BATCH_SIZE
    seed: int = 0
    use_uncertainty: bool = True
    raise_on_divergence: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


# flat keys accepted in a training config file
TRAIN_CONFIG_KEYS = (
    "d_model",
    "n_layers",
    "n_heads",
    "d_ff",
    "dropout",
    "residual",
    "layer_norm",
    "window",
    "mac_embedding",
    "activation",
    "lr",
    "weight_decay",
    "epochs",
    "batch_size",
    "seed",
    "use_uncertainty",
    "cell_size",
    "val_ratio",
)


def configs_from_mapping(raw: Dict[str, Any]) -> Tuple[LocalizerConfig, TrainingConfig]:
    emb_keys = {f.name for f in fields(EmbeddingConfig)}
    enc_keys = {f.name for f in fields(EncoderConfig)}
    train_keys = {f.name for f in fields(TrainingConfig)}
    seed = int(raw.get("seed", 0))
    localizer = LocalizerConfig(
        embedding=EmbeddingConfig(**{k: v for k, v in raw.items() if k in emb_keys}),
        encoder=EncoderConfig(**{k: v for k, v in raw.items() if k in enc_keys}),
        activation=str(raw.get("activation", "relu")),
        seed=seed,
    ).validate()
    training = TrainingConfig(**{k: v for k, v in raw.items() if k in train_keys})
    return localizer, training


def load_training_config(path: Path) -> Tuple[LocalizerConfig, TrainingConfig, Dict[str, Any]]:
    raw = read_flat_config(path, "training", TRAIN_CONFIG_KEYS)
    localizer, training = configs_from_mapping(raw)
    return localizer, training, raw


__all__ = [
    "ACTIVATIONS",
    "EmbeddingConfig",
    "EncoderConfig",
    "LocalizerConfig",
    "MAC_EMBEDDINGS",
    "TRAIN_CONFIG_KEYS",
    "TrainingConfig",
    "configs_from_mapping",
    "conv_output_size",
    "load_training_config",
]
