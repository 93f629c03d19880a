"""Uncertainty-aware set-attention WiFi localizer with explicit forward and backward passes."""

from .checkpoint import CHECKPOINT_FORMAT, load_checkpoint, save_checkpoint
from .config import EmbeddingConfig, EncoderConfig, LocalizerConfig, TrainingConfig
from .gradcheck import GradientCheckReport, block_gradient_check, gradient_check
from .inference import (
    evaluate_map,
    export_embeddings,
    forward,
    localize,
    localize_many,
    uncertainty_error_correlation,
)
from .layers import attention_head, multi_head
from .loss import batch_loss, loss
from .model import LocalizerModel, TokenBatch, embed_fingerprint, encode_fingerprints
from .optim import AdamW
from .training import TrainingHistory, build_localizer, fit_localizer, train

__all__ = [
    "AdamW",
    "CHECKPOINT_FORMAT",
    "EmbeddingConfig",
    "EncoderConfig",
    "GradientCheckReport",
    "LocalizerConfig",
    "LocalizerModel",
    "TokenBatch",
    "TrainingConfig",
    "TrainingHistory",
    "attention_head",
    "batch_loss",
    "block_gradient_check",
    "build_localizer",
    "embed_fingerprint",
    "encode_fingerprints",
    "evaluate_map",
    "export_embeddings",
    "fit_localizer",
    "forward",
    "gradient_check",
    "load_checkpoint",
    "localize",
    "localize_many",
    "loss",
    "multi_head",
    "save_checkpoint",
    "train",
    "uncertainty_error_correlation",
]
