"""Patch feature extractor: network, contrastive loss, training."""

from .losses import info_nce_gradients, info_nce_loss, loss_gradient_check, similarity
from .network import (
    DEFAULT_CHANNELS,
    EncoderParams,
    encode,
    encode_batch,
    init_params,
)
from .training import (
    TrainConfig,
    checkpoint_path,
    evaluate_loss,
    fine_tune,
    load_checkpoint,
    save_checkpoint,
    train,
)

__all__ = [
    "DEFAULT_CHANNELS",
    "EncoderParams",
    "TrainConfig",
    "checkpoint_path",
    "encode",
    "encode_batch",
    "evaluate_loss",
    "fine_tune",
    "info_nce_gradients",
    "info_nce_loss",
    "init_params",
    "load_checkpoint",
    "loss_gradient_check",
    "save_checkpoint",
    "similarity",
    "train",
]
