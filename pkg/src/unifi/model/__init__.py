"""Time-aware attention classifier over irregular CSI sequences."""

from .adam import Adam
from .config import ModelConfig
from .network import (PaddedBatch, ReconTarget, attend, forward, forward_batch,
                      loss_and_grad, recon_loss_and_grad, reconstruct,
                      time_embed, time_embed_grad, value_embed)
from .params import (ModelParams, init_params, load_checkpoint, save_checkpoint,
                     validate_shapes)
from .train import (EpochStats, ReconSample, TrainConfig, evaluate,
                    linear_interp_baseline, split_for_reconstruction, train,
                    train_reconstruction)

__all__ = [
    "Adam", "ModelConfig", "ModelParams", "PaddedBatch", "ReconTarget",
    "ReconSample", "TrainConfig", "EpochStats", "attend", "forward",
    "forward_batch", "loss_and_grad", "recon_loss_and_grad", "reconstruct",
    "time_embed", "time_embed_grad", "value_embed", "init_params",
    "load_checkpoint", "save_checkpoint", "validate_shapes", "evaluate",
    "linear_interp_baseline", "split_for_reconstruction", "train",
    "train_reconstruction",
]
