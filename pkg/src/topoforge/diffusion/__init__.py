from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .conditioning import ConditionEmbedding
from .sampling import (
    ddim_step,
    denoise,
    guidance_loss,
    guidance_step,
    predict_eps,
    predict_z0,
)
from .schedule import (
    NoiseSchedule,
    make_schedule,
    noise,
    predict_eps_from_v,
    predict_z0_from_v,
    velocity_target,
)
from .train import TrainConfig, train
from .unet import Denoiser

__all__ = [
    "CheckpointError",
    "ConditionEmbedding",
    "Denoiser",
    "NoiseSchedule",
    "TrainConfig",
    "ddim_step",
    "denoise",
    "guidance_loss",
    "guidance_step",
    "load_checkpoint",
    "make_schedule",
    "noise",
    "predict_eps",
    "predict_eps_from_v",
    "predict_z0",
    "predict_z0_from_v",
    "save_checkpoint",
    "train",
    "velocity_target",
]
