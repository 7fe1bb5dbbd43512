from .codec import CODEC_KINDS, IdentityCodec, TinyAutoencoder, make_codec, train_codec
from .schedule import (
    NoiseSchedule,
    Transition,
    add_step_noise,
    ddpm_mean,
    ddpm_step,
    forward_diffuse,
    forward_diffuse_batch,
    make_schedule,
    sample_chain,
    spaced_steps,
    transition,
)
from .train import DiffusionBatch, LatentSource, batch_loss, train_denoiser
from .unet import ConditionedDenoiser, Conditioner, Denoiser, UNetConfig, timestep_embedding

__all__ = [
    "CODEC_KINDS",
    "ConditionedDenoiser",
    "Conditioner",
    "Denoiser",
    "DiffusionBatch",
    "IdentityCodec",
    "LatentSource",
    "NoiseSchedule",
    "TinyAutoencoder",
    "Transition",
    "UNetConfig",
    "add_step_noise",
    "batch_loss",
    "ddpm_mean",
    "ddpm_step",
    "forward_diffuse",
    "forward_diffuse_batch",
    "make_codec",
    "make_schedule",
    "sample_chain",
    "spaced_steps",
    "timestep_embedding",
    "train_codec",
    "train_denoiser",
    "transition",
]
