from .sampler import (
    GuidanceSettings,
    SampleResult,
    estimate_z0,
    guided_sample,
    latent_distance,
    latent_loss,
    unguided_sample,
)
from .sweep import SweepRow, check_scales, contact_sheet, sweep_scale, write_sweep

__all__ = [
    "GuidanceSettings",
    "SampleResult",
    "SweepRow",
    "check_scales",
    "contact_sheet",
    "estimate_z0",
    "guided_sample",
    "latent_distance",
    "latent_loss",
    "sweep_scale",
    "unguided_sample",
    "write_sweep",
]
