"""Latent-guided reverse diffusion.

At every retained step the clean latent is estimated from the predicted
noise, its squared distance to the reference latent ``E(I_reg)`` is
differentiated with respect to that estimate, and the ancestral mean is
shifted by ``-s`` times that gradient before noise is added.

Codecs with a bounded latent range (the identity codec: pixels in [0, 1])
get the estimate clamped to that range, and the mean is then formed from the
clamped estimate.  Unbounded latents use the plain noise-form mean.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..diffusion.schedule import (
    NoiseSchedule,
    clean_estimate,
    ddpm_mean,
    sample_chain,
    spaced_steps,
    transition,
    x0_mean,
)
from ..diffusion.unet import ConditionedDenoiser
from ..numerics.rng import SeededRng
from ..numerics.tensor import DTYPE, ContractError
from ..restoration.train import from_batch, to_batch


@dataclass(frozen=True)
class GuidanceSettings:
    scale_s: float = 0.0
    steps: int = 50
    chain_through_zt: bool = False

    def __post_init__(self):
        if not np.isfinite(self.scale_s) or self.scale_s < 0:
            raise ContractError(f"gradient scale must be finite and >= 0, got {self.scale_s}")
        if self.steps < 1:
            raise ContractError("steps must be >= 1")


def estimate_z0(z_t: np.ndarray, t: int, predicted_eps: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    schedule.check_t(t)
    return clean_estimate(z_t, predicted_eps, schedule.alpha_bar(t))


def latent_distance(z0_est: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Per-sample squared L2 distance divided by C*H*W."""
    z0_est, reference = _pair(z0_est, reference)
    diff = z0_est.astype(np.float64) - reference.astype(np.float64)
    if diff.ndim < 2:
        return np.array([np.mean(diff * diff)])
    return np.mean(diff.reshape(diff.shape[0], -1) ** 2, axis=1)


def latent_loss(z0_est: np.ndarray, reference: np.ndarray) -> tuple[float, np.ndarray]:
    """Summed per-sample latent distance and its gradient w.r.t. ``z0_est``."""
    z0_est, reference = _pair(z0_est, reference)
    per = latent_distance(z0_est, reference)
    n_elem = z0_est[0].size if z0_est.ndim >= 2 else z0_est.size
    grad = 2.0 * (z0_est.astype(np.float64) - reference.astype(np.float64)) / n_elem
    return float(per.sum()), grad


def _pair(a, b):
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ContractError(f"latent shapes differ: {a.shape} vs {b.shape}")
    return a, b


@dataclass
class SampleResult:
    images: list[np.ndarray]
    z0: np.ndarray
    z0_estimate: np.ndarray
    d_latent: np.ndarray
    steps: list[int]
    shift_alignment: list[np.ndarray] = field(default_factory=list)
    d_latent_trace: list[np.ndarray] = field(default_factory=list)


def _step_noise(rngs: list[SeededRng], shape) -> np.ndarray:
    return np.stack([r.normal(shape[1:], dtype=np.float64) for r in rngs])


def guided_sample(
    model: ConditionedDenoiser,
    codec,
    i_reg,
    settings: GuidanceSettings,
    schedule: NoiseSchedule,
    seeds,
    use_condition: bool = True,
) -> SampleResult:
    """Run one guided chain per seed; ``i_reg`` is one image or a list (one per seed)."""
    seeds = [int(seeds)] if np.ndim(seeds) == 0 else [int(s) for s in seeds]
    imgs = [i_reg] * len(seeds) if isinstance(i_reg, np.ndarray) and i_reg.ndim == 3 else list(i_reg)
    if len(imgs) != len(seeds):
        raise ContractError("need one I_reg image per seed")
    ref = codec.encode(to_batch(imgs))
    cond = ref if use_condition else None
    rngs = [SeededRng.for_item(s, "sample") for s in seeds]
    z = _step_noise(rngs, ref.shape).astype(DTYPE)
    steps = spaced_steps(schedule.T, settings.steps)
    chain = steps + [0]
    s = float(settings.scale_s)
    result = SampleResult([], z, z, np.zeros(len(seeds)), steps)
    z0_est = z
    clip = getattr(codec, "latent_range", None)
    for t, t_prev in zip(chain[:-1], chain[1:]):
        tr = transition(schedule, t, t_prev)
        eps = model.predict_eps(z, t, cond)
        z0_est = estimate_z0(z, t, eps, schedule)
        if clip is not None:
            z0_est = np.clip(z0_est, *clip)
        _, grad = latent_loss(z0_est, ref)
        if settings.chain_through_zt:
            grad = grad / np.sqrt(tr.alpha_bar)
        shift = (-s * grad).astype(DTYPE)
        result.shift_alignment.append(
            np.sum((shift.astype(np.float64) * (ref - z0_est)).reshape(len(seeds), -1), axis=1)
        )
        result.d_latent_trace.append(latent_distance(z0_est, ref))
        base = ddpm_mean(z, eps, tr) if clip is None else x0_mean(z, z0_est, tr)
        mean = base + shift
        if t_prev > 0:
            z = (mean + np.sqrt(tr.variance) * _step_noise(rngs, mean.shape)).astype(DTYPE)
        else:
            z = mean
    result.z0 = z
    result.z0_estimate = z0_est
    result.d_latent = latent_distance(z0_est, ref)
    result.images = [np.clip(im, 0.0, 1.0).astype(np.float32) for im in from_batch(codec.decode(z))]
    return result


def unguided_sample(model: ConditionedDenoiser, codec, i_reg, steps: int, schedule: NoiseSchedule,
                    seed: int, use_condition: bool = True) -> np.ndarray:
    """Plain conditioned ancestral sampling of one chain; returns the final latent."""
    ref = codec.encode(to_batch([i_reg]))
    cond = ref if use_condition else None
    rng = SeededRng.for_item(seed, "sample")
    z_T = rng.normal(ref.shape[1:], dtype=np.float64).astype(DTYPE)[None]
    return sample_chain(
        lambda z, t: model.predict_eps(z, t, cond),
        ref.shape,
        schedule,
        spaced_steps(schedule.T, steps),
        rng,
        z_T=z_T,
        clip=getattr(codec, "latent_range", None),
    )
