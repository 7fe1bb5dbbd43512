"""Noise-prediction training: base pretraining and conditioned finetuning."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..degradation.plan import degrade, plan_for_item
from ..numerics.functional import mse_loss
from ..numerics.optim import Adam
from ..numerics.rng import SeededRng
from ..numerics.tensor import Tensor, backward
from ..restoration.swinir import RestorationNet
from ..restoration.train import TrainingError, TrainState, restore_batch, to_batch
from .schedule import NoiseSchedule, forward_diffuse_batch
from .unet import ConditionedDenoiser, Conditioner, Denoiser

MODES = ("pretrain", "finetune")


@dataclass
class DiffusionBatch:
    z_t: np.ndarray
    ts: np.ndarray
    eps: np.ndarray
    cond: np.ndarray | None = None


@dataclass
class LatentSource:
    """Deterministic batches of (z_t, t, eps[, E(I_reg)]) for a given seed.

    Picks, timesteps and noise come from one stream and the degradations from
    another, so a pretraining batch and a finetuning batch at the same
    iteration share ``z_t``, ``t`` and ``eps``.
    """

    images: np.ndarray  # [N, C, H, W] HQ in [0, 1]
    seed: int
    batch: int
    schedule: NoiseSchedule
    codec: object
    restorer: RestorationNet | None = None
    wide_range: bool = False
    jobs: int = 1
    _latents: np.ndarray | None = field(default=None, repr=False)

    def latents(self) -> np.ndarray:
        if self._latents is None:
            self._latents = self.codec.encode(self.images)
        return self._latents

    def batch_at(self, iteration: int, conditioned: bool = False) -> DiffusionBatch:
        rng = SeededRng.for_item(self.seed, "diffuse-batch", iteration)
        n = self.images.shape[0]
        picks = rng.integers(0, n - 1, size=self.batch)
        ts = rng.integers(1, self.schedule.T, size=self.batch)
        z = self.latents()[picks]
        eps = rng.normal(z.shape)
        z_t = forward_diffuse_batch(z, ts, eps, self.schedule)
        cond = None
        if conditioned:
            if self.restorer is None:
                raise ValueError("conditioned batches need a restoration network")
            cond = self.codec.encode(restore_batch(self.restorer, self._degraded(iteration, picks)))
        return DiffusionBatch(z_t, ts, eps, cond)

    def _degraded(self, iteration: int, picks) -> np.ndarray:
        hq = [self.images[p].transpose(1, 2, 0) for p in picks]
        keys = [iteration * self.batch + j for j in range(len(picks))]

        def make(args):
            key, img = args
            plan = plan_for_item(self.seed ^ 0x5F3759DF, key, self.wide_range, img.shape[:2])
            return degrade(img, plan)

        if self.jobs > 1:
            with ThreadPoolExecutor(self.jobs) as ex:
                lqs = list(ex.map(make, zip(keys, hq)))
        else:
            lqs = [make(a) for a in zip(keys, hq)]
        return to_batch(lqs)


def batch_loss(model: ConditionedDenoiser, b: DiffusionBatch) -> Tensor:
    pred = model(Tensor(b.z_t), b.ts, None if b.cond is None else Tensor(b.cond))
    return mse_loss(pred, b.eps)


def train_denoiser(
    denoiser: Denoiser,
    conditioner: Conditioner | None,
    source: LatentSource,
    iterations: int,
    mode: str = "pretrain",
    lr: float = 1e-4,
    optimizer: Adam | None = None,
    state: TrainState | None = None,
    on_step: Callable[[int, float], None] | None = None,
) -> tuple[TrainState, Adam]:
    """``pretrain`` fits the denoiser alone on clean latents; ``finetune``
    freezes it and fits only the conditioner against ``E(I_reg)``."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if source.images.shape[0] == 0:
        raise ValueError("training dataset is empty")
    if mode == "pretrain":
        denoiser.requires_grad_(True)
        model = ConditionedDenoiser(denoiser, None)
        trainable = denoiser
    else:
        if conditioner is None:
            raise ValueError("finetune mode needs a conditioner")
        denoiser.requires_grad_(False)
        model = ConditionedDenoiser(denoiser, conditioner)
        trainable = conditioner
    opt = optimizer or Adam(trainable.named_parameters(), lr=lr)
    state = state or TrainState()
    while state.iteration < iterations:
        b = source.batch_at(state.iteration, conditioned=mode == "finetune")
        loss = batch_loss(model, b)
        val = loss.item()
        if not math.isfinite(val):
            raise TrainingError(state.iteration, val)
        backward(loss)
        opt.step()
        state.losses.append(val)
        if on_step is not None:
            on_step(state.iteration, val)
        state.iteration += 1
    return state, opt
