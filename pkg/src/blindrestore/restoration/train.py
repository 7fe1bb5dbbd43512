"""Stage-one regression training on synthesized (LQ, HQ) pairs."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..degradation.plan import DegradationPlan, degrade, plan_for_item
from ..imaging.io import as_image
from ..numerics.functional import mse_loss
from ..numerics.optim import Adam
from ..numerics.rng import SeededRng
from ..numerics.tensor import Tensor, backward, no_grad
from .swinir import RestorationNet


class TrainingError(RuntimeError):
    def __init__(self, iteration: int, loss: float):
        super().__init__(f"loss became non-finite ({loss}) at iteration {iteration}")
        self.iteration = iteration
        self.loss = loss


def to_batch(images: Sequence[np.ndarray]) -> np.ndarray:
    """List of HxWxC images -> float32 [N, C, H, W]."""
    return np.ascontiguousarray(np.stack([as_image(im) for im in images]).transpose(0, 3, 1, 2))


def from_batch(batch: np.ndarray) -> list[np.ndarray]:
    return [np.ascontiguousarray(b.transpose(1, 2, 0)) for b in np.asarray(batch)]


def _pad_to_multiple(img: np.ndarray, m: int) -> np.ndarray:
    h, w = img.shape[:2]
    ph, pw = -h % m, -w % m
    if not (ph or pw):
        return img
    return np.pad(img, ((0, ph), (0, pw), (0, 0)), mode="reflect" if min(h, w) > 1 else "edge")


def restore_image(net: RestorationNet, lq) -> np.ndarray:
    """Run the network on one image of any size; output clamped to [0, 1]."""
    img = as_image(lq)
    h, w = img.shape[:2]
    padded = _pad_to_multiple(img, net.cfg.size_multiple)
    with no_grad():
        out = net(Tensor(to_batch([padded]))).data
    return np.clip(from_batch(out)[0][:h, :w], 0.0, 1.0).astype(np.float32)


def restore_batch(net: RestorationNet, batch: np.ndarray) -> np.ndarray:
    with no_grad():
        return np.clip(net(Tensor(batch)).data, 0.0, 1.0)


@dataclass
class PairSource:
    """Deterministic on-the-fly (LQ, HQ) batches for a given seed."""

    images: Sequence[np.ndarray]
    seed: int
    batch: int
    wide_range: bool = False
    jobs: int = 1
    plan_hook: Callable[[int, np.ndarray], DegradationPlan] | None = None

    def batch_at(self, iteration: int) -> tuple[np.ndarray, np.ndarray]:
        rng = SeededRng.for_item(self.seed, "batch", iteration)
        picks = [int(rng.integers(0, len(self.images) - 1)) for _ in range(self.batch)]
        keys = [iteration * self.batch + j for j in range(self.batch)]

        def make(args):
            key, pick = args
            hq = self.images[pick]
            if self.plan_hook is not None:
                plan = self.plan_hook(key, hq)
            else:
                plan = plan_for_item(self.seed, key, self.wide_range, hq.shape[:2])
            return degrade(hq, plan)

        work = list(zip(keys, picks))
        if self.jobs > 1:
            with ThreadPoolExecutor(self.jobs) as ex:
                lqs = list(ex.map(make, work))
        else:
            lqs = [make(w) for w in work]
        return to_batch(lqs), to_batch([self.images[p] for p in picks])


def cosine_lr(base: float, total: int) -> Callable[[int], float]:
    """Half-cosine decay from ``base`` at iteration 0 toward 0 at ``total``."""
    return lambda it: base * 0.5 * (1.0 + math.cos(math.pi * it / max(total, 1)))


@dataclass
class TrainState:
    iteration: int = 0
    losses: list[float] = field(default_factory=list)


def train_restoration(
    net: RestorationNet,
    source: PairSource,
    iterations: int,
    lr: float = 1e-4,
    optimizer: Adam | None = None,
    state: TrainState | None = None,
    on_step: Callable[[int, float], None] | None = None,
    lr_at: Callable[[int], float] | None = None,
) -> tuple[TrainState, Adam]:
    """Minimize the pixel MSE between ``net(LQ)`` and HQ.

    Continues from ``state.iteration`` when resuming; runs until
    ``iterations`` total steps have been taken.  ``lr_at`` maps an
    iteration to its learning rate when a schedule is wanted.
    """
    if not len(source.images):
        raise ValueError("training dataset is empty")
    opt = optimizer or Adam(net.named_parameters(), lr=lr)
    state = state or TrainState()
    while state.iteration < iterations:
        if lr_at is not None:
            opt.set_lr(lr_at(state.iteration))
        lq, hq = source.batch_at(state.iteration)
        loss = mse_loss(net(Tensor(lq)), hq)
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
