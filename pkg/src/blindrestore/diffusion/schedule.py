"""Noise schedule, forward process, spaced retiming and the ancestral step.

Timesteps are 1-based: ``t`` runs over ``1..T`` and ``alpha_bar(0) == 1``.
Coefficients are evaluated in float64; latents stay float32.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..numerics.rng import SeededRng
from ..numerics.tensor import DTYPE, ContractError

EpsFn = Callable[[np.ndarray, int], np.ndarray]


@dataclass(frozen=True)
class NoiseSchedule:
    T: int
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray
    posterior_variances: np.ndarray

    def alpha_bar(self, t: int) -> float:
        return 1.0 if t == 0 else float(self.alpha_bars[t - 1])

    def check_t(self, t: int) -> None:
        if not 1 <= t <= self.T:
            raise ContractError(f"timestep {t} outside 1..{self.T}")


def make_schedule(T: int = 1000, beta_start: float = 1e-4, beta_end: float = 0.02,
                  law: str = "linear") -> NoiseSchedule:
    if law != "linear":
        raise ContractError(f"unsupported beta schedule {law!r}")
    if T < 1 or not (0 < beta_start <= beta_end < 1):
        raise ContractError(f"invalid schedule: T={T}, beta in [{beta_start}, {beta_end}]")
    betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    prev = np.concatenate([[1.0], alpha_bars[:-1]])
    post = (1.0 - prev) / (1.0 - alpha_bars) * betas
    return NoiseSchedule(T, betas, alphas, alpha_bars, post)


def forward_diffuse(z: np.ndarray, t: int, eps: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    """``sqrt(ab_t) * z + sqrt(1 - ab_t) * eps``."""
    schedule.check_t(t)
    z = np.asarray(z)
    eps = np.asarray(eps)
    if z.shape != eps.shape:
        raise ContractError(f"noise shape {eps.shape} does not match latent {z.shape}")
    ab = schedule.alpha_bar(t)
    return (np.sqrt(ab) * z.astype(np.float64) + np.sqrt(1.0 - ab) * eps.astype(np.float64)).astype(DTYPE)


def forward_diffuse_batch(z: np.ndarray, ts: np.ndarray, eps: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    """Per-sample timesteps ``ts`` (shape [N]) for a batch of latents."""
    ab = schedule.alpha_bars[np.asarray(ts) - 1].reshape(-1, *([1] * (z.ndim - 1)))
    return (np.sqrt(ab) * z + np.sqrt(1.0 - ab) * eps).astype(DTYPE)


def spaced_steps(T: int, n: int) -> list[int]:
    """``n`` evenly spaced timesteps from ``T`` down to 1 (descending)."""
    if not 1 <= n <= T:
        raise ContractError(f"cannot space {n} steps over T={T}")
    if n == 1:
        return [T]
    pos = [int(np.floor(1 + i * (T - 1) / (n - 1) + 0.5)) for i in range(n - 1, -1, -1)]
    out: list[int] = []
    for p in pos:
        if not out or out[-1] != p:
            out.append(p)
    return out


@dataclass(frozen=True)
class Transition:
    """Retimed coefficients for one reverse step ``t -> t_prev``."""

    t: int
    t_prev: int
    alpha_bar: float
    alpha_bar_prev: float

    @property
    def beta(self) -> float:
        return 1.0 - self.alpha_bar / self.alpha_bar_prev

    @property
    def variance(self) -> float:
        return (1.0 - self.alpha_bar_prev) / (1.0 - self.alpha_bar) * self.beta


def transition(schedule: NoiseSchedule, t: int, t_prev: int) -> Transition:
    schedule.check_t(t)
    if not 0 <= t_prev < t:
        raise ContractError(f"need t > t_prev >= 0, got t={t}, t_prev={t_prev}")
    return Transition(t, t_prev, schedule.alpha_bar(t), schedule.alpha_bar(t_prev))


def ddpm_mean(z_t: np.ndarray, eps: np.ndarray, tr: Transition) -> np.ndarray:
    beta = tr.beta
    coef = beta / np.sqrt(1.0 - tr.alpha_bar)
    return ((z_t.astype(np.float64) - coef * eps) / np.sqrt(1.0 - beta)).astype(DTYPE)


def clean_estimate(z_t: np.ndarray, eps: np.ndarray, alpha_bar: float) -> np.ndarray:
    """Clean latent implied by a noise prediction at cumulative signal ``alpha_bar``."""
    z0 = (z_t.astype(np.float64) - np.sqrt(1.0 - alpha_bar) * eps.astype(np.float64)) / np.sqrt(alpha_bar)
    return z0.astype(DTYPE)


def x0_mean(z_t: np.ndarray, z0: np.ndarray, tr: Transition) -> np.ndarray:
    """Posterior mean of ``q(z_prev | z_t, z0)`` written in terms of the clean latent."""
    denom = 1.0 - tr.alpha_bar
    c0 = np.sqrt(tr.alpha_bar_prev) * tr.beta / denom
    ct = np.sqrt(1.0 - tr.beta) * (1.0 - tr.alpha_bar_prev) / denom
    return (c0 * z0.astype(np.float64) + ct * z_t.astype(np.float64)).astype(DTYPE)


def add_step_noise(mean: np.ndarray, tr: Transition, rng: SeededRng) -> np.ndarray:
    if tr.t_prev == 0:
        return mean
    noise = rng.normal(mean.shape, dtype=np.float64)
    return (mean + np.sqrt(tr.variance) * noise).astype(DTYPE)


def ddpm_step(eps_fn: EpsFn, z_t: np.ndarray, t: int, t_prev: int, schedule: NoiseSchedule,
              rng: SeededRng, clip: tuple[float, float] | None = None) -> np.ndarray:
    """Ancestral step ``t -> t_prev``; no noise is added when ``t_prev == 0``.

    With ``clip`` the clean-latent estimate is clamped to that range before
    the posterior mean is formed.
    """
    tr = transition(schedule, t, t_prev)
    eps = np.asarray(eps_fn(z_t, t))
    if clip is None:
        mean = ddpm_mean(z_t, eps, tr)
    else:
        mean = x0_mean(z_t, np.clip(clean_estimate(z_t, eps, tr.alpha_bar), *clip), tr)
    return add_step_noise(mean, tr, rng)


def sample_chain(eps_fn: EpsFn, shape, schedule: NoiseSchedule, steps: list[int], rng: SeededRng,
                 z_T: np.ndarray | None = None, clip: tuple[float, float] | None = None) -> np.ndarray:
    """Unguided reverse chain over ``steps`` (descending), ending at t = 0."""
    z = rng.normal(shape) if z_T is None else np.asarray(z_T, dtype=DTYPE)
    chain = list(steps) + [0]
    for t, t_prev in zip(chain[:-1], chain[1:]):
        z = ddpm_step(eps_fn, z, t, t_prev, schedule, rng, clip)
    return z
