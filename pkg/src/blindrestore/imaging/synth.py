"""Procedural training images spanning low to high spatial frequencies."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numerics.rng import SeededRng
from ..numerics.tensor import ContractError

GENERATORS = ("gradients", "checker", "gaussian-blobs", "fractal-noise", "mixed")


@dataclass(frozen=True)
class DatasetSpec:
    count: int = 64
    size: int = 32
    generator: str = "mixed"
    seed: int = 0

    def __post_init__(self):
        if self.count < 1:
            raise ContractError(f"dataset count must be >= 1, got {self.count}")
        if self.size < 8 or self.size % 8:
            raise ContractError(f"dataset size must be a positive multiple of 8, got {self.size}")
        if self.generator not in GENERATORS:
            raise ContractError(f"unknown generator {self.generator!r}; expected one of {GENERATORS}")


def _grid(size: int):
    c = (np.arange(size) + 0.5) / size
    return np.meshgrid(c, c, indexing="ij")


def gradients(rng: SeededRng, size: int) -> np.ndarray:
    yy, xx = _grid(size)
    ang = rng.uniform(0.0, 2 * np.pi)
    t = np.cos(ang) * (xx - 0.5) + np.sin(ang) * (yy - 0.5)
    t = (t - t.min()) / (t.max() - t.min())
    c0, c1 = rng.uniform(0, 1, 3), rng.uniform(0, 1, 3)
    return c0 + t[..., None] * (c1 - c0)


def checker(rng: SeededRng, size: int) -> np.ndarray:
    cell = int(rng.choice((2, 4, 8)))
    a = int(rng.integers(0, 255))
    b = int(rng.integers(0, 254))
    b = b + 1 if b >= a else b  # distinct levels
    i = np.arange(size) // cell
    mask = (i[:, None] + i[None, :]) % 2 == 0
    img = np.where(mask, a / 255.0, b / 255.0)
    return np.repeat(img[..., None], 3, axis=2)


def gaussian_blobs(rng: SeededRng, size: int) -> np.ndarray:
    yy, xx = _grid(size)
    img = np.broadcast_to(rng.uniform(0, 1, 3), (size, size, 3)).copy()
    for _ in range(int(rng.integers(3, 7))):
        cy, cx = rng.uniform(0, 1), rng.uniform(0, 1)
        s = rng.uniform(0.05, 0.25)
        w = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * s * s))[..., None]
        img = img * (1 - w) + w * rng.uniform(0, 1, 3)
    return img


def _lerp_matrix(n_out: int, n_in: int) -> np.ndarray:
    pos = (np.arange(n_out) + 0.5) * n_in / n_out - 0.5
    pos = np.clip(pos, 0, n_in - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = pos - lo
    m = np.zeros((n_out, n_in))
    m[np.arange(n_out), lo] += 1 - frac
    m[np.arange(n_out), hi] += frac
    return m


def fractal_noise(rng: SeededRng, size: int) -> np.ndarray:
    img = np.zeros((size, size, 3))
    g, amp = 2, 1.0
    while g <= size:
        m = _lerp_matrix(size, g)
        base = rng.normal((g, g), dtype=np.float64)
        tint = rng.normal((g, g, 3), dtype=np.float64) * 0.35
        layer = base[..., None] + tint
        img += amp * np.einsum("ij,jkc,lk->ilc", m, layer, m)
        g *= 2
        amp *= 0.7
    lo, hi = img.min(), img.max()
    return (img - lo) / (hi - lo)


_FUNCS = {
    "gradients": gradients,
    "checker": checker,
    "gaussian-blobs": gaussian_blobs,
    "fractal-noise": fractal_noise,
}


def synth_image(generator: str, seed: int, index: int, size: int) -> np.ndarray:
    rng = SeededRng.for_item(seed, "synth", index)
    if generator == "mixed":
        generator = rng.choice(("gradients", "checker", "gaussian-blobs", "fractal-noise"))
    img = _FUNCS[generator](rng, size)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def synth_dataset(spec: DatasetSpec) -> list[np.ndarray]:
    return [synth_image(spec.generator, spec.seed, i, spec.size) for i in range(spec.count)]
