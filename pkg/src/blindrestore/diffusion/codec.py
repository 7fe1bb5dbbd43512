"""Latent codecs: the exact identity map and a tiny L2-trained autoencoder."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from ..numerics import functional as F
from ..numerics.functional import mse_loss
from ..numerics.nn import Conv2d, Module
from ..numerics.optim import Adam
from ..numerics.rng import SeededRng
from ..numerics.tensor import Tensor, backward, no_grad

CODEC_KINDS = ("identity", "tiny-ae")


class IdentityCodec:
    kind = "identity"
    factor = 1
    latent_range = (0.0, 1.0)  # latents are pixels

    def __init__(self, channels: int = 3):
        self.latent_channels = channels

    def encode(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float32).copy()

    def decode(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=np.float32).copy()


class TinyAutoencoder(Module):
    """Two stride-2 convs down (x4 spatial), mirrored nearest-upsampling decoder."""

    kind = "tiny-ae"
    factor = 4
    latent_range = None

    def __init__(self, latent_channels: int = 16, width: int = 32, image_channels: int = 3, seed: int = 0):
        rng = SeededRng.for_item(seed, "codec-init")
        self.latent_channels = latent_channels
        self.enc1 = Conv2d(image_channels, width, 3, rng, stride=2, padding=1)
        self.enc2 = Conv2d(width, width, 3, rng, stride=2, padding=1)
        self.enc_out = Conv2d(width, latent_channels, 3, rng)
        self.dec_in = Conv2d(latent_channels, width, 3, rng)
        self.dec1 = Conv2d(width, width, 3, rng)
        self.dec2 = Conv2d(width, width, 3, rng)
        self.dec_out = Conv2d(width, image_channels, 3, rng)

    def encode_t(self, x: Tensor) -> Tensor:
        h = F.silu(self.enc1(x))
        h = F.silu(self.enc2(h))
        return self.enc_out(h)

    def decode_t(self, z: Tensor) -> Tensor:
        h = F.silu(self.dec_in(z))
        h = F.silu(self.dec1(F.upsample_nearest(h, 2)))
        h = F.silu(self.dec2(F.upsample_nearest(h, 2)))
        return self.dec_out(h)

    def forward(self, x: Tensor) -> Tensor:
        return self.decode_t(self.encode_t(x))

    def encode(self, x: np.ndarray) -> np.ndarray:
        with no_grad():
            return self.encode_t(Tensor(x)).data

    def decode(self, z: np.ndarray) -> np.ndarray:
        with no_grad():
            return self.decode_t(Tensor(z)).data


def train_codec(ae: TinyAutoencoder, batch_images: np.ndarray, iterations: int, batch: int,
                seed: int, lr: float = 2e-3, losses: list[float] | None = None) -> list[float]:
    """Plain L2 reconstruction training on an [N, C, H, W] image array."""
    opt = Adam(ae.named_parameters(), lr=lr)
    losses = [] if losses is None else losses
    n = batch_images.shape[0]
    for it in range(iterations):
        rng = SeededRng.for_item(seed, "codec-batch", it)
        picks = rng.integers(0, n - 1, size=batch)
        x = batch_images[picks]
        loss = mse_loss(ae(Tensor(x)), x)
        val = loss.item()
        if not math.isfinite(val):
            raise RuntimeError(f"codec loss became non-finite at iteration {it}")
        backward(loss)
        opt.step()
        losses.append(val)
    return losses


def make_codec(kind: str, latent_channels: int = 16, seed: int = 0):
    if kind == "identity":
        return IdentityCodec()
    if kind == "tiny-ae":
        return TinyAutoencoder(latent_channels=latent_channels, seed=seed)
    raise ValueError(f"unknown codec kind {kind!r}; expected one of {CODEC_KINDS}")
