"""Small UNet noise predictor and its zero-initialized conditioning branch."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..numerics import functional as F
from ..numerics.nn import Conv2d, GroupNorm, Linear, Module, parameter
from ..numerics.rng import SeededRng
from ..numerics.tensor import ContractError, Tensor, add, as_tensor, concat, no_grad, reshape


@dataclass(frozen=True)
class UNetConfig:
    latent_channels: int = 3
    base_channels: int = 16
    mid_channels: int = 32
    temb_dim: int = 32
    prompt_dim: int = 16
    groups: int = 4

    def as_dict(self) -> dict:
        return asdict(self)


def timestep_embedding(ts, dim: int) -> np.ndarray:
    """Sinusoidal embedding of integer timesteps, [N, dim]."""
    ts = np.asarray(ts, dtype=np.float64).reshape(-1)
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    args = ts[:, None] * freqs[None, :]
    return np.concatenate([np.cos(args), np.sin(args)], axis=1).astype(np.float32)


class ResBlock(Module):
    def __init__(self, cin: int, cout: int, temb: int, groups: int, rng: SeededRng):
        self.norm1 = GroupNorm(min(groups, cin), cin)
        self.conv1 = Conv2d(cin, cout, 3, rng)
        self.temb = Linear(temb, cout, rng)
        self.norm2 = GroupNorm(min(groups, cout), cout)
        self.conv2 = Conv2d(cout, cout, 3, rng)
        self.skip = Conv2d(cin, cout, 1, rng) if cin != cout else None

    def forward(self, x: Tensor, emb: Tensor) -> Tensor:
        h = self.conv1(F.silu(self.norm1(x)))
        e = self.temb(F.silu(emb))
        h = add(h, reshape(e, (e.shape[0], e.shape[1], 1, 1)))
        h = self.conv2(F.silu(self.norm2(h)))
        return add(x if self.skip is None else self.skip(x), h)


class Embedding(Module):
    """Timestep MLP plus a projection of the (constant) prompt embedding."""

    def __init__(self, cfg: UNetConfig, rng: SeededRng):
        self.dim = cfg.base_channels
        self.fc1 = Linear(cfg.base_channels, cfg.temb_dim, rng)
        self.fc2 = Linear(cfg.temb_dim, cfg.temb_dim, rng)
        self.prompt_proj = Linear(cfg.prompt_dim, cfg.temb_dim, rng)

    def forward(self, ts, prompt: np.ndarray) -> Tensor:
        e = self.fc2(F.silu(self.fc1(Tensor(timestep_embedding(ts, self.dim)))))
        p = self.prompt_proj(Tensor(np.broadcast_to(prompt, (e.shape[0], prompt.shape[-1]))))
        return add(e, p)


class Encoder(Module):
    """conv_in -> res (full) -> down -> res (half) -> down -> middle (quarter)."""

    def __init__(self, cfg: UNetConfig, in_channels: int, rng: SeededRng):
        c0, c1 = cfg.base_channels, cfg.mid_channels
        self.conv_in = Conv2d(in_channels, c0, 3, rng)
        self.block0 = ResBlock(c0, c0, cfg.temb_dim, cfg.groups, rng)
        self.down0 = Conv2d(c0, c0, 3, rng, stride=2, padding=1)
        self.block1 = ResBlock(c0, c1, cfg.temb_dim, cfg.groups, rng)
        self.down1 = Conv2d(c1, c1, 3, rng, stride=2, padding=1)
        self.middle = ResBlock(c1, c1, cfg.temb_dim, cfg.groups, rng)

    def forward(self, x: Tensor, emb: Tensor) -> list[Tensor]:
        h0 = self.block0(self.conv_in(x), emb)
        h1 = self.block1(self.down0(h0), emb)
        m = self.middle(self.down1(h1), emb)
        return [h0, h1, m]


class Decoder(Module):
    def __init__(self, cfg: UNetConfig, rng: SeededRng):
        c0, c1 = cfg.base_channels, cfg.mid_channels
        self.block1 = ResBlock(c1 + c1, c1, cfg.temb_dim, cfg.groups, rng)
        self.block0 = ResBlock(c1 + c0, c0, cfg.temb_dim, cfg.groups, rng)
        self.norm_out = GroupNorm(min(cfg.groups, c0), c0)
        self.conv_out = Conv2d(c0, cfg.latent_channels, 3, rng)

    def forward(self, feats: list[Tensor], emb: Tensor) -> Tensor:
        h0, h1, m = feats
        x = self.block1(concat([F.upsample_nearest(m, 2), h1], axis=1), emb)
        x = self.block0(concat([F.upsample_nearest(x, 2), h0], axis=1), emb)
        return self.conv_out(F.silu(self.norm_out(x)))


class Denoiser(Module):
    """Predicts the noise in ``z_t``; the prompt pathway is a fixed zero vector."""

    def __init__(self, cfg: UNetConfig | None = None, seed: int = 0):
        self.cfg = cfg or UNetConfig()
        rng = SeededRng.for_item(seed, "denoiser-init")
        self.embed = Embedding(self.cfg, rng)
        self.encoder = Encoder(self.cfg, self.cfg.latent_channels, rng)
        self.decoder = Decoder(self.cfg, rng)
        self.prompt = np.zeros(self.cfg.prompt_dim, dtype=np.float32)

    def check_latent(self, z_shape) -> None:
        if len(z_shape) != 4 or z_shape[1] != self.cfg.latent_channels:
            raise ContractError(f"latent must be [N,{self.cfg.latent_channels},H,W], got {z_shape}")
        if z_shape[2] % 4 or z_shape[3] % 4:
            raise ContractError(f"latent spatial size {z_shape[2:]} must be divisible by 4")

    def forward(self, z_t, ts, residuals: list[Tensor] | None = None) -> Tensor:
        z_t = as_tensor(z_t)
        self.check_latent(z_t.shape)
        emb = self.embed(ts, self.prompt)
        feats = self.encoder(z_t, emb)
        if residuals is not None:
            feats = [add(f, r) for f, r in zip(feats, residuals)]
        return self.decoder(feats, emb)


class Conditioner(Module):
    """Parallel copy of the denoiser's encoder and middle block.

    The first conv is widened to take ``concat(z_t, cond)``; the added input
    channels start at zero.  Each scale's output goes through a bias-free 1x1
    conv, also zero-initialized, before being added to the base features.
    """

    def __init__(self, base: Denoiser, cond_channels: int, seed: int = 0):
        cfg = base.cfg
        if cond_channels < 1:
            raise ContractError("conditioner needs at least one condition channel")
        rng = SeededRng.for_item(seed, "conditioner-init")
        self.latent_channels = cfg.latent_channels
        self.cond_channels = cond_channels
        self.embed = Embedding(cfg, rng)
        self.embed.load_state_dict(base.embed.state_dict())
        self.encoder = Encoder(cfg, cfg.latent_channels + cond_channels, rng)
        state = base.encoder.state_dict()
        w = state["conv_in.weight"]
        if w.shape[1] != cfg.latent_channels:
            raise ContractError(
                f"base conv_in takes {w.shape[1]} channels, expected {cfg.latent_channels}"
            )
        wide = np.zeros((w.shape[0], cfg.latent_channels + cond_channels) + w.shape[2:], np.float32)
        wide[:, : cfg.latent_channels] = w
        state["conv_in.weight"] = wide
        self.encoder.load_state_dict(state)
        if self.encoder.conv_in.weight.shape[1] != self.latent_channels + self.cond_channels:
            raise ContractError("conditioner input width must equal latent + condition channels")
        widths = (cfg.base_channels, cfg.mid_channels, cfg.mid_channels)
        self.zero_convs = [Conv2d(c, c, 1, rng, bias=False) for c in widths]
        for zc in self.zero_convs:
            zc.weight.data[...] = 0.0
        self.prompt = base.prompt

    def forward(self, z_t, ts, cond) -> list[Tensor]:
        z_t, cond = as_tensor(z_t), as_tensor(cond)
        if cond.shape[1] != self.cond_channels or cond.shape[2:] != z_t.shape[2:]:
            raise ContractError(
                f"condition shape {cond.shape} incompatible with latent {z_t.shape}"
                f" and {self.cond_channels} condition channels"
            )
        emb = self.embed(ts, self.prompt)
        feats = self.encoder(concat([z_t, cond], axis=1), emb)
        return [zc(f) for zc, f in zip(self.zero_convs, feats)]


class ConditionedDenoiser:
    """Base denoiser with conditioner residuals added to its decoder inputs."""

    def __init__(self, base: Denoiser, conditioner: Conditioner | None):
        self.base = base
        self.conditioner = conditioner

    def __call__(self, z_t, ts, cond=None) -> Tensor:
        if self.conditioner is None or cond is None:
            return self.base(z_t, ts)
        return self.base(z_t, ts, self.conditioner(z_t, ts, cond))

    def predict_eps(self, z_t: np.ndarray, t, cond: np.ndarray | None = None) -> np.ndarray:
        ts = np.full(z_t.shape[0], t) if np.ndim(t) == 0 else np.asarray(t)
        with no_grad():
            return self(Tensor(z_t), ts, None if cond is None else Tensor(cond)).data
