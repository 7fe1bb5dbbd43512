"""Window-attention restoration network operating at 1/f resolution.

Layout: pixel-unshuffle by ``f`` -> 3x3 shallow conv -> residual Swin
transformer blocks -> norm + 3x3 conv, added to the shallow features ->
``log2(f)`` stages of (nearest x2, 3x3 conv, LeakyReLU) -> 3x3 output conv.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..numerics import functional as F
from ..numerics.nn import Conv2d, LayerNorm, Linear, Module, parameter
from ..numerics.rng import SeededRng
from ..numerics.tensor import ContractError, Tensor, add, as_tensor, matmul, mul, reshape, roll, take_rows, transpose


@dataclass(frozen=True)
class RestorationConfig:
    unshuffle_factor: int = 4
    rstb_count: int = 2
    stl_per_rstb: int = 2
    heads: int = 2
    window: int = 4
    embed_dim: int = 32
    mlp_ratio: float = 2.0
    in_channels: int = 3

    def __post_init__(self):
        f = self.unshuffle_factor
        if f < 1 or f & (f - 1):
            raise ContractError(f"unshuffle_factor must be a power of two, got {f}")
        if self.embed_dim % self.heads:
            raise ContractError("embed_dim must be divisible by heads")

    @classmethod
    def full_scale(cls) -> "RestorationConfig":
        return cls(unshuffle_factor=8, rstb_count=8, stl_per_rstb=6, heads=6, window=8, embed_dim=180)

    def as_dict(self) -> dict:
        return asdict(self)

    def check_size(self, h: int, w: int) -> None:
        f = self.unshuffle_factor
        if h % f or w % f:
            raise ContractError(f"input {h}x{w} not divisible by unshuffle factor {f}")
        if (h // f) % self.window or (w // f) % self.window:
            raise ContractError(
                f"downsampled size {h // f}x{w // f} not divisible by window {self.window}"
            )

    @property
    def size_multiple(self) -> int:
        return self.unshuffle_factor * self.window


def relative_position_index(window: int) -> np.ndarray:
    """[w*w, w*w] indices into the (2w-1)^2 bias table."""
    coords = np.stack(np.meshgrid(np.arange(window), np.arange(window), indexing="ij")).reshape(2, -1)
    rel = coords[:, :, None] - coords[:, None, :] + (window - 1)
    return rel[0] * (2 * window - 1) + rel[1]


def shifted_window_mask(h: int, w: int, window: int, shift: int) -> np.ndarray:
    """Additive mask [nW, w*w, w*w] blocking attention across wrapped regions."""
    img = np.zeros((h, w))
    cnt = 0
    for hs in (slice(0, -window), slice(-window, -shift), slice(-shift, None)):
        for ws in (slice(0, -window), slice(-window, -shift), slice(-shift, None)):
            img[hs, ws] = cnt
            cnt += 1
    wins = img.reshape(h // window, window, w // window, window).transpose(0, 2, 1, 3)
    wins = wins.reshape(-1, window * window)
    diff = wins[:, None, :] - wins[:, :, None]
    return np.where(diff != 0, -100.0, 0.0).astype(np.float32)


def window_partition(x: Tensor, window: int) -> Tensor:
    """[B, H, W, C] -> [B*nW, w*w, C]."""
    b, h, w, c = x.shape
    t = reshape(x, (b, h // window, window, w // window, window, c))
    t = transpose(t, (0, 1, 3, 2, 4, 5))
    return reshape(t, (-1, window * window, c))


def window_reverse(wins: Tensor, window: int, h: int, w: int) -> Tensor:
    c = wins.shape[-1]
    b = wins.shape[0] // ((h // window) * (w // window))
    t = reshape(wins, (b, h // window, w // window, window, window, c))
    t = transpose(t, (0, 1, 3, 2, 4, 5))
    return reshape(t, (b, h, w, c))


class WindowAttention(Module):
    def __init__(self, dim: int, window: int, heads: int, rng: SeededRng):
        self.dim, self.window, self.heads = dim, window, heads
        self.scale = (dim // heads) ** -0.5
        self.qkv = Linear(dim, 3 * dim, rng)
        self.proj = Linear(dim, dim, rng)
        self.bias_table = parameter(rng.normal(((2 * window - 1) ** 2, heads)) * 0.02)
        self.rel_index = relative_position_index(window)
        self.last_attn: np.ndarray | None = None

    def forward(self, x: Tensor, mask: np.ndarray | None = None) -> Tensor:
        bw_, n, c = x.shape
        hd = c // self.heads
        qkv = reshape(self.qkv(x), (bw_, n, 3, self.heads, hd))
        qkv = transpose(qkv, (2, 0, 3, 1, 4))
        q, k, v = qkv[0], qkv[1], qkv[2]
        attn = matmul(mul(q, self.scale), transpose(k, (0, 1, 3, 2)))
        bias = reshape(take_rows(self.bias_table, self.rel_index.reshape(-1)), (n, n, self.heads))
        attn = add(attn, transpose(bias, (2, 0, 1)))
        if mask is not None:
            nw = mask.shape[0]
            attn = reshape(attn, (bw_ // nw, nw, self.heads, n, n))
            attn = add(attn, mask[None, :, None])
            attn = reshape(attn, (bw_, self.heads, n, n))
        attn = F.softmax(attn, axis=-1)
        self.last_attn = attn.data
        out = transpose(matmul(attn, v), (0, 2, 1, 3))
        return self.proj(reshape(out, (bw_, n, c)))


def window_attention(features: Tensor, attn: WindowAttention, shift: bool) -> Tensor:
    """Windowed self-attention over [B, H, W, C] features; same shape out."""
    features = as_tensor(features)
    b, h, w, c = features.shape
    win = attn.window
    if h % win or w % win:
        raise ContractError(f"feature size {h}x{w} not divisible by window {win}")
    s = win // 2 if shift and min(h, w) > win else 0
    x = roll(features, (-s, -s), (1, 2)) if s else features
    mask = shifted_window_mask(h, w, win, s) if s else None
    out = attn(window_partition(x, win), mask)
    out = window_reverse(out, win, h, w)
    return roll(out, (s, s), (1, 2)) if s else out


class SwinLayer(Module):
    def __init__(self, dim: int, heads: int, window: int, shift: bool, mlp_ratio: float, rng: SeededRng):
        self.shift = shift
        self.norm1 = LayerNorm(dim)
        self.attn = WindowAttention(dim, window, heads, rng)
        self.norm2 = LayerNorm(dim)
        hidden = int(dim * mlp_ratio)
        self.fc1 = Linear(dim, hidden, rng)
        self.fc2 = Linear(hidden, dim, rng)

    def forward(self, x: Tensor, h: int, w: int) -> Tensor:
        b, n, c = x.shape
        y = reshape(self.norm1(x), (b, h, w, c))
        y = reshape(window_attention(y, self.attn, self.shift), (b, n, c))
        x = add(x, y)
        return add(x, self.fc2(F.gelu(self.fc1(self.norm2(x)))))


def tokens_to_image(x: Tensor, h: int, w: int) -> Tensor:
    b, n, c = x.shape
    return transpose(reshape(x, (b, h, w, c)), (0, 3, 1, 2))


def image_to_tokens(x: Tensor) -> Tensor:
    b, c, h, w = x.shape
    return reshape(transpose(x, (0, 2, 3, 1)), (b, h * w, c))


class RSTB(Module):
    """Residual block: Swin layers, then a 3x3 conv, plus the block input."""

    def __init__(self, cfg: RestorationConfig, rng: SeededRng):
        self.layers = [
            SwinLayer(cfg.embed_dim, cfg.heads, cfg.window, i % 2 == 1, cfg.mlp_ratio, rng)
            for i in range(cfg.stl_per_rstb)
        ]
        self.conv = Conv2d(cfg.embed_dim, cfg.embed_dim, 3, rng)

    def forward(self, x: Tensor, h: int, w: int) -> Tensor:
        y = x
        for layer in self.layers:
            y = layer(y, h, w)
        y = image_to_tokens(self.conv(tokens_to_image(y, h, w)))
        return add(x, y)


class DeepExtractor(Module):
    def __init__(self, cfg: RestorationConfig, rng: SeededRng):
        self.blocks = [RSTB(cfg, rng) for _ in range(cfg.rstb_count)]
        self.norm = LayerNorm(cfg.embed_dim)
        self.conv_after_body = Conv2d(cfg.embed_dim, cfg.embed_dim, 3, rng)

    def forward(self, feat: Tensor) -> Tensor:
        _, _, h, w = feat.shape
        x = image_to_tokens(feat)
        for blk in self.blocks:
            x = blk(x, h, w)
        return self.conv_after_body(tokens_to_image(self.norm(x), h, w))


class Upsampler(Module):
    def __init__(self, cfg: RestorationConfig, rng: SeededRng):
        stages = int(round(np.log2(cfg.unshuffle_factor)))
        self.convs = [Conv2d(cfg.embed_dim, cfg.embed_dim, 3, rng) for _ in range(stages)]
        self.conv_last = Conv2d(cfg.embed_dim, cfg.in_channels, 3, rng)

    def forward(self, x: Tensor) -> Tensor:
        for conv in self.convs:
            x = F.leaky_relu(conv(F.upsample_nearest(x, 2)), 0.2)
        return self.conv_last(x)


class RestorationNet(Module):
    def __init__(self, cfg: RestorationConfig | None = None, seed: int = 0):
        self.cfg = cfg or RestorationConfig()
        rng = SeededRng.for_item(seed, "restoration-init")
        c = self.cfg
        self.conv_first = Conv2d(c.in_channels * c.unshuffle_factor**2, c.embed_dim, 3, rng)
        self.deep = DeepExtractor(c, rng)
        self.up = Upsampler(c, rng)

    def shallow(self, x: Tensor) -> Tensor:
        return self.conv_first(F.pixel_unshuffle(x, self.cfg.unshuffle_factor))

    def forward(self, x: Tensor) -> Tensor:
        """[N, C, H, W] -> [N, C, H, W], unclamped."""
        x = as_tensor(x)
        self.cfg.check_size(x.shape[2], x.shape[3])
        s = self.shallow(x)
        return self.up(add(self.deep(s), s))
