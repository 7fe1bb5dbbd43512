"""Differentiable layer primitives built on :mod:`blindrestore.numerics.tensor`."""

from __future__ import annotations

import numpy as np

from .. import _accel
from .tensor import DTYPE, ContractError, Tensor, as_tensor, make_node, mean, reshape, square, sub, transpose


class DimensionError(ContractError):
    pass


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation over NCHW input with OIHW weights (zero padding)."""
    if x.ndim != 4:
        raise DimensionError(f"conv2d input must be 4-D [N,C,H,W], got shape {x.shape}")
    if weight.ndim != 4:
        raise DimensionError(f"conv2d weight must be 4-D [O,C,kh,kw], got shape {weight.shape}")
    n, c, h, w = x.shape
    o, cw, kh, kw = weight.shape
    if c != cw:
        raise DimensionError(f"conv2d channel axis (1) mismatch: input has {c}, weight expects {cw}")
    if bias is not None and bias.shape != (o,):
        raise DimensionError(f"conv2d bias axis 0 must be {o}, got shape {bias.shape}")
    hp, wp = h + 2 * padding, w + 2 * padding
    if hp < kh or wp < kw:
        axis = 2 if hp < kh else 3
        raise DimensionError(f"conv2d kernel larger than padded input along axis {axis}")
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1

    xp = x.data
    if padding:
        xp = np.pad(xp, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = _accel.im2col(xp, kh, kw, stride, ho, wo)
    wm = weight.data.reshape(o, -1)
    out = cols @ wm.T
    if bias is not None:
        out += bias.data
    out = np.ascontiguousarray(out.reshape(n, ho, wo, o).transpose(0, 3, 1, 2))

    parents = (x, weight) if bias is None else (x, weight, bias)

    def bw(g):
        gm = g.transpose(0, 2, 3, 1).reshape(-1, o)
        gw = (gm.T @ cols).reshape(weight.shape) if weight.requires_grad else None
        gx = None
        if x.requires_grad:
            dcols = gm @ wm
            gxp = _accel.col2im(dcols, n, c, hp, wp, kh, kw, stride, ho, wo)
            gx = gxp[:, :, padding : padding + h, padding : padding + w] if padding else gxp
        if bias is None:
            return gx, gw
        return gx, gw, gm.sum(axis=0)

    return make_node(out, parents, bw)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight + bias`` with weight stored as [in, out]."""
    out = x @ weight
    return out if bias is None else out + bias


def _normalize_last(xr: np.ndarray, eps: float):
    mu = xr.mean(axis=-1, keepdims=True)
    var = xr.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    return (xr - mu) * inv, inv


def _normalize_backward(gy: np.ndarray, y: np.ndarray, inv: np.ndarray) -> np.ndarray:
    return inv * (gy - gy.mean(axis=-1, keepdims=True) - y * (gy * y).mean(axis=-1, keepdims=True))


def layer_norm(x: Tensor, weight: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    y, inv = _normalize_last(x.data, eps)
    out = y * weight.data + bias.data
    red = tuple(range(x.ndim - 1))

    def bw(g):
        gx = _normalize_backward(g * weight.data, y, inv)
        return gx, (g * y).sum(axis=red), g.sum(axis=red)

    return make_node(out, (x, weight, bias), bw)


def group_norm(x: Tensor, groups: int, weight: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    n, c, h, w = x.shape
    if c % groups:
        raise DimensionError(f"group_norm: channel axis (1) size {c} not divisible by {groups} groups")
    xr = x.data.reshape(n, groups, -1)
    y, inv = _normalize_last(xr, eps)
    y = y.reshape(x.shape)
    wb = weight.data.reshape(1, c, 1, 1)
    out = y * wb + bias.data.reshape(1, c, 1, 1)

    def bw(g):
        gy = (g * wb).reshape(n, groups, -1)
        gx = _normalize_backward(gy, y.reshape(n, groups, -1), inv).reshape(x.shape)
        return gx, (g * y).sum(axis=(0, 2, 3)), g.sum(axis=(0, 2, 3))

    return make_node(out, (x, weight, bias), bw)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)
    return make_node(out, (x,), lambda g: (out * (g - (g * out).sum(axis=axis, keepdims=True)),))


def silu(x: Tensor) -> Tensor:
    sig = 1.0 / (1.0 + np.exp(-x.data))
    return make_node(x.data * sig, (x,), lambda g: (g * (sig + x.data * sig * (1.0 - sig)),))


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    mask = np.where(x.data > 0, 1.0, slope).astype(DTYPE)
    return make_node(x.data * mask, (x,), lambda g: (g * mask,))


_GELU_C = np.float32(np.sqrt(2.0 / np.pi))


def gelu(x: Tensor) -> Tensor:
    """Tanh-approximated GELU."""
    v = x.data
    inner = _GELU_C * (v + 0.044715 * v**3)
    th = np.tanh(inner)
    out = 0.5 * v * (1.0 + th)

    def bw(g):
        d_inner = _GELU_C * (1.0 + 3 * 0.044715 * v**2)
        return (g * (0.5 * (1.0 + th) + 0.5 * v * (1.0 - th**2) * d_inner),)

    return make_node(out, (x,), bw)


def pixel_unshuffle(x: Tensor, factor: int) -> Tensor:
    """Space-to-depth: [N,C,H,W] -> [N,C*f*f,H/f,W/f]."""
    x = as_tensor(x)
    n, c, h, w = x.shape
    if h % factor or w % factor:
        raise ContractError(f"pixel_unshuffle: spatial dims {(h, w)} not divisible by {factor}")
    t = reshape(x, (n, c, h // factor, factor, w // factor, factor))
    t = transpose(t, (0, 1, 3, 5, 2, 4))
    return reshape(t, (n, c * factor * factor, h // factor, w // factor))


def pixel_shuffle(x: Tensor, factor: int) -> Tensor:
    """Depth-to-space, exact inverse of :func:`pixel_unshuffle`."""
    x = as_tensor(x)
    n, cf, h, w = x.shape
    if cf % (factor * factor):
        raise ContractError(f"pixel_shuffle: channels {cf} not divisible by {factor}^2")
    c = cf // (factor * factor)
    t = reshape(x, (n, c, factor, factor, h, w))
    t = transpose(t, (0, 1, 4, 2, 5, 3))
    return reshape(t, (n, c, h * factor, w * factor))


def upsample_nearest(x: Tensor, factor: int = 2) -> Tensor:
    n, c, h, w = x.shape
    out = x.data.repeat(factor, axis=2).repeat(factor, axis=3)
    return make_node(
        out, (x,), lambda g: (g.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5)),)
    )


def mse_loss(pred: Tensor, target) -> Tensor:
    return mean(square(sub(pred, as_tensor(target))))
