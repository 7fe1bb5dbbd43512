"""Blur, resize, noise and JPEG-artifact operators on ``(H, W, C)`` images."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import _accel
from ..imaging.io import as_image
from ..numerics.rng import SeededRng
from ..numerics.tensor import ContractError

BLUR_KINDS = ("isotropic", "anisotropic")
RESIZE_ALGORITHMS = ("area", "bilinear", "bicubic")
NOISE_KINDS = ("gaussian", "poisson", "jpeg")


@dataclass(frozen=True)
class BlurSpec:
    kind: str
    kernel_size: int
    sigma_x: float
    sigma_y: float
    theta: float = 0.0

    def __post_init__(self):
        if self.kind not in BLUR_KINDS:
            raise ContractError(f"unknown blur kind {self.kind!r}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ContractError(f"blur kernel size must be odd, got {self.kernel_size}")
        if self.sigma_x <= 0 or self.sigma_y <= 0:
            raise ContractError("blur sigmas must be positive")
        if self.kind == "isotropic" and (self.sigma_x != self.sigma_y or self.theta != 0.0):
            raise ContractError("isotropic blur needs sigma_x == sigma_y and theta == 0")

    @classmethod
    def isotropic(cls, kernel_size: int, sigma: float) -> "BlurSpec":
        return cls("isotropic", kernel_size, sigma, sigma, 0.0)


@dataclass(frozen=True)
class ResizeSpec:
    algorithm: str
    scale: float

    def __post_init__(self):
        if self.algorithm not in RESIZE_ALGORITHMS:
            raise ContractError(f"unknown resize algorithm {self.algorithm!r}")
        if not self.scale > 0:
            raise ContractError(f"resize scale must be positive, got {self.scale}")


@dataclass(frozen=True)
class NoiseSpec:
    kind: str
    gaussian_sigma: float = 0.0
    poisson_scale: float = 0.0
    jpeg_quality: int = 0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ContractError(f"unknown noise kind {self.kind!r}")


# -- blur ------------------------------------------------------------------------


def gaussian_kernel(spec: BlurSpec) -> np.ndarray:
    """Normalized (rotated) bivariate Gaussian sampled at integer offsets.

    Rows index the vertical offset and columns the horizontal one; ``sigma_x``
    is the spread along the horizontal axis before rotation by ``theta``.
    """
    if spec.kernel_size % 2 == 0:
        raise ContractError(f"blur kernel size must be odd, got {spec.kernel_size}")
    r = spec.kernel_size // 2
    ys, xs = np.mgrid[-r : r + 1, -r : r + 1].astype(np.float64)
    c, s = np.cos(spec.theta), np.sin(spec.theta)
    rot = np.array([[c, -s], [s, c]])
    cov = rot @ np.diag([spec.sigma_x**2, spec.sigma_y**2]) @ rot.T
    inv = np.linalg.inv(cov)
    q = inv[0, 0] * xs * xs + 2 * inv[0, 1] * xs * ys + inv[1, 1] * ys * ys
    k = np.exp(-0.5 * q)
    return k / k.sum()


def _pad_reflect(img: np.ndarray, r: int) -> np.ndarray:
    modes = []
    for n in img.shape[:2]:
        modes.append("reflect" if n > 1 else "edge")
    if modes[0] == modes[1]:
        return np.pad(img, ((r, r), (r, r), (0, 0)), mode=modes[0])
    tmp = np.pad(img, ((r, r), (0, 0), (0, 0)), mode=modes[0])
    return np.pad(tmp, ((0, 0), (r, r), (0, 0)), mode=modes[1])


def apply_blur(image, spec: BlurSpec) -> np.ndarray:
    img = as_image(image)
    k = gaussian_kernel(spec)
    r = k.shape[0] // 2
    h, w = img.shape[:2]
    out = _accel.correlate_valid(_pad_reflect(img, r), k, h, w)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


# -- resize ----------------------------------------------------------------------


def _cubic(x: np.ndarray, a: float = -0.5) -> np.ndarray:
    x = np.abs(x)
    x2, x3 = x * x, x * x * x
    return np.where(
        x <= 1,
        (a + 2) * x3 - (a + 3) * x2 + 1,
        np.where(x < 2, a * x3 - 5 * a * x2 + 8 * a * x - 4 * a, 0.0),
    )


def resize_taps(n_in: int, n_out: int, algorithm: str) -> tuple[np.ndarray, np.ndarray]:
    """Per-output source indices and weights for one axis (half-pixel centers)."""
    ratio = n_in / n_out
    i = np.arange(n_out, dtype=np.float64)
    if algorithm == "area":
        lo_edge, hi_edge = i * ratio, (i + 1) * ratio
        first = np.floor(lo_edge).astype(np.int64)
        taps = int(np.ceil(ratio)) + 1
        idx = first[:, None] + np.arange(taps)[None, :]
        overlap = np.minimum(idx + 1, hi_edge[:, None]) - np.maximum(idx, lo_edge[:, None])
        wts = np.clip(overlap, 0.0, None) / ratio
        valid = idx < n_in
        wts = np.where(valid, wts, 0.0)
        idx = np.where(valid, idx, n_in - 1)
        wts = wts / wts.sum(axis=1, keepdims=True)
        return idx, wts
    src = (i + 0.5) * ratio - 0.5
    if algorithm == "bilinear":
        src = np.clip(src, 0.0, n_in - 1)
        lo = np.floor(src).astype(np.int64)
        frac = src - lo
        idx = np.stack([lo, np.minimum(lo + 1, n_in - 1)], axis=1)
        wts = np.stack([1.0 - frac, frac], axis=1)
        return idx, wts
    if algorithm == "bicubic":
        base = np.floor(src).astype(np.int64)
        offs = np.arange(-1, 3)
        raw = base[:, None] + offs[None, :]
        wts = _cubic(src[:, None] - raw)
        idx = np.clip(raw, 0, n_in - 1)
        return idx, wts
    raise ContractError(f"unknown resize algorithm {algorithm!r}")


def resize_to(image, size: tuple[int, int], algorithm: str) -> np.ndarray:
    img = as_image(image)
    h, w = int(size[0]), int(size[1])
    if h < 1 or w < 1:
        raise ContractError(f"resize target {size} has a zero dimension")
    idx, wts = resize_taps(img.shape[0], h, algorithm)
    tmp = _accel.apply_taps(img, idx, wts)
    idx, wts = resize_taps(img.shape[1], w, algorithm)
    out = _accel.apply_taps(tmp.transpose(1, 0, 2), idx, wts).transpose(1, 0, 2)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def apply_resize(image, spec: ResizeSpec) -> np.ndarray:
    img = as_image(image)
    h, w = img.shape[:2]
    size = (int(round(spec.scale * h)), int(round(spec.scale * w)))
    if size[0] < 1 or size[1] < 1:
        raise ContractError(f"resize by {spec.scale} of {h}x{w} gives an empty image {size}")
    return resize_to(img, size, spec.algorithm)


# -- noise -----------------------------------------------------------------------


def add_gaussian_noise(image, sigma_8bit: float, rng: SeededRng) -> np.ndarray:
    img = as_image(image)
    if sigma_8bit < 0:
        raise ContractError("gaussian noise sigma must be >= 0")
    if sigma_8bit == 0:
        return img.copy()
    noise = rng.normal(img.shape, dtype=np.float64) * (sigma_8bit / 255.0)
    return np.clip(img + noise, 0.0, 1.0).astype(np.float32)


def add_poisson_noise(image, scale: float, rng: SeededRng) -> np.ndarray:
    img = as_image(image)
    if not scale > 0:
        raise ContractError("poisson noise scale must be > 0")
    vals = 255.0 * scale
    noisy = rng.poisson(np.clip(img, 0.0, 1.0).astype(np.float64) * vals) / vals
    return np.clip(noisy, 0.0, 1.0).astype(np.float32)


# -- JPEG ------------------------------------------------------------------------

LUMA_TABLE = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ]
)
CHROMA_TABLE = np.array(
    [
        [17, 18, 24, 47, 99, 99, 99, 99],
        [18, 21, 26, 66, 99, 99, 99, 99],
        [24, 26, 56, 99, 99, 99, 99, 99],
        [47, 66, 99, 99, 99, 99, 99, 99],
    ]
    + [[99] * 8] * 4
)

_RGB_TO_YCC = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168736, -0.331264, 0.5],
        [0.5, -0.418688, -0.081312],
    ]
)
_YCC_TO_RGB = np.array(
    [
        [1.0, 0.0, 1.402],
        [1.0, -0.344136, -0.714136],
        [1.0, 1.772, 0.0],
    ]
)


def _dct_matrix(n: int = 8) -> np.ndarray:
    k = np.arange(n)[:, None]
    x = np.arange(n)[None, :]
    d = np.sqrt(2.0 / n) * np.cos(np.pi * (2 * x + 1) * k / (2 * n))
    d[0] /= np.sqrt(2.0)
    return d


_DCT = _dct_matrix()


def quant_table(base: np.ndarray, quality: int) -> np.ndarray:
    """libjpeg quality scaling of a base table, floored at 1."""
    scale = 5000 // quality if quality < 50 else 200 - 2 * quality
    return np.maximum((base * scale + 50) // 100, 1).astype(np.float64)


def _block_roundtrip(plane: np.ndarray, table: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    ph, pw = -h % 8, -w % 8
    p = np.pad(plane, ((0, ph), (0, pw)), mode="edge")
    bh, bw = p.shape[0] // 8, p.shape[1] // 8
    blocks = p.reshape(bh, 8, bw, 8).transpose(0, 2, 1, 3)
    coef = _DCT @ blocks @ _DCT.T
    coef = np.round(coef / table) * table
    rec = _DCT.T @ coef @ _DCT
    return rec.transpose(0, 2, 1, 3).reshape(p.shape)[:h, :w]


def jpeg_artifacts(image, quality: int) -> np.ndarray:
    """Lossy part of baseline JPEG (4:4:4, no entropy coding)."""
    img = as_image(image)
    if not 1 <= int(quality) <= 100:
        raise ContractError(f"jpeg quality must be in [1, 100], got {quality}")
    quality = int(quality)
    luma_q = quant_table(LUMA_TABLE, quality)
    x = img.astype(np.float64) * 255.0
    if img.shape[2] == 1:
        out = _block_roundtrip(x[:, :, 0], luma_q)[:, :, None]
    else:
        # chroma kept centered on zero; luma is not level-shifted so that a
        # black image has all-zero coefficients
        ycc = x @ _RGB_TO_YCC.T
        chroma_q = quant_table(CHROMA_TABLE, quality)
        planes = [
            _block_roundtrip(ycc[:, :, 0], luma_q),
            _block_roundtrip(ycc[:, :, 1], chroma_q),
            _block_roundtrip(ycc[:, :, 2], chroma_q),
        ]
        out = np.stack(planes, axis=2) @ _YCC_TO_RGB.T
    return np.clip(out / 255.0, 0.0, 1.0).astype(np.float32)
