"""Second-order degradation plans: sampling, execution and text serialization."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..imaging.io import as_image
from ..numerics.rng import SeededRng
from ..numerics.tensor import ContractError
from .ops import (
    RESIZE_ALGORITHMS,
    BlurSpec,
    NoiseSpec,
    ResizeSpec,
    add_gaussian_noise,
    add_poisson_noise,
    apply_blur,
    jpeg_artifacts,
    resize_to,
)

KERNEL_SIZES = tuple(range(7, 22, 2))
JPEG_QUALITY_RANGE = (30, 95)
JPEG_PROBABILITY = 0.75
WIDE_BLUR_SIGMA = (0.1, 12.0)
WIDE_DOWNSAMPLE = (1.0, 12.0)


@dataclass(frozen=True)
class StageRanges:
    blur_sigma: tuple[float, float]
    scale: tuple[float, float]
    gaussian_sigma: tuple[float, float]
    poisson_scale: tuple[float, float]


STAGE1 = StageRanges((0.2, 3.0), (0.15, 1.5), (1.0, 30.0), (0.05, 3.0))
STAGE2 = StageRanges((0.2, 1.5), (0.3, 1.2), (1.0, 25.0), (0.05, 2.5))


@dataclass(frozen=True)
class Stage:
    blur: BlurSpec
    resize: ResizeSpec
    noise: NoiseSpec


@dataclass(frozen=True)
class DegradationPlan:
    stage1: Stage
    stage2: Stage
    final_jpeg: NoiseSpec | None
    original_size: tuple[int, int]
    wide_range: bool = False
    net_downsample: float | None = field(default=None)
    noise_seed: int = 0

    def to_text(self) -> str:
        return plan_to_text(self)

    @classmethod
    def from_text(cls, text: str) -> "DegradationPlan":
        return plan_from_text(text)


# -- sampling ---------------------------------------------------------------------


def _sample_blur(rng: SeededRng, sigma_range) -> BlurSpec:
    kind = rng.choice(("isotropic", "anisotropic"))
    k = int(rng.choice(KERNEL_SIZES))
    if kind == "isotropic":
        s = float(rng.uniform(*sigma_range))
        return BlurSpec(kind, k, s, s, 0.0)
    sx = float(rng.uniform(*sigma_range))
    sy = float(rng.uniform(*sigma_range))
    theta = float(rng.uniform(0.0, np.pi))
    return BlurSpec(kind, k, sx, sy, theta)


def _sample_noise(rng: SeededRng, ranges: StageRanges) -> NoiseSpec:
    if rng.choice(("gaussian", "poisson")) == "gaussian":
        return NoiseSpec("gaussian", gaussian_sigma=float(rng.uniform(*ranges.gaussian_sigma)))
    return NoiseSpec("poisson", poisson_scale=float(rng.uniform(*ranges.poisson_scale)))


def sample_plan(rng: SeededRng, wide_range: bool = False, original_size=(32, 32)) -> DegradationPlan:
    """Draw one fully specified two-stage plan."""
    stages = []
    net = None
    if wide_range:
        net = float(rng.uniform(*WIDE_DOWNSAMPLE))
        split = float(rng.uniform(0.0, 1.0))
        scales = (net ** (-split), net ** (split - 1.0))
    for ranges, i in ((STAGE1, 0), (STAGE2, 1)):
        blur = _sample_blur(rng, WIDE_BLUR_SIGMA if wide_range else ranges.blur_sigma)
        algo = rng.choice(RESIZE_ALGORITHMS)
        scale = scales[i] if wide_range else float(rng.uniform(*ranges.scale))
        noise = _sample_noise(rng, ranges)
        stages.append(Stage(blur, ResizeSpec(algo, scale), noise))
    final = None
    if rng.bernoulli(JPEG_PROBABILITY):
        final = NoiseSpec("jpeg", jpeg_quality=int(rng.integers(*JPEG_QUALITY_RANGE)))
    h, w = original_size
    noise_seed = int(rng.integers(0, 2**62))
    return DegradationPlan(
        stages[0], stages[1], final, (int(h), int(w)), bool(wide_range), net, noise_seed
    )


def plan_for_item(seed: int, index: int, wide_range: bool = False, original_size=(32, 32)) -> DegradationPlan:
    return sample_plan(SeededRng.for_item(seed, "plan", index), wide_range, original_size)


# -- execution -------------------------------------------------------------------


def _apply_noise(img: np.ndarray, spec: NoiseSpec, rng: SeededRng) -> np.ndarray:
    if spec.kind == "gaussian":
        return add_gaussian_noise(img, spec.gaussian_sigma, rng)
    if spec.kind == "poisson":
        return add_poisson_noise(img, spec.poisson_scale, rng)
    return jpeg_artifacts(img, spec.jpeg_quality)


def _run_stage(img: np.ndarray, stage: Stage, rng: SeededRng) -> np.ndarray:
    img = apply_blur(img, stage.blur)
    h, w = img.shape[:2]
    # a stage never collapses an axis below one pixel
    size = (max(1, int(round(stage.resize.scale * h))), max(1, int(round(stage.resize.scale * w))))
    img = resize_to(img, size, stage.resize.algorithm)
    return _apply_noise(img, stage.noise, rng)


def degrade(image, plan: DegradationPlan, rng: SeededRng | None = None) -> np.ndarray:
    """Blur-resize-noise twice, optional JPEG, then bicubic back to full size.

    Noise realizations come from ``plan.noise_seed`` unless ``rng`` is given,
    so a plan alone reproduces its output.
    """
    img = as_image(image)
    if rng is None:
        rng = SeededRng.for_item(plan.noise_seed, "noise")
    if img.shape[:2] != tuple(plan.original_size):
        raise ContractError(f"image size {img.shape[:2]} does not match plan {plan.original_size}")
    img = _run_stage(img, plan.stage1, rng)
    img = _run_stage(img, plan.stage2, rng)
    if plan.final_jpeg is not None:
        img = jpeg_artifacts(img, plan.final_jpeg.jpeg_quality)
    return resize_to(img, plan.original_size, "bicubic")


def degrade_item(image, seed: int, index: int, wide_range: bool = False):
    """Sample the plan for ``(seed, index)`` and apply it; returns ``(lq, plan)``."""
    img = as_image(image)
    plan = plan_for_item(seed, index, wide_range, img.shape[:2])
    return degrade(img, plan), plan


# -- serialization ---------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def plan_to_text(plan: DegradationPlan) -> str:
    lines = [
        ("original_size", f"{plan.original_size[0]}x{plan.original_size[1]}"),
        ("wide_range", _fmt(plan.wide_range)),
        ("net_downsample", _fmt(plan.net_downsample)),
        ("noise_seed", _fmt(plan.noise_seed)),
    ]
    for name, st in (("stage1", plan.stage1), ("stage2", plan.stage2)):
        lines += [
            (f"{name}.blur.kind", st.blur.kind),
            (f"{name}.blur.kernel_size", _fmt(st.blur.kernel_size)),
            (f"{name}.blur.sigma_x", _fmt(st.blur.sigma_x)),
            (f"{name}.blur.sigma_y", _fmt(st.blur.sigma_y)),
            (f"{name}.blur.theta", _fmt(st.blur.theta)),
            (f"{name}.resize.algorithm", st.resize.algorithm),
            (f"{name}.resize.scale", _fmt(st.resize.scale)),
            (f"{name}.noise.kind", st.noise.kind),
            (f"{name}.noise.gaussian_sigma", _fmt(st.noise.gaussian_sigma)),
            (f"{name}.noise.poisson_scale", _fmt(st.noise.poisson_scale)),
        ]
    q = None if plan.final_jpeg is None else plan.final_jpeg.jpeg_quality
    lines.append(("final_jpeg.quality", _fmt(q)))
    return "".join(f"{k} = {v}\n" for k, v in lines)


def plan_from_text(text: str) -> DegradationPlan:
    kv = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ValueError(f"malformed plan line: {raw!r}")
        kv[key.strip()] = val.strip()

    def stage(name: str) -> Stage:
        blur = BlurSpec(
            kv[f"{name}.blur.kind"],
            int(kv[f"{name}.blur.kernel_size"]),
            float(kv[f"{name}.blur.sigma_x"]),
            float(kv[f"{name}.blur.sigma_y"]),
            float(kv[f"{name}.blur.theta"]),
        )
        resize = ResizeSpec(kv[f"{name}.resize.algorithm"], float(kv[f"{name}.resize.scale"]))
        noise = NoiseSpec(
            kv[f"{name}.noise.kind"],
            gaussian_sigma=float(kv[f"{name}.noise.gaussian_sigma"]),
            poisson_scale=float(kv[f"{name}.noise.poisson_scale"]),
        )
        return Stage(blur, resize, noise)

    h, w = (int(x) for x in kv["original_size"].split("x"))
    q = kv["final_jpeg.quality"]
    nd = kv.get("net_downsample", "none")
    return DegradationPlan(
        stage("stage1"),
        stage("stage2"),
        None if q == "none" else NoiseSpec("jpeg", jpeg_quality=int(q)),
        (h, w),
        kv["wide_range"] == "true",
        None if nd == "none" else float(nd),
        int(kv.get("noise_seed", "0")),
    )
