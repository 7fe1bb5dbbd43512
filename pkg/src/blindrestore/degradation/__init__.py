from .ops import (
    BlurSpec,
    NoiseSpec,
    ResizeSpec,
    add_gaussian_noise,
    add_poisson_noise,
    apply_blur,
    apply_resize,
    gaussian_kernel,
    jpeg_artifacts,
    resize_to,
)
from .plan import (
    STAGE1,
    STAGE2,
    DegradationPlan,
    Stage,
    degrade,
    degrade_item,
    plan_for_item,
    plan_from_text,
    plan_to_text,
    sample_plan,
)

__all__ = [
    "STAGE1",
    "STAGE2",
    "BlurSpec",
    "DegradationPlan",
    "NoiseSpec",
    "ResizeSpec",
    "Stage",
    "add_gaussian_noise",
    "add_poisson_noise",
    "apply_blur",
    "apply_resize",
    "degrade",
    "degrade_item",
    "gaussian_kernel",
    "jpeg_artifacts",
    "plan_for_item",
    "plan_from_text",
    "plan_to_text",
    "resize_to",
    "sample_plan",
]
