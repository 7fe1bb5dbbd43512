from .swinir import (
    RSTB,
    RestorationConfig,
    RestorationNet,
    SwinLayer,
    WindowAttention,
    relative_position_index,
    shifted_window_mask,
    window_attention,
)
from .train import (
    PairSource,
    TrainingError,
    TrainState,
    cosine_lr,
    from_batch,
    restore_batch,
    restore_image,
    to_batch,
    train_restoration,
)

__all__ = [
    "RSTB",
    "PairSource",
    "RestorationConfig",
    "RestorationNet",
    "SwinLayer",
    "TrainState",
    "TrainingError",
    "WindowAttention",
    "cosine_lr",
    "from_batch",
    "relative_position_index",
    "restore_batch",
    "restore_image",
    "shifted_window_mask",
    "to_batch",
    "train_restoration",
    "window_attention",
]
