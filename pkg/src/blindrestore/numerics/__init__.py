from .functional import (
    DimensionError,
    conv2d,
    gelu,
    group_norm,
    layer_norm,
    leaky_relu,
    linear,
    mse_loss,
    pixel_shuffle,
    pixel_unshuffle,
    silu,
    softmax,
    upsample_nearest,
)
from .nn import Conv2d, GroupNorm, LayerNorm, Linear, Module, parameter
from .optim import Adam, AdamState, adam_step
from .rng import SeededRng, stream_id
from .tensor import ContractError, Parameter, Tensor, backward, no_grad

__all__ = [
    "Adam",
    "AdamState",
    "ContractError",
    "Conv2d",
    "DimensionError",
    "GroupNorm",
    "LayerNorm",
    "Linear",
    "Module",
    "Parameter",
    "SeededRng",
    "Tensor",
    "adam_step",
    "backward",
    "conv2d",
    "gelu",
    "group_norm",
    "layer_norm",
    "leaky_relu",
    "linear",
    "mse_loss",
    "no_grad",
    "parameter",
    "pixel_shuffle",
    "pixel_unshuffle",
    "silu",
    "softmax",
    "stream_id",
    "upsample_nearest",
]
