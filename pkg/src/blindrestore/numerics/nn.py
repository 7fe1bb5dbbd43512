"""Tiny module system: parameter discovery, state dicts, standard layers."""

from __future__ import annotations

import hashlib
from typing import Iterator

import numpy as np

from . import functional as F
from .rng import SeededRng
from .tensor import DTYPE, Parameter, Tensor


def parameter(data) -> Parameter:
    return Parameter(np.asarray(data, dtype=DTYPE))


class Module:
    """Base class; parameters are :class:`Parameter` attributes (or lists of them)."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, val in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(val, Parameter):
                yield name, val
            elif isinstance(val, Module):
                yield from val.named_parameters(name + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")
                    elif isinstance(item, Parameter):
                        yield f"{name}.{i}", item

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True) -> None:
        own = dict(self.named_parameters())
        if strict:
            missing = set(own) - set(state)
            extra = set(state) - set(own)
            if missing or extra:
                raise KeyError(f"state dict mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        for k, p in own.items():
            if k not in state:
                continue
            arr = np.asarray(state[k], dtype=DTYPE)
            if arr.shape != p.shape:
                raise ValueError(f"parameter {k}: expected shape {p.shape}, got {arr.shape}")
            p.data = arr.copy()

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def requires_grad_(self, flag: bool) -> "Module":
        for p in self.parameters():
            p.requires_grad = flag
            p.grad = None
        return self

    def fingerprint(self) -> str:
        """SHA-256 over parameter names and raw bytes."""
        h = hashlib.sha256()
        for k, p in self.named_parameters():
            h.update(k.encode())
            h.update(np.ascontiguousarray(p.data).tobytes())
        return h.hexdigest()

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def _uniform(rng: SeededRng, bound: float, shape) -> np.ndarray:
    return rng.uniform(-bound, bound, shape).astype(DTYPE)


class Conv2d(Module):
    def __init__(self, cin: int, cout: int, k: int, rng: SeededRng, stride: int = 1,
                 padding: int | None = None, bias: bool = True):
        bound = 1.0 / np.sqrt(cin * k * k)
        self.weight = parameter(_uniform(rng, bound, (cout, cin, k, k)))
        self.bias = parameter(_uniform(rng, bound, (cout,))) if bias else None
        self.stride = stride
        self.padding = k // 2 if padding is None else padding

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class Linear(Module):
    def __init__(self, fin: int, fout: int, rng: SeededRng, bias: bool = True):
        bound = 1.0 / np.sqrt(fin)
        self.weight = parameter(_uniform(rng, bound, (fin, fout)))
        self.bias = parameter(_uniform(rng, bound, (fout,))) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, dim: int):
        self.weight = parameter(np.ones(dim))
        self.bias = parameter(np.zeros(dim))

    def forward(self, x: Tensor) -> Tensor:
        return F.layer_norm(x, self.weight, self.bias)


class GroupNorm(Module):
    def __init__(self, groups: int, channels: int):
        self.groups = groups
        self.weight = parameter(np.ones(channels))
        self.bias = parameter(np.zeros(channels))

    def forward(self, x: Tensor) -> Tensor:
        return F.group_norm(x, self.groups, self.weight, self.bias)
