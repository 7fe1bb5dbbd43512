from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import DTYPE, ContractError, Tensor


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step_count: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, param: Tensor, **hyper) -> "AdamState":
        return cls(np.zeros_like(param.data), np.zeros_like(param.data), **hyper)


def adam_step(param: Tensor, state: AdamState) -> None:
    """Bias-corrected Adam update, in place; clears ``param.grad``."""
    if param.grad is None:
        raise ContractError("adam_step: parameter has no gradient")
    g = param.grad.astype(np.float64)
    state.step_count += 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * g
    v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    state.m = m.astype(DTYPE)
    state.v = v.astype(DTYPE)
    m_hat = m / (1.0 - state.beta1**state.step_count)
    v_hat = v / (1.0 - state.beta2**state.step_count)
    param.data = (param.data - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(DTYPE)
    param.grad = None


class Adam:
    """Adam over a named parameter set; parameters without grads are skipped."""

    def __init__(self, named_params, lr: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params: dict[str, Tensor] = dict(named_params)
        self.states = {
            k: AdamState.fresh(p, lr=lr, beta1=beta1, beta2=beta2, eps=eps)
            for k, p in self.params.items()
        }

    def step(self) -> None:
        for k, p in self.params.items():
            if p.grad is not None:
                adam_step(p, self.states[k])

    def set_lr(self, lr: float) -> None:
        for s in self.states.values():
            s.lr = lr

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for k, s in self.states.items():
            out[f"adam.m.{k}"] = s.m
            out[f"adam.v.{k}"] = s.v
            out[f"adam.t.{k}"] = np.array([s.step_count], dtype=DTYPE)
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for k, s in self.states.items():
            if f"adam.m.{k}" in arrays:
                s.m = np.asarray(arrays[f"adam.m.{k}"], dtype=DTYPE).copy()
                s.v = np.asarray(arrays[f"adam.v.{k}"], dtype=DTYPE).copy()
                s.step_count = int(arrays[f"adam.t.{k}"][0])
