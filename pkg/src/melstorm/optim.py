"""Bias-corrected Adam over named parameter tensors."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .autograd import Tensor


@dataclass
class AdamState:
    """Optimizer state: per-parameter moment arrays plus a shared step count."""

    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Mapping[str, Tensor], state: AdamState) -> None:
    """Apply one Adam update in place to every parameter.

    Every parameter must have a populated gradient; a missing one is an
    error naming the parameter.
    """
    for name, p in params.items():
        if p.grad is None:
            raise ValueError(f"adam_step: parameter '{name}' has no gradient")
        if p.grad.shape != p.data.shape:
            raise ValueError(f"adam_step: gradient shape {p.grad.shape} != parameter shape {p.data.shape} for '{name}'")

    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    for name, p in params.items():
        g = p.grad
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.data -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
