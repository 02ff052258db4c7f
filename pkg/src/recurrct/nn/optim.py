"""Adam with bias correction."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import ValidationError


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params, **hyper) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **hyper)


def adam_step(params, grads, state: AdamState) -> tuple[list[np.ndarray], AdamState]:
    """One Adam update; returns new parameter arrays and a new state, inputs untouched."""
    if not (len(params) == len(grads) == len(state.m) == len(state.v)):
        raise ValidationError("params, grads and Adam moments must have equal length")
    t = state.step + 1
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValidationError(f"shape mismatch in adam_step: {p.shape} vs {g.shape}")
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        new_p.append(p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps))
        new_m.append(m)
        new_v.append(v)
    return new_p, replace(state, m=new_m, v=new_v, step=t)


@dataclass
class Adam:
    """Drives :func:`adam_step` for a model exposing ``params``/``grads``/``set_params``."""

    model: object
    lr: float = 1e-3
    state: AdamState = field(init=False)

    def __post_init__(self):
        self.state = AdamState.zeros_like(self.model.params(), lr=self.lr)

    def step(self) -> None:
        new_params, self.state = adam_step(self.model.params(), self.model.grads(), self.state)
        self.model.set_params(new_params)
