"""Adam with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor import Tensor


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray], state: AdamState) -> AdamState:
    """Apply one Adam update in place and return the (mutated) state.

    Moments are created lazily on the first call, matching ``params`` shapes.
    """
    if len(params) != len(grads):
        raise ValueError(f"adam_step: {len(params)} params but {len(grads)} grads")
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    if len(state.m) != len(params):
        raise ValueError(f"adam_step: state holds {len(state.m)} moments for {len(params)} params")
    for p, g, m in zip(params, grads, state.m):
        if g.shape != p.shape or m.shape != p.shape:
            raise ValueError(f"adam_step: shape mismatch for {p.name or 'param'}: param {p.shape}, grad {g.shape}, moment {m.shape}")

    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return state


class Adam:
    """Convenience wrapper binding a parameter list to an :class:`AdamState`."""

    def __init__(self, params: Sequence[Tensor], lr: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.999, epsilon: float = 1e-8):
        self.params = list(params)
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, epsilon=epsilon)

    def step(self) -> None:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        adam_step(self.params, grads, self.state)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
