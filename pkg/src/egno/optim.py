"""Adam optimizer with bias correction and coupled weight decay."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor

__all__ = ["AdamState", "adam_step"]


@dataclass
class AdamState:
    """Per-parameter moment buffers plus the shared hyperparameters.

    Weight decay is coupled: it enters as an additive lam * param term in the
    gradient before the moment updates, the classic Adam formulation.
    """

    lr: float = 1e-4
    weight_decay: float = 1e-8
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    s: dict[str, np.ndarray] = field(default_factory=dict)

    def ensure(self, params: dict[str, Tensor]) -> None:
        for name, p in params.items():
            if name not in self.m:
                self.m[name] = np.zeros(p.shape)
                self.s[name] = np.zeros(p.shape)


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray],
              state: AdamState) -> None:
    """One Adam update, in place on the parameter buffers.

    Raises KeyError for a gradient without a moment buffer and
    FloatingPointError for a non-finite gradient, naming the parameter.
    """
    state.t += 1
    t = state.t
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, g in grads.items():
        if name not in params:
            raise KeyError(f"adam_step: gradient for unknown parameter '{name}'")
        if name not in state.m:
            raise KeyError(f"adam_step: missing moment buffer for parameter '{name}'")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"adam_step: non-finite gradient for parameter '{name}'")
        p = params[name]
        if g.shape != p.shape:
            raise ValueError(f"adam_step: gradient shape {g.shape} != parameter shape {p.shape} for '{name}'")
        if state.weight_decay != 0.0:
            g = g + state.weight_decay * p.data
        m = state.m[name]
        s = state.s[name]
        m *= b1
        m += (1.0 - b1) * g
        s *= b2
        s += (1.0 - b2) * (g * g)
        p.data -= state.lr * (m / c1) / (np.sqrt(s / c2) + state.eps)
