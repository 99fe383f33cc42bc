"""EGNN-family baselines: single-shot final-state prediction, iterated
short-step rollout, and per-layer sequential readout."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import tensor as T
from .egnn import EgnnLayerParams, egnn_layer_forward, init_egnn_layer
from .model import _offset_edges
from .tensor import Tensor

__all__ = [
    "EgnnStackParams",
    "init_egnn_stack",
    "egnn_stack_forward",
    "egnn_seq_forward",
    "rollout_predict",
]


@dataclass
class EgnnStackParams:
    """Input embedding plus L message-passing layers, no temporal axis."""

    embed_w: Tensor
    embed_b: Tensor
    layers: list[EgnnLayerParams]

    def named_parameters(self) -> dict[str, Tensor]:
        out = {"embed.w": self.embed_w, "embed.b": self.embed_b}
        for i, layer in enumerate(self.layers):
            out.update(layer.named_parameters(f"layer{i}"))
        return out


def init_egnn_stack(seed: int, layers: int, hidden: int, raw_feat_dim: int = 1,
                    edge_attr_dim: int = 1, zero_update: bool = False) -> EgnnStackParams:
    rng = np.random.default_rng(seed)
    bound = np.sqrt(6.0 / (raw_feat_dim + hidden))
    embed_w = T.parameter(rng.uniform(-bound, bound, size=(raw_feat_dim, hidden)))
    embed_b = T.parameter(np.zeros(hidden))
    heads = [init_egnn_layer(rng, hidden, edge_attr_dim, zero_update=zero_update)
             for _ in range(layers)]
    return EgnnStackParams(embed_w, embed_b, heads)


def _run_layers(params: EgnnStackParams, raw_h: np.ndarray, x: np.ndarray,
                v: np.ndarray, edges: np.ndarray, edge_attr: np.ndarray,
                collect: int = 0) -> list[tuple[Tensor, Tensor]]:
    """Shared driver: returns [(x, v)] after the last `collect` layers, or
    just the final pair when collect == 0."""
    b, n, f = raw_h.shape
    h = T.linear(T.constant(raw_h.reshape(b * n, f)), params.embed_w, params.embed_b)
    xt = T.constant(x.reshape(b * n, 3))
    vt = T.constant(v.reshape(b * n, 3))
    edges_b = _offset_edges(edges, n, b)
    attr_b = T.constant(edge_attr.reshape(-1, edge_attr.shape[-1]))
    scale = 1.0 / (n - 1)
    total = len(params.layers)
    first_kept = total - collect if collect else total - 1
    outs: list[tuple[Tensor, Tensor]] = []
    for i, layer in enumerate(params.layers):
        h, xt, vt = egnn_layer_forward(h, xt, vt, edges_b, attr_b, layer,
                                       coord_scale=scale)
        if i >= first_kept:
            outs.append((T.reshape(xt, (b, n, 3)), T.reshape(vt, (b, n, 3))))
    return outs


def egnn_stack_forward(params: EgnnStackParams, raw_h: np.ndarray, x: np.ndarray,
                       v: np.ndarray, edges: np.ndarray, edge_attr: np.ndarray
                       ) -> tuple[Tensor, Tensor]:
    """Single-state prediction: (B, N, 3) position and velocity after L layers."""
    x_out, v_out = _run_layers(params, raw_h, x, v, edges, edge_attr)[-1]
    return x_out, v_out


def egnn_seq_forward(params: EgnnStackParams, raw_h: np.ndarray, x: np.ndarray,
                     v: np.ndarray, edges: np.ndarray, edge_attr: np.ndarray,
                     p_steps: int) -> tuple[Tensor, Tensor]:
    """Sequential readout: frame p comes from the coordinates of layer p,
    taking the last p_steps layers when there are more layers than frames.
    Returns (P, B, N, 3) tensors."""
    if len(params.layers) < p_steps:
        raise ValueError(
            f"sequential readout needs at least {p_steps} layers, got {len(params.layers)}")
    outs = _run_layers(params, raw_h, x, v, edges, edge_attr, collect=p_steps)
    xs = [T.reshape(xo, (1,) + xo.shape) for xo, _ in outs]
    vs = [T.reshape(vo, (1,) + vo.shape) for _, vo in outs]
    return T.concat(xs, axis=0), T.concat(vs, axis=0)


def rollout_predict(step: Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]],
                    x: np.ndarray, v: np.ndarray, n_steps: int
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Iterate a single-step predictor, collecting each intermediate state.

    `step` maps (x, v) to the next (x, v); callers recompute whatever node
    features they need inside it. Returns (n_steps, ...) stacked states.
    """
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    xs, vs = [], []
    for _ in range(n_steps):
        x, v = step(x, v)
        xs.append(x)
        vs.append(v)
    return np.stack(xs), np.stack(vs)
