"""Velocity-aware equivariant message-passing layer.

Messages are built from invariant quantities (features, squared distances,
edge attributes), so node features stay invariant while coordinate and
velocity updates transform with the frame. A batch of graphs is just one
big graph whose edge indices carry per-graph offsets.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor

__all__ = [
    "MlpParams",
    "EgnnLayerParams",
    "init_mlp",
    "mlp_forward",
    "init_egnn_layer",
    "egnn_layer_forward",
]


@dataclass
class MlpParams:
    """Stacked linear layers with SiLU between them.

    `activate_final` appends one more SiLU after the last layer.
    """

    weights: list[Tensor]
    biases: list[Tensor | None]
    activate_final: bool = False

    def named_parameters(self, prefix: str) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"{prefix}.w{i}"] = w
            if b is not None:
                out[f"{prefix}.b{i}"] = b
        return out


def init_mlp(rng: np.random.Generator, dims: list[int], activate_final: bool = False,
             final_bias: bool = True, final_scale: float | None = None) -> MlpParams:
    """Glorot-uniform weights, zero biases.

    `final_scale` overrides the last layer's init with uniform(+-final_scale);
    combined with `final_bias=False` this is the near-identity coordinate head.
    """
    weights, biases = [], []
    last = len(dims) - 2
    for i, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:])):
        if i == last and final_scale is not None:
            w = rng.uniform(-final_scale, final_scale, size=(d_in, d_out))
        else:
            bound = np.sqrt(6.0 / (d_in + d_out))
            w = rng.uniform(-bound, bound, size=(d_in, d_out))
        weights.append(T.parameter(w))
        use_bias = final_bias or i != last
        biases.append(T.parameter(np.zeros(d_out)) if use_bias else None)
    return MlpParams(weights, biases, activate_final)


def mlp_forward(p: MlpParams, x: Tensor) -> Tensor:
    last = len(p.weights) - 1
    for i, (w, b) in enumerate(zip(p.weights, p.biases)):
        x = T.linear(x, w, b, activate=(i != last or p.activate_final))
    return x


@dataclass
class EgnnLayerParams:
    """The four heads of one layer.

    phi_e: edge message; phi_x: scalar coordinate weight per message, final
    layer bias-free; phi_h: node feature update; phi_v: scalar velocity gate.
    """

    phi_e: MlpParams
    phi_x: MlpParams
    phi_h: MlpParams
    phi_v: MlpParams

    def named_parameters(self, prefix: str) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name in ("phi_e", "phi_x", "phi_h", "phi_v"):
            out.update(getattr(self, name).named_parameters(f"{prefix}.{name}"))
        return out


def init_egnn_layer(rng: np.random.Generator, hidden: int, edge_attr_dim: int,
                    zero_update: bool = False) -> EgnnLayerParams:
    """Build layer heads at one hidden width.

    With `zero_update` the coordinate and velocity heads are zeroed entirely,
    so the layer maps x to x and v to 0: the static-prediction initialization.
    """
    k = hidden
    phi_e = init_mlp(rng, [2 * k + 1 + edge_attr_dim, k, k, k], activate_final=True)
    phi_x = init_mlp(rng, [k, k, k, 1], final_bias=False,
                     final_scale=0.0 if zero_update else 1e-3)
    phi_h = init_mlp(rng, [2 * k, k, k, k])
    phi_v = init_mlp(rng, [k, k, k, 1])
    if zero_update:
        for mlp in (phi_v,):
            for w in mlp.weights:
                w.data[...] = 0.0
            for b in mlp.biases:
                if b is not None:
                    b.data[...] = 0.0
    return EgnnLayerParams(phi_e, phi_x, phi_h, phi_v)


def egnn_layer_forward(h: Tensor, x: Tensor, v: Tensor, edges: np.ndarray,
                       edge_attr: Tensor, params: EgnnLayerParams,
                       coord_scale: float | None = None) -> tuple[Tensor, Tensor, Tensor]:
    """One message-passing step.

    m_ij  = phi_e(h_i, h_j, |x_i - x_j|^2, e_ij)
    v'_i  = phi_v(h_i) * v_i + C * sum_j (x_i - x_j) * phi_x(m_ij)
    x'_i  = x_i + v'_i
    h'_i  = phi_h(h_i, sum_j m_ij)

    `edges` holds (receiver i, sender j) rows. `coord_scale` is C; by default
    1/(N-1), the neighbor mean on a fully connected graph.
    """
    n = h.shape[0]
    if n < 2 and len(edges):
        raise ValueError(f"{n} node(s) cannot carry {len(edges)} edges")
    if x.shape != (n, 3) or v.shape != (n, 3):
        raise T.ShapeMismatchError(f"h rows {n} vs x {x.shape}, v {v.shape}")
    if coord_scale is None:
        coord_scale = 1.0 / (n - 1)
    recv, send = edges[:, 0], edges[:, 1]

    h_i = T.take(h, recv, axis=0)
    h_j = T.take(h, send, axis=0)
    dx = T.sub(T.take(x, recv, axis=0), T.take(x, send, axis=0))
    d2 = T.tsum(T.square(dx), axis=1, keepdims=True)
    m = mlp_forward(params.phi_e, T.concat([h_i, h_j, d2, edge_attr], axis=1))
    if not np.all(np.isfinite(m.data)):
        raise FloatingPointError("non-finite edge message")

    w_x = mlp_forward(params.phi_x, m)  # (E, 1)
    coord_msg = T.mul(dx, T.expand(w_x, 3, axis=1))
    coord_agg = T.scatter_sum(coord_msg, recv, n)
    gate = T.expand(mlp_forward(params.phi_v, h), 3, axis=1)
    v_new = T.add(T.mul(gate, v), T.mul(coord_agg, T.constant(coord_scale)))
    x_new = T.add(x, v_new)

    m_agg = T.scatter_sum(m, recv, n)
    h_new = mlp_forward(params.phi_h, T.concat([h, m_agg], axis=1))
    return h_new, x_new, v_new
