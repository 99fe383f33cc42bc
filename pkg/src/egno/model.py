"""EGNO assembly: repeat the input state over the time grid, attach time
embeddings, then run blocks of temporal convolution + EGNN message passing
and read the P decoded states off the last block in parallel."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor as T
from .egnn import EgnnLayerParams, egnn_layer_forward, init_egnn_layer
from .fourier import (FeatureMask, FourierKernel, init_fourier_kernel,
                      max_modes, temporal_conv_forward)
from .geometry import GeometricGraph
from .tensor import Tensor

__all__ = [
    "TimeGrid",
    "EgnoConfig",
    "EgnoParams",
    "time_embedding",
    "init_egno",
    "egno_forward",
    "egno_forward_batch",
    "trajectory_loss",
    "compute_metrics",
    "super_resolution_grid",
    "decode_super_resolution",
]


@dataclass(frozen=True)
class TimeGrid:
    """Decoded frame offsets plus the indices fed to the time embedding.

    Offsets are in recorded-frame units and strictly increasing; indices are
    the sequence positions 1..P at training resolution and turn fractional
    for super-resolution decoding.
    """

    offsets: np.ndarray
    indices: np.ndarray

    def __post_init__(self):
        if len(self.offsets) != len(self.indices):
            raise ValueError("offsets and indices must have equal length")
        if np.any(np.diff(self.offsets) <= 0):
            raise ValueError("offsets must be strictly increasing")

    def __len__(self) -> int:
        return len(self.offsets)

    @staticmethod
    def uniform(window: int, p: int) -> "TimeGrid":
        """t_p = (p/P) * window for p = 1..P; window must divide evenly."""
        if window % p != 0:
            raise ValueError(f"window {window} not divisible by P={p}")
        step = window // p
        return TimeGrid(np.arange(1, p + 1) * step, np.arange(1, p + 1, dtype=float))

    @staticmethod
    def last(window: int, p: int, delta: int = 1) -> "TimeGrid":
        """t_p = window - delta * (P - p): the last P frames at spacing delta."""
        if delta < 1:
            raise ValueError(f"delta must be >= 1, got {delta}")
        offsets = window - delta * (p - np.arange(1, p + 1))
        if offsets[0] < 1:
            raise ValueError(f"first offset {offsets[0]} falls before the input frame")
        return TimeGrid(offsets, np.arange(1, p + 1, dtype=float))


@dataclass(frozen=True)
class EgnoConfig:
    layers: int = 4
    hidden: int = 64
    modes: int = 2
    p_steps: int = 5
    time_emb: int = 32
    discretization: str = "uniform"
    delta: int = 1
    mask: FeatureMask = field(default_factory=FeatureMask)
    gated_z: bool = False
    supervise_velocity: bool = False

    def __post_init__(self):
        if min(self.layers, self.hidden, self.modes, self.p_steps, self.time_emb) < 1:
            raise ValueError("all size fields must be positive")
        if self.modes > max_modes(self.p_steps):
            raise ValueError(f"modes {self.modes} exceeds {max_modes(self.p_steps)} for P={self.p_steps}")
        if self.discretization not in ("uniform", "last"):
            raise ValueError(f"unknown discretization {self.discretization!r}")

    def grid(self, window: int) -> TimeGrid:
        if self.discretization == "uniform":
            return TimeGrid.uniform(window, self.p_steps)
        return TimeGrid.last(window, self.p_steps, self.delta)


@dataclass
class EgnoParams:
    """Input embedding plus per-block spectral kernels and EGNN heads."""

    embed_w: Tensor
    embed_b: Tensor
    kernels: list[FourierKernel]
    layers: list[EgnnLayerParams]

    def named_parameters(self) -> dict[str, Tensor]:
        out = {"embed.w": self.embed_w, "embed.b": self.embed_b}
        for i, (kern, layer) in enumerate(zip(self.kernels, self.layers)):
            out.update(kern.named_parameters(f"block{i}.kernel"))
            out.update(layer.named_parameters(f"block{i}.egnn"))
        return out


def time_embedding(index: float | np.ndarray, d_emb: int) -> np.ndarray:
    """Sinusoidal embedding: even slots sin(i / 10000^(2j/d)), odd slots cos.

    Accepts scalar or vector indices, including fractional ones.
    """
    if d_emb % 2 != 0:
        raise ValueError(f"embedding width must be even, got {d_emb}")
    idx = np.atleast_1d(np.asarray(index, dtype=np.float64))
    j = np.arange(d_emb // 2)
    freq = 1.0 / 10000.0 ** (2.0 * j / d_emb)
    ang = idx[:, None] * freq[None, :]
    out = np.empty((len(idx), d_emb))
    out[:, 0::2] = np.sin(ang)
    out[:, 1::2] = np.cos(ang)
    return out[0] if np.isscalar(index) or np.asarray(index).ndim == 0 else out


def init_egno(seed: int, config: EgnoConfig, raw_feat_dim: int = 1,
              edge_attr_dim: int = 1, zero_update: bool = False) -> EgnoParams:
    rng = np.random.default_rng(seed)
    k = config.hidden
    d_in = raw_feat_dim + config.time_emb
    bound = np.sqrt(6.0 / (d_in + k))
    embed_w = T.parameter(rng.uniform(-bound, bound, size=(d_in, k)))
    embed_b = T.parameter(np.zeros(k))
    kernels, layers = [], []
    for _ in range(config.layers):
        kernels.append(init_fourier_kernel(rng, config.modes, k, config.mask,
                                           zero_update=zero_update))
        layers.append(init_egnn_layer(rng, k, edge_attr_dim, zero_update=zero_update))
    return EgnoParams(embed_w, embed_b, kernels, layers)


_EDGE_CACHE: dict[tuple, np.ndarray] = {}


def _offset_edges(edges: np.ndarray, n_nodes: int, n_graphs: int) -> np.ndarray:
    """Tile one graph's edge list across a disjoint union of n_graphs copies."""
    key = (edges.tobytes(), n_nodes, n_graphs)
    cached = _EDGE_CACHE.get(key)
    if cached is None:
        offsets = (np.arange(n_graphs) * n_nodes)[:, None, None]
        cached = _EDGE_CACHE[key] = (edges[None, :, :] + offsets).reshape(-1, 2)
    return cached


def egno_forward_batch(params: EgnoParams, config: EgnoConfig, raw_h: np.ndarray,
                       x: np.ndarray, v: np.ndarray, edges: np.ndarray,
                       edge_attr: np.ndarray, grid: TimeGrid) -> tuple[Tensor, Tensor]:
    """Decode a batch of input states into per-step trajectories.

    raw_h: (B, N, f); x, v: (B, N, 3); edges: (E, 2) shared across the batch;
    edge_attr: (B, E, a). Returns position and velocity tensors of shape
    (P, B, N, 3). The EGNN treats the time axis as batch; the temporal
    convolution treats nodes as batch.
    """
    b, n, f = raw_h.shape
    p = len(grid)
    k = config.hidden
    if config.modes > max_modes(p):
        raise ValueError(f"modes {config.modes} exceeds {max_modes(p)} for a length-{p} grid")

    emb = time_embedding(grid.indices, config.time_emb)  # (P, d)
    emb_t = T.expand(T.expand(T.constant(emb.reshape(p, 1, 1, -1)), b, axis=1), n, axis=2)
    raw_t = T.expand(T.constant(raw_h.reshape(1, b, n, f)), p, axis=0)
    h0 = T.concat([raw_t, emb_t], axis=-1)
    h = T.reshape(T.linear(T.reshape(h0, (p * b * n, -1)), params.embed_w, params.embed_b),
                  (p, b, n, k))

    x_seq = T.constant(np.broadcast_to(x[None], (p, b, n, 3)).copy())
    v_seq = T.constant(np.broadcast_to(v[None], (p, b, n, 3)).copy())

    edges_pb = _offset_edges(edges, n, p * b)
    attr_pb = T.constant(np.broadcast_to(edge_attr[None], (p,) + edge_attr.shape)
                         .reshape(-1, edge_attr.shape[-1]))
    coord_scale = 1.0 / (n - 1)

    for kern, layer in zip(params.kernels, params.layers):
        h, x_seq, v_seq = temporal_conv_forward(h, x_seq, v_seq, kern, config.mask,
                                                gated_z=config.gated_z)
        h2, x2, v2 = egnn_layer_forward(
            T.reshape(h, (p * b * n, k)), T.reshape(x_seq, (p * b * n, 3)),
            T.reshape(v_seq, (p * b * n, 3)), edges_pb, attr_pb, layer,
            coord_scale=coord_scale)
        h = T.reshape(h2, (p, b, n, k))
        x_seq = T.reshape(x2, (p, b, n, 3))
        v_seq = T.reshape(v2, (p, b, n, 3))
    return x_seq, v_seq


def egno_forward(params: EgnoParams, config: EgnoConfig, g: GeometricGraph,
                 grid: TimeGrid) -> tuple[np.ndarray, np.ndarray]:
    """Single-graph decode; returns plain (P, N, 3) position and velocity arrays."""
    x_seq, v_seq = egno_forward_batch(
        params, config, g.h[None], g.x[None], g.v[None], g.edges,
        g.edge_attr[None], grid)
    return x_seq.data[:, 0], v_seq.data[:, 0]


def trajectory_loss(pred_x: Tensor, target_x: np.ndarray,
                    pred_v: Tensor | None = None, target_v: np.ndarray | None = None,
                    supervise_velocity: bool = False) -> Tensor:
    """Mean over time steps of the per-entry squared position error.

    Equals the average over every (step, node, coordinate) entry, and over
    the batch axis when present. With velocity supervision on, velocity
    entries join the average on equal footing.
    """
    if pred_x.shape != target_x.shape:
        raise T.ShapeMismatchError(f"prediction {pred_x.shape} vs target {target_x.shape}")
    loss = T.tmean(T.square(T.sub(pred_x, T.constant(target_x))))
    if supervise_velocity:
        if pred_v is None or target_v is None:
            raise ValueError("velocity supervision requires predicted and target velocities")
        loss_v = T.tmean(T.square(T.sub(pred_v, T.constant(target_v))))
        loss = T.mul(T.add(loss, loss_v), T.constant(0.5))
    return loss


def compute_metrics(pred_x: np.ndarray, target_x: np.ndarray) -> dict[str, float]:
    """Position MSEs of a decoded trajectory against ground truth.

    f_mse is the final step's mean squared error over nodes and coordinates;
    a_mse averages that quantity over all decoded steps. Accepts (P, N, 3)
    or batched (P, B, N, 3) arrays.
    """
    if pred_x.shape != target_x.shape:
        raise ValueError(f"prediction {pred_x.shape} vs target {target_x.shape}")
    if pred_x.shape[0] < 1 or pred_x.size == 0:
        raise ValueError("empty trajectory")
    sq = (pred_x - target_x) ** 2
    per_step = sq.reshape(sq.shape[0], -1).mean(axis=1)
    return {"f_mse": float(per_step[-1]), "a_mse": float(per_step.mean())}


def super_resolution_grid(grid: TimeGrid, factor: int = 2) -> TimeGrid:
    """Refine a decoding grid by interpolating `factor - 1` points into each
    index gap (anchoring index 0 at offset 0), doubling the grid for factor 2:
    offsets become {t_1/2, t_1, (t_1+t_2)/2, ..., t_P}."""
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    p = len(grid)
    fine_idx = np.arange(1, factor * p + 1) / factor
    anchor_idx = np.concatenate(([0.0], grid.indices))
    anchor_off = np.concatenate(([0.0], grid.offsets))
    fine_off = np.interp(fine_idx, anchor_idx, anchor_off)
    return TimeGrid(fine_off, fine_idx)


def decode_super_resolution(params: EgnoParams, config: EgnoConfig, g: GeometricGraph,
                            grid: TimeGrid, factor: int = 2
                            ) -> tuple[TimeGrid, np.ndarray, np.ndarray]:
    """Decode at a finer time grid than trained on, reusing the same kernel
    modes at the longer sequence length. Returns (fine grid, x, v)."""
    fine = super_resolution_grid(grid, factor)
    x_seq, v_seq = egno_forward(params, config, g, fine)
    return fine, x_seq, v_seq
