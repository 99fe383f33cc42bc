"""Geometric graphs, rigid transforms and center-of-mass handling.

Conventions fixed here and used everywhere else: positions are row vectors,
so a rotation acts as x @ R.T + mu, and velocities rotate but never
translate.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "GeometricGraph",
    "RigidTransform",
    "Trajectory",
    "build_fully_connected_edges",
    "zero_center_of_mass",
    "apply_rigid_transform",
    "random_rotation",
]

_ORTHO_TOL = 1e-12


@dataclass(frozen=True)
class GeometricGraph:
    """One system state: invariant features, positions, velocities, edges."""

    h: np.ndarray          # (N, k) invariant node features
    x: np.ndarray          # (N, 3) positions
    v: np.ndarray          # (N, 3) velocities
    edges: np.ndarray      # (E, 2) directed (i, j) pairs, i != j
    edge_attr: np.ndarray  # (E, a) per-edge features

    def __post_init__(self):
        n = self.x.shape[0]
        if self.x.shape != (n, 3) or self.v.shape != (n, 3):
            raise ValueError(f"x/v must be (N, 3), got {self.x.shape} and {self.v.shape}")
        if self.h.shape[0] != n:
            raise ValueError(f"h has {self.h.shape[0]} rows for {n} nodes")
        if len(self.edges):
            if np.any(self.edges[:, 0] == self.edges[:, 1]):
                raise ValueError("self-loops are not allowed")
            if self.edges.max() >= n or self.edges.min() < 0:
                raise ValueError("edge index out of range")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.v))):
            raise ValueError("positions and velocities must be finite")

    @property
    def n_nodes(self) -> int:
        return self.x.shape[0]


@dataclass(frozen=True)
class RigidTransform:
    """Rotation R plus translation mu; R must be special orthogonal."""

    R: np.ndarray
    mu: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if self.R.shape != (3, 3) or self.mu.shape != (3,):
            raise ValueError(f"expected 3x3 rotation and 3-vector, got {self.R.shape}, {self.mu.shape}")
        if np.max(np.abs(self.R.T @ self.R - np.eye(3))) > _ORTHO_TOL:
            raise ValueError("R is not orthogonal within 1e-12")
        if abs(np.linalg.det(self.R) - 1.0) > _ORTHO_TOL:
            raise ValueError("det(R) != +1 within 1e-12")

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self after other: (R1, mu1) . (R2, mu2) = (R1 R2, R1 mu2 + mu1)."""
        return RigidTransform(self.R @ other.R, other.mu @ self.R.T + self.mu)


@dataclass(frozen=True)
class Trajectory:
    """Time-ordered simulator frames with integer frame times."""

    x: np.ndarray            # (T, N, 3)
    v: np.ndarray            # (T, N, 3)
    frame_times: np.ndarray  # (T,) strictly increasing integers

    def __post_init__(self):
        if self.x.shape != self.v.shape or self.x.ndim != 3:
            raise ValueError(f"frame arrays must share shape (T, N, 3), got {self.x.shape}, {self.v.shape}")
        if len(self.frame_times) != self.x.shape[0] or len(self.frame_times) < 1:
            raise ValueError("frame_times length must equal frame count, at least 1")
        if np.any(np.diff(self.frame_times) <= 0):
            raise ValueError("frame_times must be strictly increasing")

    @property
    def n_frames(self) -> int:
        return self.x.shape[0]


def build_fully_connected_edges(n: int) -> np.ndarray:
    """All N(N-1) directed pairs (i, j), i != j, in i-major order."""
    if n < 2:
        raise ValueError(f"need at least 2 nodes, got {n}")
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    mask = i != j
    return np.stack([i[mask], j[mask]], axis=1)


def zero_center_of_mass(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Subtract the mean position; returns (centered positions, mean)."""
    com = x.mean(axis=0)
    return x - com, com


def apply_rigid_transform(g: GeometricGraph, t: RigidTransform) -> GeometricGraph:
    """Rotate and translate positions, rotate velocities, leave h untouched."""
    return replace(g, x=g.x @ t.R.T + t.mu, v=g.v @ t.R.T)


def random_rotation(seed: int) -> RigidTransform:
    """Random rotation with mu = 0, via QR orthonormalization of a Gaussian.

    Degenerate (rank-deficient) samples are re-drawn from the same stream.
    """
    rng = np.random.default_rng(seed)
    while True:
        a = rng.normal(size=(3, 3))
        if np.linalg.matrix_rank(a) < 3:
            continue
        q, r = np.linalg.qr(a)
        q = q * np.where(np.diag(r) < 0, -1.0, 1.0)  # fix column signs for a canonical Q
        if np.linalg.det(q) < 0:
            q[:, -1] = -q[:, -1]
        return RigidTransform(q, np.zeros(3))
