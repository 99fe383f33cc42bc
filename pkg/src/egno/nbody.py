"""Charged N-body ground truth: Coulomb interactions integrated with
velocity Verlet, recorded on a fixed frame grid, and packaged into
state-to-trajectory samples.

Unit masses and unit interaction strength throughout; charges are +-1. The
force is softened by adding a length to the distance in the denominator,
which keeps close encounters finite and leaves a closed-form potential for
energy checks."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .dataio import DATASET_MAGIC, read_container, write_container
from .geometry import Trajectory, build_fully_connected_edges
from .model import TimeGrid

__all__ = [
    "SimConfig",
    "DatasetSplit",
    "coulomb_accelerations",
    "softened_potential_energy",
    "simulate_trajectory",
    "sample_initial_conditions",
    "discretize_window",
    "generate_dataset",
    "save_split",
    "load_split",
    "SPLIT_NAMES",
]

SPLIT_NAMES = ("train", "valid", "test")


@dataclass(frozen=True)
class SimConfig:
    n_particles: int = 5
    position_std: float = 1.0
    velocity_norm: float = 0.5
    softening: float = 1e-2
    friction: float = 0.0
    dt_sim: float = 1e-3
    record_stride: int = 100
    frames: int = 11
    seed: int = 0

    def __post_init__(self):
        if self.dt_sim <= 0 or self.softening <= 0:
            raise ValueError("dt_sim and softening must be positive")
        if self.record_stride < 1 or self.frames < 1:
            raise ValueError("record_stride and frames must be >= 1")
        if self.friction < 0:
            raise ValueError("friction must be nonnegative")


def coulomb_accelerations(x: np.ndarray, q: np.ndarray, softening: float) -> np.ndarray:
    """a_i = sum_{j != i} q_i q_j (x_i - x_j) / (|x_i - x_j| + eps)^3.

    Accepts (N, 3) with (N,) charges or any batched (..., N, 3) layout.
    Like charges repel; equal masses make the accelerations sum to zero.
    """
    if softening <= 0:
        raise ValueError("softening must be positive")
    diff = x[..., :, None, :] - x[..., None, :, :]          # (..., N, N, 3)
    dist = np.sqrt(np.sum(diff * diff, axis=-1))            # (..., N, N)
    denom = (dist + softening) ** 3
    idx = np.arange(x.shape[-2])
    denom[..., idx, idx] = 1.0
    qq = q[..., :, None] * q[..., None, :]
    qq[..., idx, idx] = 0.0
    return np.sum((qq / denom)[..., None] * diff, axis=-2)


def softened_potential_energy(x: np.ndarray, q: np.ndarray, softening: float) -> float:
    """Pair potential whose negative gradient is the softened Coulomb force:
    U(r) = q_i q_j (1/(r+eps) - eps / (2 (r+eps)^2)), summed over i < j."""
    n = x.shape[0]
    i, j = np.triu_indices(n, k=1)
    r = np.linalg.norm(x[i] - x[j], axis=-1)
    re = r + softening
    return float(np.sum(q[i] * q[j] * (1.0 / re - softening / (2.0 * re ** 2))))


def _integrate(x: np.ndarray, v: np.ndarray, q: np.ndarray,
               config: SimConfig) -> tuple[np.ndarray, np.ndarray]:
    """Record frames of a kick-drift-kick velocity Verlet run.

    Friction enters the acceleration as -gamma * v, evaluated at the
    half-step velocity in the closing kick. Works on (N, 3) or batched
    (B, N, 3) states identically.
    """
    dt = config.dt_sim
    gamma = config.friction
    eps = config.softening
    n_steps = (config.frames - 1) * config.record_stride
    xs = np.empty((config.frames,) + x.shape)
    vs = np.empty((config.frames,) + v.shape)
    xs[0], vs[0] = x, v
    frame = 1
    acc = coulomb_accelerations(x, q, eps) - gamma * v
    for step in range(1, n_steps + 1):
        v_half = v + 0.5 * dt * acc
        x = x + dt * v_half
        acc = coulomb_accelerations(x, q, eps) - gamma * v_half
        v = v_half + 0.5 * dt * acc
        if not np.all(np.isfinite(x)) or not np.all(np.isfinite(v)):
            raise FloatingPointError(f"simulation blew up at step {step}")
        if step % config.record_stride == 0:
            xs[frame], vs[frame] = x, v
            frame += 1
    return xs, vs


def simulate_trajectory(x0: np.ndarray, v0: np.ndarray, q: np.ndarray,
                        config: SimConfig) -> Trajectory:
    """Integrate one system and record every record_stride-th step, the
    initial state included; frame times count recorded frames."""
    xs, vs = _integrate(x0, v0, q, config)
    return Trajectory(xs, vs, np.arange(config.frames))


def sample_initial_conditions(rng: np.random.Generator, config: SimConfig
                              ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gaussian positions, unit-speed-rescaled Gaussian velocities, +-1 charges."""
    n = config.n_particles
    q = rng.integers(0, 2, size=n) * 2.0 - 1.0
    x0 = rng.normal(0.0, config.position_std, size=(n, 3))
    raw = rng.normal(size=(n, 3))
    v0 = raw / np.linalg.norm(raw, axis=1, keepdims=True) * config.velocity_norm
    return x0, v0, q


def discretize_window(traj: Trajectory, t: int, window: int, p: int,
                      mode: str = "uniform", delta: int = 1
                      ) -> tuple[TimeGrid, np.ndarray, np.ndarray]:
    """Pick P target frames inside [t, t + window] on the recorded grid.

    uniform: offsets (p'/P) * window, requiring divisibility; last: offsets
    window - delta*(P - p'). Ground truth is never interpolated, so offsets
    must land exactly on recorded frames.
    """
    if mode == "uniform":
        if window % p != 0:
            raise ValueError(
                f"uniform discretization needs P | window, got window={window}, P={p}")
        grid = TimeGrid.uniform(window, p)
    elif mode == "last":
        grid = TimeGrid.last(window, p, delta)
    else:
        raise ValueError(f"unknown discretization mode {mode!r}")
    frames = t + grid.offsets
    if frames[-1] > traj.n_frames - 1:
        raise ValueError(
            f"window end {frames[-1]} beyond recorded frames 0..{traj.n_frames - 1}")
    frame_idx = frames.astype(int)
    if np.any(frame_idx != frames):
        raise ValueError(f"offsets {grid.offsets} do not land on recorded frames")
    return grid, traj.x[frame_idx], traj.v[frame_idx]


@dataclass
class DatasetSplit:
    """One split of state-to-trajectory samples plus generation metadata."""

    split: str
    charges: np.ndarray    # (S, N)
    x0: np.ndarray         # (S, N, 3)
    v0: np.ndarray         # (S, N, 3)
    target_x: np.ndarray   # (S, P, N, 3)
    target_v: np.ndarray   # (S, P, N, 3)
    offsets: np.ndarray    # (P,)
    sim: SimConfig
    master_seed: int
    window: int
    mode: str = "uniform"
    delta: int = 1
    _edges: np.ndarray | None = field(default=None, repr=False)
    _node_feat: np.ndarray | None = field(default=None, repr=False)
    _edge_feat: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_samples(self) -> int:
        return self.x0.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.x0.shape[1]

    @property
    def p_steps(self) -> int:
        return self.target_x.shape[1]

    @property
    def edges(self) -> np.ndarray:
        if self._edges is None:
            self._edges = build_fully_connected_edges(self.n_nodes)
        return self._edges

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.offsets, np.arange(1, self.p_steps + 1, dtype=float))

    def node_features(self) -> np.ndarray:
        """Input h: the velocity magnitude per particle, shape (S, N, 1)."""
        if self._node_feat is None:
            self._node_feat = np.linalg.norm(self.v0, axis=-1, keepdims=True)
        return self._node_feat

    def edge_features(self) -> np.ndarray:
        """Charge products q_i q_j per directed edge, shape (S, E, 1)."""
        if self._edge_feat is None:
            i, j = self.edges[:, 0], self.edges[:, 1]
            self._edge_feat = (self.charges[:, i] * self.charges[:, j])[..., None]
        return self._edge_feat

    def static_f_mse(self) -> float:
        """MSE of predicting the input positions unchanged at the final step."""
        return float(np.mean((self.x0[:, None] - self.target_x[:, -1:]) ** 2))

    def subset(self, k: int) -> "DatasetSplit":
        if not 1 <= k <= self.n_samples:
            raise ValueError(f"subset size {k} outside [1, {self.n_samples}]")
        return DatasetSplit(self.split, self.charges[:k], self.x0[:k], self.v0[:k],
                            self.target_x[:k], self.target_v[:k], self.offsets,
                            self.sim, self.master_seed, self.window, self.mode, self.delta)


def _split_code(split: str) -> int:
    return SPLIT_NAMES.index(split)


def generate_dataset(sim: SimConfig, counts: dict[str, int], window: int,
                     p: int, mode: str = "uniform", delta: int = 1,
                     master_seed: int = 0) -> dict[str, DatasetSplit]:
    """Simulate counts[split] trajectories per split and cut one sample each.

    Every trajectory draws its initial conditions from a seed derived from
    (master_seed, split, index), so any subset regenerates identically and
    parallel generation cannot change the data.
    """
    if window >= sim.frames:
        raise ValueError(f"window {window} needs frames > window, got {sim.frames}")
    out: dict[str, DatasetSplit] = {}
    for split, count in counts.items():
        code = _split_code(split)
        ics = [sample_initial_conditions(
            np.random.default_rng([master_seed, code, i]), sim) for i in range(count)]
        x0 = np.stack([ic[0] for ic in ics])
        v0 = np.stack([ic[1] for ic in ics])
        q = np.stack([ic[2] for ic in ics])
        xs, vs = _integrate(x0, v0, q, sim)     # (frames, S, N, 3)
        traj_x = xs.swapaxes(0, 1)              # (S, frames, N, 3)
        traj_v = vs.swapaxes(0, 1)
        grid = TimeGrid.uniform(window, p) if mode == "uniform" else TimeGrid.last(window, p, delta)
        frame_idx = grid.offsets.astype(int)
        if np.any(frame_idx != grid.offsets):
            raise ValueError(f"offsets {grid.offsets} do not land on recorded frames")
        out[split] = DatasetSplit(
            split=split, charges=q, x0=x0, v0=v0,
            target_x=traj_x[:, frame_idx], target_v=traj_v[:, frame_idx],
            offsets=grid.offsets.astype(float), sim=sim, master_seed=master_seed,
            window=window, mode=mode, delta=delta)
    return out


def save_split(split: DatasetSplit, path) -> None:
    header = {
        "kind": "nbody-dataset",
        "split": split.split,
        "seed": split.master_seed,
        "window": split.window,
        "mode": split.mode,
        "delta": split.delta,
        "offsets": [float(o) for o in split.offsets],
        "sim": asdict(split.sim),
    }
    arrays = {
        "charges": split.charges,
        "x0": split.x0,
        "v0": split.v0,
        "target_x": split.target_x,
        "target_v": split.target_v,
    }
    write_container(path, DATASET_MAGIC, header, arrays)


def load_split(path) -> DatasetSplit:
    header, arrays = read_container(path, DATASET_MAGIC)
    return DatasetSplit(
        split=header["split"], charges=arrays["charges"], x0=arrays["x0"],
        v0=arrays["v0"], target_x=arrays["target_x"], target_v=arrays["target_v"],
        offsets=np.asarray(header["offsets"]), sim=SimConfig(**header["sim"]),
        master_seed=header["seed"], window=header["window"],
        mode=header["mode"], delta=header["delta"])
