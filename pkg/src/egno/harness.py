"""Training, evaluation and checkpointing for EGNO and its baselines.

Every run is fully determined by (RunConfig, seed, dataset): batch order is
a seeded permutation per epoch, the best-validation parameters are kept, and
reloading a checkpoint reproduces evaluation bit-exactly.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import tensor as T
from .baselines import (EgnnStackParams, egnn_seq_forward, egnn_stack_forward,
                        init_egnn_stack, rollout_predict)
from .dataio import CHECKPOINT_MAGIC, read_container, write_container
from .fourier import FeatureMask
from .model import (EgnoConfig, EgnoParams, compute_metrics, egno_forward_batch,
                    init_egno, trajectory_loss)
from .nbody import DatasetSplit, load_split
from .optim import AdamState, adam_step
from .tensor import Tensor

__all__ = [
    "RunConfig",
    "Checkpoint",
    "MetricsReport",
    "VARIANTS",
    "MASK_BY_VARIANT",
    "build_model",
    "train",
    "evaluate",
    "run_baseline",
    "save_checkpoint",
    "load_checkpoint",
    "checkpoint_roundtrip",
]

MASK_BY_VARIANT = {
    "egno": FeatureMask(True, True, True),
    "egno-mask-hx": FeatureMask(True, True, False),
    "egno-mask-h": FeatureMask(True, False, False),
    "egno-mask-none": FeatureMask(False, False, False),
}

VARIANTS = ("egno", "egnn", "egnn-roll", "egnn-seq",
            "egno-mask-hx", "egno-mask-h", "egno-mask-none")


@dataclass
class RunConfig:
    model: str = "egno"
    layers: int = 4
    hidden: int = 64
    modes: int = 2
    p_steps: int = 5
    time_emb: int = 32
    discretization: str = "uniform"
    delta: int = 1
    gated_z: bool = False
    supervise_velocity: bool = False
    lr: float = 1e-4
    weight_decay: float = 1e-8
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 100
    max_epochs: int = 1000
    patience: int = 50
    seed: int = 0
    train_size: int = 0        # 0 means the full training split
    data_dir: str = ""
    out_dir: str = ""

    def __post_init__(self):
        if self.model not in VARIANTS:
            raise ValueError(f"unknown model variant {self.model!r}; choose from {VARIANTS}")
        if self.batch_size < 1 or self.patience < 1:
            raise ValueError("batch_size and patience must be >= 1")

    def egno_config(self) -> EgnoConfig:
        return EgnoConfig(layers=self.layers, hidden=self.hidden, modes=self.modes,
                          p_steps=self.p_steps, time_emb=self.time_emb,
                          discretization=self.discretization, delta=self.delta,
                          mask=MASK_BY_VARIANT.get(self.model, FeatureMask()),
                          gated_z=self.gated_z,
                          supervise_velocity=self.supervise_velocity)

    @staticmethod
    def from_mapping(data: dict) -> "RunConfig":
        known = {f.name: f.type for f in fields(RunConfig)}
        unknown = set(data) - set(known)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return RunConfig(**data)


@dataclass
class MetricsReport:
    f_mse: float
    a_mse: float
    history: list[tuple[int, float, float]] = field(default_factory=list)
    wall_clock: float = 0.0
    config: dict = field(default_factory=dict)
    best_epoch: int = 0
    best_valid: float = float("nan")

    def metric_rows(self) -> list[tuple[str, float]]:
        return [("f_mse", self.f_mse), ("a_mse", self.a_mse),
                ("best_epoch", self.best_epoch), ("best_valid", self.best_valid),
                ("wall_clock", self.wall_clock)]


@dataclass
class Checkpoint:
    params: dict[str, np.ndarray]
    config: RunConfig
    seed: int
    epoch: int
    valid_loss: float


# ----------------------------------------------------------------------------
# variant wrappers: a uniform (loss_batch, decode_batch) interface
# ----------------------------------------------------------------------------

class _ModelBase:
    variant: str

    def __init__(self, run: RunConfig, split: DatasetSplit):
        self.run = run
        self.named: dict[str, Tensor] = {}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for name, arr in state.items():
            if name not in self.named:
                raise KeyError(f"checkpoint parameter '{name}' not in model")
            if self.named[name].shape != arr.shape:
                raise ValueError(f"parameter '{name}' shape {arr.shape} != {self.named[name].shape}")
            self.named[name].data[...] = arr
        missing = set(self.named) - set(state)
        if missing:
            raise KeyError(f"checkpoint is missing parameters: {sorted(missing)}")

    def state(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.named.items()}

    def loss_batch(self, split: DatasetSplit, idx: np.ndarray) -> Tensor:
        raise NotImplementedError

    def decode_batch(self, split: DatasetSplit, idx: np.ndarray
                     ) -> tuple[np.ndarray, np.ndarray]:
        """Returns (pred_x, target_x), both (steps, B, N, 3)."""
        raise NotImplementedError


def _batch_targets(split: DatasetSplit, idx: np.ndarray) -> np.ndarray:
    return split.target_x[idx].transpose(1, 0, 2, 3)  # (P, B, N, 3)


class _EgnoModel(_ModelBase):
    def __init__(self, run: RunConfig, split: DatasetSplit, zero_update: bool = False):
        super().__init__(run, split)
        self.variant = run.model
        if run.p_steps != split.p_steps:
            raise ValueError(f"config P={run.p_steps} but dataset has P={split.p_steps}")
        self.config = run.egno_config()
        self.grid = split.grid
        self.params = init_egno(run.seed, self.config, raw_feat_dim=1,
                                edge_attr_dim=1, zero_update=zero_update)
        self.named = self.params.named_parameters()

    def _forward(self, split: DatasetSplit, idx: np.ndarray):
        return egno_forward_batch(
            self.params, self.config, split.node_features()[idx], split.x0[idx],
            split.v0[idx], split.edges, split.edge_features()[idx], self.grid)

    def loss_batch(self, split, idx):
        pred_x, pred_v = self._forward(split, idx)
        return trajectory_loss(pred_x, _batch_targets(split, idx), pred_v,
                               split.target_v[idx].transpose(1, 0, 2, 3),
                               supervise_velocity=self.config.supervise_velocity)

    def decode_batch(self, split, idx):
        pred_x, _ = self._forward(split, idx)
        return pred_x.data, _batch_targets(split, idx)


class _EgnnModel(_ModelBase):
    """Single-shot prediction of the state at the end of the window."""

    def __init__(self, run: RunConfig, split: DatasetSplit, zero_update: bool = False):
        super().__init__(run, split)
        self.variant = "egnn"
        self.params = init_egnn_stack(run.seed, run.layers, run.hidden,
                                      zero_update=zero_update)
        self.named = self.params.named_parameters()

    def _forward(self, split, idx):
        return egnn_stack_forward(self.params, split.node_features()[idx],
                                  split.x0[idx], split.v0[idx], split.edges,
                                  split.edge_features()[idx])

    def loss_batch(self, split, idx):
        pred_x, _ = self._forward(split, idx)
        return trajectory_loss(pred_x, split.target_x[idx][:, -1])

    def decode_batch(self, split, idx):
        pred_x, _ = self._forward(split, idx)
        return pred_x.data[None], split.target_x[idx][:, -1][None]


class _EgnnRollModel(_ModelBase):
    """Single-step model on the shortest span, decoded by iterated rollout."""

    def __init__(self, run: RunConfig, split: DatasetSplit, zero_update: bool = False):
        super().__init__(run, split)
        self.variant = "egnn-roll"
        if split.mode != "uniform":
            raise ValueError("rollout training needs uniformly spaced targets")
        self.params = init_egnn_stack(run.seed, run.layers, run.hidden,
                                      zero_update=zero_update)
        self.named = self.params.named_parameters()

    def loss_batch(self, split, idx):
        pred_x, _ = egnn_stack_forward(self.params, split.node_features()[idx],
                                       split.x0[idx], split.v0[idx], split.edges,
                                       split.edge_features()[idx])
        return trajectory_loss(pred_x, split.target_x[idx][:, 0])

    def decode_batch(self, split, idx):
        edge_feat = split.edge_features()[idx]
        edges = split.edges

        def step(x, v):
            h = np.linalg.norm(v, axis=-1, keepdims=True)
            px, pv = egnn_stack_forward(self.params, h, x, v, edges, edge_feat)
            return px.data, pv.data

        pred_x, _ = rollout_predict(step, split.x0[idx], split.v0[idx], split.p_steps)
        return pred_x, _batch_targets(split, idx)


class _EgnnSeqModel(_ModelBase):
    """One decoded frame per message-passing layer, read from the tail."""

    def __init__(self, run: RunConfig, split: DatasetSplit, zero_update: bool = False):
        super().__init__(run, split)
        self.variant = "egnn-seq"
        if run.layers < run.p_steps:
            raise ValueError(
                f"egnn-seq needs at least P={run.p_steps} layers, got {run.layers}")
        if run.p_steps != split.p_steps:
            raise ValueError(f"config P={run.p_steps} but dataset has P={split.p_steps}")
        self.params = init_egnn_stack(run.seed, run.layers, run.hidden,
                                      zero_update=zero_update)
        self.named = self.params.named_parameters()

    def _forward(self, split, idx):
        return egnn_seq_forward(self.params, split.node_features()[idx],
                                split.x0[idx], split.v0[idx], split.edges,
                                split.edge_features()[idx], split.p_steps)

    def loss_batch(self, split, idx):
        pred_x, _ = self._forward(split, idx)
        return trajectory_loss(pred_x, _batch_targets(split, idx))

    def decode_batch(self, split, idx):
        pred_x, _ = self._forward(split, idx)
        return pred_x.data, _batch_targets(split, idx)


_MODEL_CLASSES = {
    "egno": _EgnoModel,
    "egno-mask-hx": _EgnoModel,
    "egno-mask-h": _EgnoModel,
    "egno-mask-none": _EgnoModel,
    "egnn": _EgnnModel,
    "egnn-roll": _EgnnRollModel,
    "egnn-seq": _EgnnSeqModel,
}


def build_model(run: RunConfig, split: DatasetSplit, zero_update: bool = False) -> _ModelBase:
    if run.model not in _MODEL_CLASSES:
        raise ValueError(f"unknown model variant {run.model!r}")
    return _MODEL_CLASSES[run.model](run, split, zero_update=zero_update)


# ----------------------------------------------------------------------------
# training and evaluation
# ----------------------------------------------------------------------------

def _batches(n: int, batch_size: int, order: np.ndarray | None = None):
    idx = np.arange(n) if order is None else order
    for start in range(0, n, batch_size):
        yield idx[start:start + batch_size]


def _mean_loss(model: _ModelBase, split: DatasetSplit, batch_size: int) -> float:
    total, count = 0.0, 0
    with T.no_grad():
        for idx in _batches(split.n_samples, batch_size):
            total += float(model.loss_batch(split, idx).data) * len(idx)
            count += len(idx)
    return total / count


def load_splits(data_dir: str) -> dict[str, DatasetSplit]:
    from pathlib import Path
    out = {}
    for name in ("train", "valid", "test"):
        path = Path(data_dir) / f"{name}.egnodset"
        if not path.exists():
            raise FileNotFoundError(f"missing dataset split file {path}")
        out[name] = load_split(path)
    return out


def train(run: RunConfig, splits: dict[str, DatasetSplit] | None = None,
          log: bool = False) -> tuple[Checkpoint, MetricsReport]:
    """Mini-batch Adam on the variant's loss with best-validation early stopping."""
    t_start = time.perf_counter()
    if splits is None:
        splits = load_splits(run.data_dir)
    train_split = splits["train"]
    if run.train_size:
        train_split = train_split.subset(run.train_size)
    valid_split, test_split = splits["valid"], splits["test"]

    model = build_model(run, train_split)
    state = AdamState(lr=run.lr, weight_decay=run.weight_decay, beta1=run.beta1,
                      beta2=run.beta2, eps=run.eps)
    state.ensure(model.named)

    history: list[tuple[int, float, float]] = []
    best_valid = float("inf")
    best_state: dict[str, np.ndarray] = model.state()
    best_epoch = 0
    since_best = 0
    for epoch in range(1, run.max_epochs + 1):
        order = np.random.default_rng([run.seed, epoch]).permutation(train_split.n_samples)
        train_total = 0.0
        for idx in _batches(train_split.n_samples, run.batch_size, order):
            loss = model.loss_batch(train_split, idx)
            T.backward(loss)
            grads = {}
            for name, p in model.named.items():
                grads[name] = p.grad if p.grad is not None else np.zeros(p.shape)
                p.grad = None
            adam_step(model.named, grads, state)
            train_total += float(loss.data) * len(idx)
        train_loss = train_total / train_split.n_samples
        valid_loss = _mean_loss(model, valid_split, run.batch_size)
        history.append((epoch, train_loss, valid_loss))
        if log:
            print(f"epoch {epoch:4d}  train {train_loss:.6f}  valid {valid_loss:.6f}")
        if valid_loss < best_valid:
            best_valid = valid_loss
            best_state = model.state()
            best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= run.patience:
                break

    model.load_state(best_state)
    ckpt = Checkpoint(params=best_state, config=run, seed=run.seed,
                      epoch=best_epoch, valid_loss=best_valid)
    test_metrics = _evaluate_model(model, test_split, run.batch_size)
    report = MetricsReport(f_mse=test_metrics["f_mse"], a_mse=test_metrics["a_mse"],
                           history=history, wall_clock=time.perf_counter() - t_start,
                           config=asdict(run), best_epoch=best_epoch,
                           best_valid=best_valid)
    return ckpt, report


def _evaluate_model(model: _ModelBase, split: DatasetSplit, batch_size: int) -> dict[str, float]:
    sq_sums = None
    count = 0
    with T.no_grad():
        for idx in _batches(split.n_samples, batch_size):
            pred_x, target_x = model.decode_batch(split, idx)
            sq = (pred_x - target_x) ** 2
            per_step = sq.reshape(sq.shape[0], -1).sum(axis=1)
            sq_sums = per_step if sq_sums is None else sq_sums + per_step
            count += sq[0].size
    per_step_mse = sq_sums / count
    return {"f_mse": float(per_step_mse[-1]), "a_mse": float(per_step_mse.mean()),
            "per_step": per_step_mse}


def evaluate(ckpt: Checkpoint, split: DatasetSplit) -> MetricsReport:
    """Metrics of a checkpointed model over one dataset split."""
    run = ckpt.config
    if run.model not in ("egnn", "egnn-roll") and run.p_steps != split.p_steps:
        raise ValueError(f"checkpoint P={run.p_steps} but dataset has P={split.p_steps}")
    model = build_model(run, split)
    model.load_state(ckpt.params)
    metrics = _evaluate_model(model, split, run.batch_size)
    return MetricsReport(f_mse=metrics["f_mse"], a_mse=metrics["a_mse"],
                         config=asdict(run), best_epoch=ckpt.epoch,
                         best_valid=ckpt.valid_loss)


def run_baseline(variant: str, run: RunConfig,
                 splits: dict[str, DatasetSplit] | None = None,
                 log: bool = False) -> tuple[Checkpoint, MetricsReport]:
    """Train and evaluate one of the comparison variants."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; choose from {VARIANTS}")
    return train(replace(run, model=variant), splits=splits, log=log)


# ----------------------------------------------------------------------------
# checkpoint persistence
# ----------------------------------------------------------------------------

def save_checkpoint(ckpt: Checkpoint, path) -> None:
    header = {
        "kind": "checkpoint",
        "config": asdict(ckpt.config),
        "seed": ckpt.seed,
        "epoch": ckpt.epoch,
        "valid_loss": ckpt.valid_loss,
    }
    write_container(path, CHECKPOINT_MAGIC, header, ckpt.params)


def load_checkpoint(path) -> Checkpoint:
    header, arrays = read_container(path, CHECKPOINT_MAGIC)
    return Checkpoint(params=arrays, config=RunConfig.from_mapping(header["config"]),
                      seed=header["seed"], epoch=header["epoch"],
                      valid_loss=header["valid_loss"])


def checkpoint_roundtrip(ckpt: Checkpoint, path) -> Checkpoint:
    """Save then reload; the identity on every parameter bit."""
    save_checkpoint(ckpt, path)
    return load_checkpoint(path)
