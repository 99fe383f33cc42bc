"""Delimited metric output plus rendered figures.

Every report path writes machine-readable CSV first and a matplotlib figure
next to it. Floats are serialized with repr, so rewriting identical results
yields identical bytes.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "write_metrics_csv",
    "write_history_csv",
    "plot_loss_curves",
    "plot_step_errors",
    "plot_trajectories",
]


def _fmt(value) -> str:
    return repr(float(value)) if isinstance(value, (float, np.floating)) else str(value)


def write_metrics_csv(path, rows: list[tuple[str, float]]) -> None:
    """metric,value rows; one line per reported quantity."""
    lines = ["metric,value"] + [f"{name},{_fmt(value)}" for name, value in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def write_history_csv(path, history: list[tuple[int, float, float]]) -> None:
    """epoch,train_loss,valid_loss rows."""
    lines = ["epoch,train_loss,valid_loss"]
    lines += [f"{e},{_fmt(tr)},{_fmt(va)}" for e, tr, va in history]
    Path(path).write_text("\n".join(lines) + "\n")


def plot_loss_curves(history: list[tuple[int, float, float]], path) -> None:
    if not history:
        return
    epochs, train, valid = zip(*history)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, train, label="train")
    ax.plot(epochs, valid, label="valid")
    ax.set_yscale("log")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_step_errors(offsets: np.ndarray, per_step_mse: np.ndarray, path,
                     label: str = "MSE") -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(offsets, per_step_mse, marker="o")
    ax.set_xlabel("frame offset")
    ax.set_ylabel(label)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_trajectories(truth: np.ndarray, decoded: dict[str, np.ndarray], path) -> None:
    """xy projection of one sample: ground truth frames against decodes.

    truth and each decode are (steps, N, 3) position arrays.
    """
    fig, ax = plt.subplots(figsize=(6, 6))
    n = truth.shape[1]
    colors = plt.cm.tab10(np.linspace(0, 1, n))
    for i in range(n):
        ax.plot(truth[:, i, 0], truth[:, i, 1], "-", color=colors[i], alpha=0.8,
                label="truth" if i == 0 else None)
    markers = ["o", "x", "s", "^"]
    for m, (name, pred) in zip(markers, decoded.items()):
        for i in range(n):
            ax.plot(pred[:, i, 0], pred[:, i, 1], m, color=colors[i], ms=4,
                    alpha=0.7, label=name if i == 0 else None)
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
