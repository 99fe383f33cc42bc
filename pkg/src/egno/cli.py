"""Command line entry points: gen, train, eval, ablate, super-res.

Config files are flat `key = value` lines whose keys mirror the dataclass
field names; # starts a comment. Command line flags override file values.
"""
from __future__ import annotations

import argparse
import json
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .geometry import GeometricGraph
from .harness import (MetricsReport, RunConfig, build_model, evaluate,
                      load_checkpoint, load_splits, save_checkpoint, train)
from .model import decode_super_resolution, egno_forward
from .nbody import SimConfig, generate_dataset, save_split
from .report import (plot_loss_curves, plot_step_errors, plot_trajectories,
                     write_history_csv, write_metrics_csv)

__all__ = ["GenConfig", "parse_kv_file", "main"]


@dataclass
class GenConfig:
    """Dataset generation settings: simulator constants plus sample layout."""

    n_particles: int = 5
    position_std: float = 1.0
    velocity_norm: float = 0.5
    softening: float = 1e-2
    friction: float = 0.0
    dt_sim: float = 1e-3
    record_stride: int = 100
    window: int = 10
    p_steps: int = 5
    mode: str = "uniform"
    delta: int = 1
    train: int = 3000
    valid: int = 2000
    test: int = 2000
    seed: int = 0

    def sim(self) -> SimConfig:
        return SimConfig(n_particles=self.n_particles, position_std=self.position_std,
                         velocity_norm=self.velocity_norm, softening=self.softening,
                         friction=self.friction, dt_sim=self.dt_sim,
                         record_stride=self.record_stride, frames=self.window + 1,
                         seed=self.seed)


def parse_kv_file(path) -> dict:
    """Parse `key = value` lines; values go through JSON with string fallback."""
    out: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def _fill(cls, data: dict, overrides: dict):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config keys for {cls.__name__}: {sorted(unknown)}")
    merged = dict(data)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return cls(**merged)


def _write_report(report: MetricsReport, out_dir: Path, prefix: str = "") -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(out_dir / f"{prefix}metrics.csv", report.metric_rows())
    if report.history:
        write_history_csv(out_dir / f"{prefix}history.csv", report.history)
        plot_loss_curves(report.history, out_dir / f"{prefix}loss_curves.png")


def _cmd_gen(args) -> None:
    data = parse_kv_file(args.config) if args.config else {}
    cfg = _fill(GenConfig, data, {"seed": args.seed, "train": args.train_size})
    counts = {"train": cfg.train, "valid": cfg.valid, "test": cfg.test}
    splits = generate_dataset(cfg.sim(), counts, cfg.window, cfg.p_steps,
                              mode=cfg.mode, delta=cfg.delta, master_seed=cfg.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, split in splits.items():
        save_split(split, out / f"{name}.egnodset")
        print(f"wrote {name}: {split.n_samples} samples -> {out / f'{name}.egnodset'}")


def _run_overrides(args) -> dict:
    return {
        "seed": args.seed,
        "model": args.model,
        "p_steps": args.p_steps,
        "modes": args.modes,
        "discretization": args.discretization,
        "train_size": args.train_size,
        "data_dir": args.data,
        "out_dir": args.out,
    }


def _cmd_train(args) -> None:
    data = parse_kv_file(args.config) if args.config else {}
    run = _fill(RunConfig, data, _run_overrides(args))
    ckpt, report = train(run, log=not args.quiet)
    out = Path(run.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(ckpt, out / "checkpoint.egnockpt")
    _write_report(report, out)
    print(f"best epoch {report.best_epoch}  valid {report.best_valid:.6f}  "
          f"test f_mse {report.f_mse:.6f}  a_mse {report.a_mse:.6f}")


def _cmd_eval(args) -> None:
    ckpt = load_checkpoint(args.checkpoint)
    splits = load_splits(args.data)
    split = splits[args.split]
    report = evaluate(ckpt, split)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(out / "metrics.csv", report.metric_rows())
    model = build_model(ckpt.config, split)
    model.load_state(ckpt.params)
    pred_x, target_x = model.decode_batch(split, np.arange(split.n_samples))
    per_step = ((pred_x - target_x) ** 2).reshape(pred_x.shape[0], -1).mean(axis=1)
    offsets = split.offsets[-len(per_step):]
    write_metrics_csv(out / "per_step_mse.csv",
                      [(f"mse_at_offset_{o:g}", m) for o, m in zip(offsets, per_step)])
    plot_step_errors(offsets, per_step, out / "per_step_mse.png")
    print(f"{args.split}: f_mse {report.f_mse:.6f}  a_mse {report.a_mse:.6f}")


def _cmd_ablate(args) -> None:
    data = parse_kv_file(args.config) if args.config else {}
    base = _fill(RunConfig, data, _run_overrides(args))
    out = Path(base.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    splits = load_splits(base.data_dir)
    rows = []
    for variant in ("egno", "egno-mask-hx", "egno-mask-h", "egno-mask-none", "egnn"):
        run = _fill(RunConfig, {**data, "model": variant},
                    {k: v for k, v in _run_overrides(args).items() if k != "model"})
        ckpt, report = train(run, splits=splits, log=not args.quiet)
        sub = out / variant
        sub.mkdir(exist_ok=True)
        save_checkpoint(ckpt, sub / "checkpoint.egnockpt")
        _write_report(report, sub)
        rows.append((variant, report.f_mse, report.a_mse))
        print(f"{variant}: f_mse {report.f_mse:.6f}  a_mse {report.a_mse:.6f}")
    lines = ["variant,f_mse,a_mse"]
    lines += [f"{v},{f!r},{a!r}" for v, f, a in rows]
    (out / "ablation.csv").write_text("\n".join(lines) + "\n")


def _cmd_super_res(args) -> None:
    ckpt = load_checkpoint(args.checkpoint)
    if not ckpt.config.model.startswith("egno"):
        raise ValueError(f"super-resolution decoding needs an EGNO checkpoint, got {ckpt.config.model}")
    splits = load_splits(args.data)
    split = splits[args.split]
    model = build_model(ckpt.config, split)
    model.load_state(ckpt.params)
    config, params, grid = model.config, model.params, model.grid
    factor = args.factor

    fine = None
    sq_fine = None
    count = 0
    for s in range(split.n_samples):
        g = GeometricGraph(h=split.node_features()[s], x=split.x0[s], v=split.v0[s],
                           edges=split.edges, edge_attr=split.edge_features()[s])
        fine, pred_x, _ = decode_super_resolution(params, config, g, grid, factor)
        shared = np.array([np.any(np.isclose(o, split.offsets)) for o in fine.offsets])
        sq = (pred_x[shared] - split.target_x[s]) ** 2
        per = sq.reshape(sq.shape[0], -1).mean(axis=1)
        sq_fine = per if sq_fine is None else sq_fine + per
        count += 1
        if s == 0:
            coarse_x, _ = egno_forward(params, config, g, grid)
            out = Path(args.out or ".")
            out.mkdir(parents=True, exist_ok=True)
            plot_trajectories(split.target_x[s],
                              {"P decode": coarse_x, f"{factor}P decode": pred_x},
                              out / "super_res_sample.png")
    shared_mse = sq_fine / count
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    rows = [("grid", " ".join(f"{o:g}" for o in fine.offsets))]
    rows += [(f"shared_mse_at_offset_{o:g}", m)
             for o, m in zip(split.offsets, shared_mse)]
    rows += [("shared_a_mse", float(shared_mse.mean()))]
    lines = ["metric,value"] + [f"{k},{v if isinstance(v, str) else repr(float(v))}"
                                for k, v in rows]
    (out / "super_res.csv").write_text("\n".join(lines) + "\n")
    print(f"decoded {factor}P grid: {fine.offsets.tolist()}")
    print(f"shared-offset A-MSE: {float(shared_mse.mean()):.6f}")


def main(argv: list[str] | None = None) -> None:
    parser = argparse.ArgumentParser(prog="egno",
                                     description="charged N-body neural operator workbench")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, checkpoint=False):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--data", default=None, help="dataset directory")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--model", default=None)
        p.add_argument("--p-steps", dest="p_steps", type=int, default=None)
        p.add_argument("--modes", type=int, default=None)
        p.add_argument("--discretization", choices=("uniform", "last"), default=None)
        p.add_argument("--train-size", dest="train_size", type=int, default=None)
        p.add_argument("--quiet", action="store_true")
        if checkpoint:
            p.add_argument("--checkpoint", required=True)

    p_gen = sub.add_parser("gen", help="simulate trajectories and write dataset splits")
    p_gen.add_argument("--config", help="key = value config file")
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--seed", type=int, default=None)
    p_gen.add_argument("--train-size", dest="train_size", type=int, default=None)
    p_gen.set_defaults(func=_cmd_gen)

    p_train = sub.add_parser("train", help="train a model variant")
    common(p_train)
    p_train.set_defaults(func=_cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    common(p_eval, checkpoint=True)
    p_eval.add_argument("--split", choices=("train", "valid", "test"), default="test")
    p_eval.set_defaults(func=_cmd_eval)

    p_abl = sub.add_parser("ablate", help="train the feature-mask variants and EGNN")
    common(p_abl)
    p_abl.set_defaults(func=_cmd_ablate)

    p_sr = sub.add_parser("super-res", help="decode a trained model at a finer grid")
    common(p_sr, checkpoint=True)
    p_sr.add_argument("--split", choices=("train", "valid", "test"), default="test")
    p_sr.add_argument("--factor", type=int, default=2)
    p_sr.set_defaults(func=_cmd_super_res)

    args = parser.parse_args(argv)
    args.func(args)


if __name__ == "__main__":
    main()
