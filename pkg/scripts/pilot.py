"""Convergence pilot for the desk-scale comparison protocol."""
import json
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from egno.harness import RunConfig, train
from egno.nbody import SimConfig, generate_dataset

OUT = Path(__file__).resolve().parent / "pilot_out"
OUT.mkdir(exist_ok=True)

sim = SimConfig(frames=11, seed=0)
t0 = time.perf_counter()
splits = generate_dataset(sim, {"train": 1000, "valid": 500, "test": 500},
                          window=10, p=5, master_seed=7)
print(f"dataset: {time.perf_counter() - t0:.1f}s  static f_mse "
      f"{splits['test'].static_f_mse():.5f}", flush=True)

runs = [
    ("egno_lr1e-3", RunConfig(model="egno", lr=1e-3, max_epochs=200, patience=50, seed=0)),
    ("egnn_lr1e-3", RunConfig(model="egnn", lr=1e-3, max_epochs=200, patience=50, seed=0)),
    ("egnn_lr1e-4", RunConfig(model="egnn", lr=1e-4, max_epochs=200, patience=50, seed=0)),
    ("egno_lr3e-4", RunConfig(model="egno", lr=3e-4, max_epochs=200, patience=50, seed=0)),
]
for name, run in runs:
    t0 = time.perf_counter()
    ckpt, report = train(run, splits=splits)
    dt = time.perf_counter() - t0
    payload = {"name": name, "f_mse": report.f_mse, "a_mse": report.a_mse,
               "best_epoch": report.best_epoch, "best_valid": report.best_valid,
               "wall": dt, "history": report.history}
    (OUT / f"{name}.json").write_text(json.dumps(payload))
    print(f"{name}: f_mse {report.f_mse:.5f}  a_mse {report.a_mse:.5f}  "
          f"best_epoch {report.best_epoch}  wall {dt/60:.1f} min", flush=True)
print("pilot done", flush=True)
