"""Second pilot: isolate the EGNO/EGNN gap source and find the convergence
endpoint at a longer budget."""
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
splits = generate_dataset(sim, {"train": 1000, "valid": 500, "test": 500},
                          window=10, p=5, master_seed=7)
print("dataset ready", flush=True)

runs = [
    ("mask_none_lr1e-3_e200", RunConfig(model="egno-mask-none", lr=1e-3,
                                        max_epochs=200, patience=50, seed=0)),
    ("egnn_lr1e-3_e600", RunConfig(model="egnn", lr=1e-3, max_epochs=600,
                                   patience=50, seed=0)),
    ("egno_lr1e-3_e600", RunConfig(model="egno", lr=1e-3, max_epochs=600,
                                   patience=50, seed=0)),
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
print("pilot2 done", flush=True)
