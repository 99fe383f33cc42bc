"""Training harness: smoke runs, determinism, baselines, checkpoints."""
from dataclasses import replace

import numpy as np
import pytest

from egno.baselines import rollout_predict
from egno.harness import (RunConfig, build_model, checkpoint_roundtrip, evaluate,
                          load_checkpoint, run_baseline, save_checkpoint, train)

TINY = RunConfig(model="egno", layers=2, hidden=8, modes=2, p_steps=5, time_emb=4,
                 lr=1e-3, batch_size=20, max_epochs=8, patience=50, seed=0)


def test_training_reduces_loss(tiny_splits):
    _, report = train(TINY, splits=tiny_splits)
    assert report.history[-1][1] < report.history[0][1]
    assert len(report.history) == 8
    assert np.isfinite(report.f_mse) and np.isfinite(report.a_mse)


def test_run_is_bit_deterministic(tiny_splits):
    ckpt1, rep1 = train(TINY, splits=tiny_splits)
    ckpt2, rep2 = train(TINY, splits=tiny_splits)
    assert rep1.f_mse == rep2.f_mse and rep1.a_mse == rep2.a_mse
    assert rep1.history == rep2.history
    assert all(np.array_equal(ckpt1.params[k], ckpt2.params[k]) for k in ckpt1.params)


def test_checkpoint_reload_reproduces_evaluation(tiny_splits, tmp_path):
    ckpt, report = train(TINY, splits=tiny_splits)
    path = tmp_path / "model.egnockpt"
    reloaded = checkpoint_roundtrip(ckpt, path)
    for name in ckpt.params:
        assert np.array_equal(ckpt.params[name], reloaded.params[name])
    again = evaluate(reloaded, tiny_splits["test"])
    assert again.f_mse == report.f_mse
    assert again.a_mse == report.a_mse


def test_evaluate_twice_identical(tiny_splits):
    ckpt, _ = train(TINY, splits=tiny_splits)
    r1 = evaluate(ckpt, tiny_splits["test"])
    r2 = evaluate(ckpt, tiny_splits["test"])
    assert (r1.f_mse, r1.a_mse) == (r2.f_mse, r2.a_mse)


def test_best_checkpoint_never_worse_than_history(tiny_splits):
    _, report = train(replace(TINY, max_epochs=12), splits=tiny_splits)
    assert report.best_valid == min(v for _, _, v in report.history)


def test_early_stopping_halts(tiny_splits):
    run = replace(TINY, max_epochs=200, patience=2, lr=0.0)  # valid loss frozen
    _, report = train(run, splits=tiny_splits)
    assert len(report.history) == 1 + run.patience


def test_zero_update_model_equals_static_baseline(tiny_splits):
    test = tiny_splits["test"]
    model = build_model(TINY, test, zero_update=True)
    pred_x, target_x = model.decode_batch(test, np.arange(test.n_samples))
    f_mse = float(((pred_x[-1] - target_x[-1]) ** 2).mean())
    assert f_mse == pytest.approx(test.static_f_mse(), abs=1e-12)


def test_p_mismatch_rejected_before_training(tiny_splits):
    with pytest.raises(ValueError, match="P"):
        train(replace(TINY, p_steps=2, modes=2), splits=tiny_splits)


def test_eval_p_mismatch_rejected(tiny_splits, tmp_path):
    ckpt, _ = train(TINY, splits=tiny_splits)
    bad = replace(ckpt.config, p_steps=2)
    ckpt_bad = checkpoint_roundtrip(
        type(ckpt)(params=ckpt.params, config=bad, seed=0, epoch=1, valid_loss=0.1),
        tmp_path / "bad.egnockpt")
    with pytest.raises(ValueError, match="P"):
        evaluate(ckpt_bad, tiny_splits["test"])


def test_checkpoint_param_name_validation(tiny_splits):
    ckpt, _ = train(TINY, splits=tiny_splits)
    model = build_model(TINY, tiny_splits["test"])
    good = dict(ckpt.params)
    bad = dict(good)
    bad["phantom"] = np.zeros(3)
    with pytest.raises(KeyError, match="phantom"):
        model.load_state(bad)
    del bad["phantom"]
    bad.pop(next(iter(bad)))
    with pytest.raises(KeyError, match="missing"):
        model.load_state(bad)


@pytest.mark.parametrize("variant", ["egnn", "egnn-roll", "egnn-seq",
                                     "egno-mask-hx", "egno-mask-h", "egno-mask-none"])
def test_baseline_variants_train(tiny_splits, variant):
    run = replace(TINY, max_epochs=2, layers=5 if variant == "egnn-seq" else 2)
    ckpt, report = run_baseline(variant, run, splits=tiny_splits)
    assert np.isfinite(report.f_mse)
    assert report.config["model"] == variant


def test_egnn_seq_needs_enough_layers(tiny_splits):
    run = replace(TINY, model="egnn-seq", layers=3)
    with pytest.raises(ValueError, match="layers"):
        train(run, splits=tiny_splits)


def test_identity_rollout_returns_input_state(tiny_splits):
    test = tiny_splits["test"]
    xs, vs = rollout_predict(lambda x, v: (x, v), test.x0, test.v0, 5)
    assert all(np.array_equal(xs[p], test.x0) for p in range(5))
    assert all(np.array_equal(vs[p], test.v0) for p in range(5))


def test_rollout_composes_offsets(tiny_splits):
    # a drift of +1 along x per step must land at +P after P rollouts
    test = tiny_splits["test"]
    shift = np.array([1.0, 0.0, 0.0])
    xs, _ = rollout_predict(lambda x, v: (x + shift, v), test.x0, test.v0, 5)
    assert np.allclose(xs[-1], test.x0 + 5 * shift)


def test_mask_variants_have_expected_parameters(tiny_splits):
    run_full = replace(TINY, model="egno")
    run_none = replace(TINY, model="egno-mask-none")
    full = build_model(run_full, tiny_splits["train"])
    none = build_model(run_none, tiny_splits["train"])
    kernel_names = [n for n in full.named if ".kernel." in n]
    assert kernel_names
    assert not [n for n in none.named if ".kernel." in n]
    hx = build_model(replace(TINY, model="egno-mask-hx"), tiny_splits["train"])
    mz = [n for n in hx.named if ".m_z." in n]
    assert all(hx.named[n].shape[-1] == 1 for n in mz)  # only x among directionals


def test_config_defaults_match_reported_table():
    run = RunConfig()
    assert (run.batch_size, run.lr, run.weight_decay) == (100, 1e-4, 1e-8)
    assert (run.layers, run.hidden, run.p_steps) == (4, 64, 5)
    assert (run.time_emb, run.modes) == (32, 2)
    assert run.patience == 50


def test_unknown_variant_rejected():
    with pytest.raises(ValueError, match="variant"):
        RunConfig(model="transformer")
