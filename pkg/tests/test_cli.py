"""End-to-end command line flows on a miniature dataset."""
import numpy as np
import pytest

from egno.cli import GenConfig, main, parse_kv_file
from egno.dataio import DATASET_MAGIC, read_container
from egno.harness import load_checkpoint


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    gen_cfg = root / "gen.cfg"
    gen_cfg.write_text(
        "# tiny dataset\n"
        "n_particles = 5\n"
        "window = 10\n"
        "p_steps = 5\n"
        "train = 24\n"
        "valid = 8\n"
        "test = 8\n")
    train_cfg = root / "train.cfg"
    train_cfg.write_text(
        "model = \"egno\"\n"
        "layers = 2\n"
        "hidden = 8\n"
        "time_emb = 4\n"
        "lr = 0.001\n"
        "batch_size = 12\n"
        "max_epochs = 3\n"
        "patience = 50\n")
    data = root / "data"
    main(["gen", "--config", str(gen_cfg), "--out", str(data), "--seed", "11"])
    return root, gen_cfg, train_cfg, data


def test_parse_kv_rejects_malformed(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("just words\n")
    with pytest.raises(ValueError, match="key = value"):
        parse_kv_file(bad)


def test_parse_kv_types(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("a = 3\nb = 0.5\nc = true\nd = uniform\n")
    parsed = parse_kv_file(cfg)
    assert parsed == {"a": 3, "b": 0.5, "c": True, "d": "uniform"}


def test_gen_writes_all_splits(workspace):
    _, _, _, data = workspace
    for split in ("train", "valid", "test"):
        header, arrays = read_container(data / f"{split}.egnodset", DATASET_MAGIC)
        assert header["split"] == split
        assert arrays["x0"].shape[1:] == (5, 3)
    assert read_container(data / "train.egnodset", DATASET_MAGIC)[1]["x0"].shape[0] == 24


def test_gen_is_reproducible(workspace, tmp_path):
    root, gen_cfg, _, data = workspace
    out2 = tmp_path / "data2"
    main(["gen", "--config", str(gen_cfg), "--out", str(out2), "--seed", "11"])
    for split in ("train", "valid", "test"):
        a = (data / f"{split}.egnodset").read_bytes()
        b = (out2 / f"{split}.egnodset").read_bytes()
        assert a == b


def test_train_eval_super_res_flow(workspace, capsys):
    root, _, train_cfg, data = workspace
    run_dir = root / "run"
    main(["train", "--config", str(train_cfg), "--data", str(data),
          "--out", str(run_dir), "--seed", "3", "--quiet"])
    ckpt_path = run_dir / "checkpoint.egnockpt"
    assert ckpt_path.exists()
    assert (run_dir / "metrics.csv").read_text().startswith("metric,value")
    assert (run_dir / "history.csv").read_text().startswith("epoch,train_loss,valid_loss")
    assert (run_dir / "loss_curves.png").stat().st_size > 0
    ckpt = load_checkpoint(ckpt_path)
    assert ckpt.config.seed == 3

    eval_dir = root / "eval"
    main(["eval", "--checkpoint", str(ckpt_path), "--data", str(data),
          "--out", str(eval_dir), "--split", "test"])
    assert (eval_dir / "metrics.csv").exists()
    assert (eval_dir / "per_step_mse.png").stat().st_size > 0

    sr_dir = root / "sr"
    main(["super-res", "--checkpoint", str(ckpt_path), "--data", str(data),
          "--out", str(sr_dir), "--split", "test"])
    out = capsys.readouterr().out
    assert "[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0]" in out
    assert (sr_dir / "super_res.csv").exists()
    assert (sr_dir / "super_res_sample.png").stat().st_size > 0


def test_train_flag_overrides(workspace):
    root, _, train_cfg, data = workspace
    out = root / "run_override"
    main(["train", "--config", str(train_cfg), "--data", str(data), "--out", str(out),
          "--seed", "5", "--model", "egno-mask-none", "--quiet"])
    ckpt = load_checkpoint(out / "checkpoint.egnockpt")
    assert ckpt.config.model == "egno-mask-none"
    assert ckpt.config.seed == 5


def test_unknown_config_key_rejected(workspace, tmp_path):
    root, _, _, data = workspace
    cfg = tmp_path / "oops.cfg"
    cfg.write_text("learning_rate = 0.1\n")
    with pytest.raises(ValueError, match="learning_rate"):
        main(["train", "--config", str(cfg), "--data", str(data),
              "--out", str(tmp_path / "o"), "--quiet"])


def test_gen_config_defaults_match_reported_setup():
    cfg = GenConfig()
    assert (cfg.n_particles, cfg.window, cfg.p_steps) == (5, 10, 5)
    assert (cfg.train, cfg.valid, cfg.test) == (3000, 2000, 2000)
