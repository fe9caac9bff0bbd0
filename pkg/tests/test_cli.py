"""End-to-end command-line runs on small synthetic data."""

import os

import numpy as np
import pytest

from decop.cli import main
from decop.data import synthetic_sine, write_csv


@pytest.fixture
def workspace(tmp_path):
    data = tmp_path / "toy.csv"
    write_csv(str(data), synthetic_sine(420, 2, seed=5, periods=(12.0, 18.0)))
    return tmp_path, str(data)


def _config(tmp_path, data_path, out_name, **overrides):
    fields = {
        "dataset": data_path,
        "dataset_name": "toy",
        "lookback": 48,
        "horizon": 12,
        "patch_size": 8,
        "stride": 8,
        "model_dim": 8,
        "windows": "1,2",
        "epochs": 2,
        "batch_size": 32,
        "lr": "1e-3",
        "split_ratios": "0.6,0.2,0.2",
        "seed": 11,
        "out_dir": str(tmp_path / out_name),
    }
    fields.update(overrides)
    path = tmp_path / f"{out_name}.cfg"
    path.write_text("".join(f"{k} = {v}\n" for k, v in fields.items()), encoding="utf-8")
    return str(path)


def test_missing_dataset_file_names_the_path(tmp_path, capsys):
    cfg = _config(tmp_path, str(tmp_path / "absent.csv"), "run")
    code = main(["pretrain", "--config", cfg])
    captured = capsys.readouterr()
    assert code != 0
    assert "decop:error:config" in captured.err
    assert "absent.csv" in captured.err
    assert captured.err.count("\n") == 1


def test_pretrain_writes_roundtrippable_checkpoint(workspace):
    tmp_path, data = workspace
    cfg = _config(tmp_path, data, "pre")
    assert main(["pretrain", "--config", cfg]) == 0
    out = tmp_path / "pre"
    assert (out / "ckpt_final.decop").exists()
    assert (out / "ckpt_best.decop").exists()
    assert (out / "pretrain_metrics.csv").exists()
    assert (out / "config_echo.txt").exists()

    from decop import checkpoint
    from decop.config import load_config
    from decop.model import ModelState
    from decop.rng import Rng

    run_cfg = load_config(cfg)
    model = ModelState(run_cfg.dims(), run_cfg.dropout, run_cfg.blend_init, Rng(0))
    checkpoint.load(str(out / "ckpt_final.decop"), model)
    resaved = str(out / "resaved.decop")
    checkpoint.save(resaved, model)
    assert open(resaved, "rb").read() == open(out / "ckpt_final.decop", "rb").read()


def test_two_identical_runs_are_byte_identical(workspace):
    tmp_path, data = workspace
    first = _config(tmp_path, data, "runA")
    second = _config(tmp_path, data, "runB", out_dir=str(tmp_path / "runB"))
    assert main(["pretrain", "--config", first]) == 0
    assert main(["pretrain", "--config", second]) == 0
    a = (tmp_path / "runA" / "pretrain_metrics.csv").read_bytes()
    b = (tmp_path / "runB" / "pretrain_metrics.csv").read_bytes()
    assert a == b
    ca = (tmp_path / "runA" / "ckpt_final.decop").read_bytes()
    cb = (tmp_path / "runB" / "ckpt_final.decop").read_bytes()
    assert ca == cb


def test_finetune_and_eval_report_forecast_metrics(workspace, capsys):
    tmp_path, data = workspace
    pre_cfg = _config(tmp_path, data, "pre2")
    assert main(["pretrain", "--config", pre_cfg]) == 0
    fin_cfg = _config(tmp_path, data, "fin", epochs=2)
    ckpt = str(tmp_path / "pre2" / "ckpt_best.decop")
    assert main(["finetune", "--config", fin_cfg, "--checkpoint", ckpt]) == 0
    report = (tmp_path / "fin" / "report.txt").read_text()
    assert report.startswith("mse=")
    assert "mae=" in report

    eval_cfg = _config(tmp_path, data, "ev")
    finetuned = str(tmp_path / "fin" / "ckpt_finetuned.decop")
    assert main(["eval", "--config", eval_cfg, "--checkpoint", finetuned]) == 0
    assert (tmp_path / "ev" / "report.txt").read_text().startswith("mse=")


def test_structural_mismatch_is_reported(workspace, capsys):
    tmp_path, data = workspace
    pre_cfg = _config(tmp_path, data, "pre3")
    assert main(["pretrain", "--config", pre_cfg]) == 0
    bad_cfg = _config(tmp_path, data, "bad", patch_size=6, stride=6)
    code = main(["finetune", "--config", bad_cfg, "--checkpoint", str(tmp_path / "pre3" / "ckpt_best.decop")])
    captured = capsys.readouterr()
    assert code != 0
    assert "decop:error:checkpoint" in captured.err
    assert "patch_size" in captured.err


def test_cross_dataset_finetune_completes(workspace):
    tmp_path, data = workspace
    other = tmp_path / "other.csv"
    write_csv(str(other), synthetic_sine(420, 3, seed=31, periods=(10.0, 14.0, 22.0)))
    pre_cfg = _config(tmp_path, data, "pre4")
    assert main(["pretrain", "--config", pre_cfg]) == 0
    fin_cfg = _config(tmp_path, str(other), "fin4")
    ckpt = str(tmp_path / "pre4" / "ckpt_best.decop")
    assert main(["finetune", "--config", fin_cfg, "--checkpoint", ckpt]) == 0
    report = (tmp_path / "fin4" / "report.txt").read_text()
    mse = float(report.splitlines()[0].split("=")[1])
    assert np.isfinite(mse)


def test_filter_viz_schema_and_identity_filter(workspace):
    tmp_path, data = workspace
    cfg = _config(tmp_path, data, "viz", keep_fraction="1.0")
    out = str(tmp_path / "viz" / "filter_viz.csv")
    assert main(["filter-viz", "--config", cfg, "--channel", "1", "--out", out]) == 0
    lines = open(out).read().splitlines()
    assert lines[0] == "t,anchor,denoised,noise"
    assert len(lines) == 1 + 48  # header + one row per look-back point
    noise = np.array([float(ln.split(",")[3]) for ln in lines[1:]])
    assert np.abs(noise).max() < 1e-8


def test_filter_viz_channel_out_of_range(workspace, capsys):
    tmp_path, data = workspace
    cfg = _config(tmp_path, data, "viz2")
    assert main(["filter-viz", "--config", cfg, "--channel", "7"]) != 0
    assert "channel 7" in capsys.readouterr().err


def test_flops_prints_both_stages(workspace, capsys):
    tmp_path, data = workspace
    cfg = _config(tmp_path, data, "fl")
    assert main(["flops", "--config", cfg]) == 0
    text = capsys.readouterr().out
    assert "[pretrain]" in text and "[finetune]" in text
    assert "2 channels" in text


def test_synth_command_writes_loadable_csv(tmp_path):
    out = str(tmp_path / "synthetic.csv")
    assert main(["synth", "--out", out, "--rows", "200", "--channels", "2", "--seed", "3"]) == 0
    from decop.data import DatasetSpec, load_csv

    ds = load_csv(out, DatasetSpec("synthetic", out))
    assert ds.length == 200 and ds.n_channels == 2


def test_invalid_config_field_is_named(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("windows = 5,2\n", encoding="utf-8")
    assert main(["pretrain", "--config", str(bad)]) == 2
    err = capsys.readouterr().err
    assert "decop:error:config" in err and "windows" in err


def test_classification_finetune_via_cli(tmp_path, capsys):
    from decop.data import synthetic_two_class

    data = tmp_path / "cls.csv"
    values, labels = synthetic_two_class(600, 1, seed=9, segment=100)
    write_csv(str(data), values, labels)
    cfg = _config(
        tmp_path, str(data), "cls",
        task="classify", classes=2, lookback=32, patch_size=8, stride=8,
        windows="2,2", learner="mlp", epochs=3, lr="3e-3",
    )
    assert main(["finetune", "--config", cfg]) == 0
    report = (tmp_path / "cls" / "report.txt").read_text()
    keys = {line.split("=")[0] for line in report.strip().splitlines()}
    assert keys == {"acc", "precision", "recall", "f1"}
    acc = float(report.splitlines()[0].split("=")[1])
    assert 0.0 <= acc <= 100.0
