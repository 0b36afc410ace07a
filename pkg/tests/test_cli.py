import os

import pytest

from dlhb.cli import main

TINY_YAML = """
scenario:
  channel: {n_tx: 4, n_rx: 2, n_subcarriers: 2, n_clusters: 2, n_rays: 1}
  link: {rho: 1.0, noise_var: 1.0, n_streams: 1}
  n_rf: 2
dataset: {n_realizations: 3, g_copies: 2, snr_train_db: [15, 20, 25]}
mo: {outer_iters: 3, inner_iters: 10}
train: {lr: 0.005, momentum: 0.9, batch: 4, epochs: 2, val_fraction: 0.25}
cnn: {conv_filters: 2, fc_units: 4, dropout_p: 0.5}
sweep: [0, 5]
trials: 2
seed: 11
"""


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text(TINY_YAML)
    return str(path)


def run(args):
    return main(args)


def test_pipeline_end_to_end(config_path, tmp_path, capsys):
    out = str(tmp_path / "run")
    assert run(["gen", "--config", config_path, "--out", out]) == 0
    assert run(["train", "--config", config_path, "--out", out]) == 0
    assert run(["sweep-snr", "--config", config_path, "--out", out]) == 0
    assert run(["sweep-corruption", "--config", config_path, "--out", out]) == 0
    assert run(["time", "--config", config_path, "--out", out]) == 0
    for name in ("dataset.bin", "model.bin", "train_report.csv",
                 "sweep_snr.csv", "sweep_corruption.csv", "timing.csv"):
        assert os.path.exists(os.path.join(out, name)), name
    stdout = capsys.readouterr().out
    assert "gen:" in stdout and "train:" in stdout


def test_missing_config_is_clean_error(tmp_path, capsys):
    out = str(tmp_path / "run")
    rc = run(["gen", "--config", str(tmp_path / "absent.yaml"), "--out", out])
    assert rc == 2
    err = capsys.readouterr().err
    assert err.startswith("error: config:") and err.count("\n") == 1
    assert not os.path.exists(os.path.join(out, "dataset.bin"))


def test_unknown_flag_exits_with_usage(config_path):
    with pytest.raises(SystemExit) as exc:
        run(["gen", "--config", config_path, "--frobnicate"])
    assert exc.value.code == 2


def test_train_before_gen_fails(config_path, tmp_path, capsys):
    rc = run(["train", "--config", config_path, "--out", str(tmp_path / "empty")])
    assert rc == 2
    assert "run `gen` first" in capsys.readouterr().err


def test_seed_repetition_identical_outputs(config_path, tmp_path):
    outs = []
    for name in ("r1", "r2"):
        out = str(tmp_path / name)
        assert run(["gen", "--config", config_path, "--out", out, "--seed", "5"]) == 0
        assert run(["train", "--config", config_path, "--out", out, "--seed", "5"]) == 0
        assert run(["sweep-snr", "--config", config_path, "--out", out, "--seed", "5"]) == 0
        outs.append(out)
    for name in ("dataset.bin", "model.bin", "sweep_snr.csv", "train_report.csv"):
        with open(os.path.join(outs[0], name), "rb") as f1, \
             open(os.path.join(outs[1], name), "rb") as f2:
            assert f1.read() == f2.read(), name


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        run(["--version"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    assert "dlhb" in out and "dataset format 1" in out and "model format 1" in out


def test_corrupted_dataset_file_reported(config_path, tmp_path, capsys):
    out = str(tmp_path / "run")
    assert run(["gen", "--config", config_path, "--out", out]) == 0
    ds_path = os.path.join(out, "dataset.bin")
    with open(ds_path, "r+b") as fh:
        fh.write(b"ZZZZ")
    rc = run(["train", "--config", config_path, "--out", out])
    assert rc == 1
    assert "FormatError" in capsys.readouterr().err
