"""Command-line front end: gen / train / sweep-snr / sweep-corruption / time.

Every subcommand reads one YAML config (keys mirror the experiment config
sections) plus optional --seed/--out overrides, and writes its artifacts
under the output directory:

    gen              -> dataset.bin
    train            -> model.bin, train_report.csv
    sweep-snr        -> sweep_snr.csv
    sweep-corruption -> sweep_corruption.csv
    time             -> timing.csv

Outputs are written via a temp file + atomic rename, so a failing run never
leaves partial files.  Errors print one machine-parseable line on stderr.
"""

import argparse
import csv
import os
import sys

import yaml

from . import __version__, dataset, harness, network
from .dataset import FORMAT_VERSION as DATASET_FORMAT_VERSION
from .harness import ConfigError
from .network import MODEL_VERSION

DATASET_FILE = "dataset.bin"
MODEL_FILE = "model.bin"


def _load_config(path, seed, out) -> harness.ExperimentConfig:
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config '{path}': {exc.strerror}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config '{path}': {exc}") from exc
    return harness.config_from_mapping(doc, seed=seed, out=out)


def _atomic(path, write_fn):
    tmp = f"{path}.tmp"
    try:
        write_fn(tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def _out_path(cfg, name) -> str:
    os.makedirs(cfg.out, exist_ok=True)
    return os.path.join(cfg.out, name)


def _load_model_for(cfg) -> network.CnnModel:
    path = os.path.join(cfg.out, MODEL_FILE)
    if not os.path.exists(path):
        raise ConfigError(f"no trained model at '{path}'; run `train` first")
    return network.load_model(path)


def cmd_gen(cfg) -> None:
    ds = dataset.generate(cfg.dataset)
    _atomic(_out_path(cfg, DATASET_FILE), lambda p: dataset.save(ds, p))
    print(f"gen: wrote {len(ds)} samples to {os.path.join(cfg.out, DATASET_FILE)}")


def cmd_train(cfg) -> None:
    path = os.path.join(cfg.out, DATASET_FILE)
    if not os.path.exists(path):
        raise ConfigError(f"no dataset at '{path}'; run `gen` first")
    ds = dataset.load(path)
    model, report = network.train(ds, cfg.train, cfg.cnn_config())
    _atomic(_out_path(cfg, MODEL_FILE), lambda p: network.save_model(model, p))

    def write_report(p):
        with open(p, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(("epoch", "train_mse", "val_mse"))
            for i, (tr, va) in enumerate(zip(report.train_losses, report.val_losses), 1):
                writer.writerow((i, f"{tr:.6f}", f"{va:.6f}"))

    _atomic(_out_path(cfg, "train_report.csv"), write_report)
    print(
        f"train: {len(report.train_losses)} epochs in {report.wall_time:.1f}s, "
        f"best epoch {report.best_epoch}, "
        f"val MSE {min(report.val_losses):.6f}, model sha256 {report.checksum[:12]}"
    )


def cmd_sweep_snr(cfg) -> None:
    rows = harness.run_snr_sweep(cfg, _load_model_for(cfg))
    _atomic(_out_path(cfg, "sweep_snr.csv"), lambda p: harness.write_result_rows(rows, p))
    print(f"sweep-snr: {len(rows)} rows -> {os.path.join(cfg.out, 'sweep_snr.csv')}")


def cmd_sweep_corruption(cfg) -> None:
    rows = harness.run_corruption_sweep(cfg, _load_model_for(cfg))
    _atomic(_out_path(cfg, "sweep_corruption.csv"), lambda p: harness.write_result_rows(rows, p))
    print(f"sweep-corruption: {len(rows)} rows -> {os.path.join(cfg.out, 'sweep_corruption.csv')}")


def cmd_time(cfg) -> None:
    rows = harness.time_methods(cfg, _load_model_for(cfg))
    _atomic(_out_path(cfg, "timing.csv"), lambda p: harness.write_timing_rows(rows, p))
    ratio = rows[1]["median_s"] / max(rows[0]["median_s"], 1e-12)
    print(f"time: dlhb {rows[0]['median_s'] * 1e3:.2f} ms vs mo {rows[1]['median_s'] * 1e3:.2f} ms "
          f"(x{ratio:.1f}) -> {os.path.join(cfg.out, 'timing.csv')}")


_COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "sweep-snr": cmd_sweep_snr,
    "sweep-corruption": cmd_sweep_corruption,
    "time": cmd_time,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dlhb",
        description="Deep-learning hybrid beamforming lab for broadband mmWave MIMO-OFDM.",
    )
    parser.add_argument(
        "--version",
        action="version",
        version=(
            f"dlhb {__version__} "
            f"(dataset format {DATASET_FORMAT_VERSION}, model format {MODEL_VERSION})"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=True, help="YAML experiment config")
        cmd.add_argument("--seed", type=int, default=None, help="override the config seed")
        cmd.add_argument("--out", default=None, help="override the output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args.config, args.seed, args.out)
        _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
