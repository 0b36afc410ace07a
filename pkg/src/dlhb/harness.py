"""Experiment drivers: SNR sweep, corruption sweep, timing, CSV output.

Trials are paired: every method inside one trial sees the same channel
realization, and channels are drawn from (seed, trial)-derived streams so
sweep points share common random numbers.  Spectral efficiency is always
evaluated on the clean channel; corruption only changes what a method sees.
"""

import csv
import statistics
import time
from dataclasses import dataclass, fields

import numpy as np

from .beamforming import LinkParams, digital_spectral_efficiency, spectral_efficiency
from .channel import ChannelConfig, realize_channel
from .dataset import DatasetConfig, corrupt_channel
from .manopt import MoSettings, solve_hybrid
from .network import CnnConfig, CnnModel, TrainConfig, predict_beamformers
from .numerics import NotHpdError, RankDeficientError

CSV_HEADER = ("sweep_db", "method", "mean_se", "std_se", "trials")
SNR_METHODS = ("digital", "mo", "dlhb")
CORRUPTION_METHODS = ("digital", "mo", "dlhb", "mo-corrupted")


class ConfigError(ValueError):
    """An experiment config file is malformed."""


@dataclass(frozen=True)
class Scenario:
    channel: ChannelConfig
    link: LinkParams
    n_rf: int


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: Scenario
    dataset: DatasetConfig
    train: TrainConfig
    cnn_filters: int = 16
    cnn_units: int = 128
    cnn_dropout: float = 0.5
    sweep: tuple = (-10.0, -5.0, 0.0, 5.0, 10.0)
    trials: int = 20
    seed: int = 0
    out: str = "results"

    def __post_init__(self):
        if not self.sweep:
            raise ConfigError("sweep must be nonempty")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")

    def cnn_config(self) -> CnnConfig:
        d = self.dataset.dims
        return CnnConfig(
            input_shape=d.feature_shape,
            output_len=d.label_len,
            conv_filters=self.cnn_filters,
            fc_units=self.cnn_units,
            dropout_p=self.cnn_dropout,
        )


@dataclass
class ResultRow:
    sweep_db: float
    method: str
    mean_se: float
    std_se: float
    trials: int


def _build_section(cls, mapping, where, **overrides):
    mapping = dict(mapping or {})
    known = {f.name for f in fields(cls)}
    for key in mapping:
        if key not in known:
            raise ConfigError(f"unknown key '{key}' in {where}")
    mapping.update(overrides)
    try:
        return cls(**mapping)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where}: {exc}") from exc


def config_from_mapping(doc: dict, seed=None, out=None) -> ExperimentConfig:
    """Build an ExperimentConfig from a parsed config-file mapping.

    Keys mirror the config dataclasses field-for-field; section seeds
    default to the top-level seed.  `seed`/`out` override the file.
    """
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a mapping")
    known = {"scenario", "dataset", "mo", "train", "cnn", "sweep", "trials", "seed", "out"}
    for key in doc:
        if key not in known:
            raise ConfigError(f"unknown top-level key '{key}'")
    master_seed = int(doc.get("seed", 0)) if seed is None else int(seed)
    out_path = str(doc.get("out", "results")) if out is None else str(out)

    scen = doc.get("scenario")
    if not isinstance(scen, dict) or not {"channel", "link", "n_rf"} <= set(scen):
        raise ConfigError("scenario must define channel, link and n_rf")
    for key in scen:
        if key not in {"channel", "link", "n_rf"}:
            raise ConfigError(f"unknown key '{key}' in scenario")
    channel = _build_section(ChannelConfig, scen["channel"], "scenario.channel", seed=master_seed)
    link = _build_section(LinkParams, scen["link"], "scenario.link")
    scenario = Scenario(channel=channel, link=link, n_rf=int(scen["n_rf"]))

    mo = _build_section(MoSettings, doc.get("mo"), "mo", seed=master_seed)
    ds_map = dict(doc.get("dataset") or {})
    if "snr_train_db" in ds_map:
        ds_map["snr_train_db"] = tuple(float(v) for v in ds_map["snr_train_db"])
    dataset = _build_section(
        DatasetConfig, ds_map, "dataset",
        channel=channel, link=link, n_rf=scenario.n_rf, mo=mo, seed=master_seed,
    )
    train = _build_section(TrainConfig, doc.get("train"), "train", seed=master_seed)

    cnn_map = dict(doc.get("cnn") or {})
    for key in cnn_map:
        if key not in {"conv_filters", "fc_units", "dropout_p"}:
            raise ConfigError(f"unknown key '{key}' in cnn")
    sweep = doc.get("sweep", [-10.0, -5.0, 0.0, 5.0, 10.0])
    if not isinstance(sweep, (list, tuple)):
        raise ConfigError("sweep must be a list of dB values")
    return ExperimentConfig(
        scenario=scenario,
        dataset=dataset,
        train=train,
        cnn_filters=int(cnn_map.get("conv_filters", 16)),
        cnn_units=int(cnn_map.get("fc_units", 128)),
        cnn_dropout=float(cnn_map.get("dropout_p", 0.5)),
        sweep=tuple(float(v) for v in sweep),
        trials=int(doc.get("trials", 20)),
        seed=master_seed,
        out=out_path,
    )


def _aggregate(rows_out, sweep_db, method, values, trials):
    rows_out.append(
        ResultRow(
            sweep_db=sweep_db,
            method=method,
            mean_se=float(np.mean(values)),
            std_se=float(np.std(values)),
            trials=trials,
        )
    )


def run_snr_sweep(cfg: ExperimentConfig, model: CnnModel) -> list:
    """Mean/std spectral efficiency per (SNR point, method) over paired trials.

    SNR maps to the link as rho = sigma_n^2 * 10^(snr/10); channels are
    redrawn per trial and shared by digital / mo / dlhb.
    """
    rows = []
    base = cfg.scenario
    for snr_db in cfg.sweep:
        link = LinkParams(
            rho=base.link.noise_var * 10.0 ** (snr_db / 10.0),
            noise_var=base.link.noise_var,
            n_streams=base.link.n_streams,
        )
        per_method = {m: [] for m in SNR_METHODS}
        excluded = 0
        for trial in range(cfg.trials):
            fc = realize_channel(base.channel, np.random.default_rng([cfg.seed, 101, trial]))
            try:
                se_dig = digital_spectral_efficiency(fc, link)
                bf_mo, _ = solve_hybrid(fc, link, base.n_rf, cfg.dataset.mo)
                se_mo = spectral_efficiency(fc, bf_mo, link)
                se_dl = spectral_efficiency(fc, predict_beamformers(model, fc), link)
            except (RankDeficientError, NotHpdError, RuntimeError):
                excluded += 1
                continue
            per_method["digital"].append(se_dig)
            per_method["mo"].append(se_mo)
            per_method["dlhb"].append(se_dl)
        if excluded > 0.1 * cfg.trials:
            raise RuntimeError(
                f"{excluded}/{cfg.trials} trials excluded at {snr_db} dB; aborting sweep"
            )
        for method in SNR_METHODS:
            _aggregate(rows, snr_db, method, per_method[method], len(per_method[method]))
    return rows


def run_corruption_sweep(cfg: ExperimentConfig, model: CnnModel) -> list:
    """Robustness sweep over SNR_TEST at the configured link operating point.

    dlhb and mo-corrupted see the corrupted channel; every spectral
    efficiency is evaluated on the clean one.
    """
    rows = []
    base = cfg.scenario
    for point, snr_test_db in enumerate(cfg.sweep):
        per_method = {m: [] for m in CORRUPTION_METHODS}
        excluded = 0
        for trial in range(cfg.trials):
            fc = realize_channel(base.channel, np.random.default_rng([cfg.seed, 101, trial]))
            noise_rng = np.random.default_rng([cfg.seed, 202, point, trial])
            fc_seen = corrupt_channel(fc, snr_test_db, noise_rng)
            try:
                se_dig = digital_spectral_efficiency(fc, base.link)
                bf_mo, _ = solve_hybrid(fc, base.link, base.n_rf, cfg.dataset.mo)
                se_mo = spectral_efficiency(fc, bf_mo, base.link)
                se_dl = spectral_efficiency(fc, predict_beamformers(model, fc_seen), base.link)
                bf_moc, _ = solve_hybrid(fc_seen, base.link, base.n_rf, cfg.dataset.mo)
                se_moc = spectral_efficiency(fc, bf_moc, base.link)
            except (RankDeficientError, NotHpdError, RuntimeError):
                excluded += 1
                continue
            per_method["digital"].append(se_dig)
            per_method["mo"].append(se_mo)
            per_method["dlhb"].append(se_dl)
            per_method["mo-corrupted"].append(se_moc)
        if excluded > 0.1 * cfg.trials:
            raise RuntimeError(
                f"{excluded}/{cfg.trials} trials excluded at SNR_TEST {snr_test_db} dB"
            )
        for method in CORRUPTION_METHODS:
            _aggregate(rows, snr_test_db, method, per_method[method], len(per_method[method]))
    return rows


def time_methods(cfg: ExperimentConfig, model: CnnModel, runs: int = 20) -> list:
    """Median wall time of DLHB prediction vs the MO solve, same instances."""
    runs = max(runs, 20)
    base = cfg.scenario
    fc = realize_channel(base.channel, np.random.default_rng([cfg.seed, 303]))
    predict_beamformers(model, fc)                      # warm-up
    solve_hybrid(fc, base.link, base.n_rf, cfg.dataset.mo)
    dlhb_times, mo_times = [], []
    for _ in range(runs):
        t0 = time.perf_counter()
        predict_beamformers(model, fc)
        dlhb_times.append(time.perf_counter() - t0)
        t0 = time.perf_counter()
        solve_hybrid(fc, base.link, base.n_rf, cfg.dataset.mo)
        mo_times.append(time.perf_counter() - t0)
    return [
        {"method": "dlhb", "median_s": statistics.median(dlhb_times), "runs": runs},
        {"method": "mo", "median_s": statistics.median(mo_times), "runs": runs},
    ]


def write_result_rows(rows, path) -> None:
    """Fixed 6-decimal CSV so identical runs produce identical bytes."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for row in rows:
            writer.writerow(
                [
                    f"{row.sweep_db:.6f}",
                    row.method,
                    f"{row.mean_se:.6f}",
                    f"{row.std_se:.6f}",
                    row.trials,
                ]
            )


def write_timing_rows(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("method", "median_s", "runs"))
        for row in rows:
            writer.writerow([row["method"], f"{row['median_s']:.6f}", row["runs"]])
