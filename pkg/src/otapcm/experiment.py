"""Turn an :class:`ExperimentConfig` into datasets, models and pipeline configs."""
from __future__ import annotations

from functools import partial

import numpy as np

from . import model as model_mod
from .config import ExperimentConfig
from .data import Dataset, load_mnist, synthetic_blobs
from .energy import EnergySpec
from .errors import ConfigError
from .ota import ChannelSpec, FusionSpec
from .pipeline import InferConfig, SweepSpec, TrainConfig


def load_datasets(cfg: ExperimentConfig) -> tuple[Dataset, Dataset, Dataset]:
    """(train, validation, test); validation is carved off the head of train."""
    ds = cfg.dataset
    if ds.name == "mnist":
        train = load_mnist(ds.root, "train", ds.n_train)
        test = load_mnist(ds.root, "test", ds.n_test)
    else:
        s = ds.synthetic
        full = synthetic_blobs(s.n, s.classes, s.side, s.seed, s.separation)
        n_test = max(1, len(full) // 5)
        train, test = full.subset(slice(n_test, None), "train"), full.subset(slice(0, n_test), "test")
    n_val = int(round(len(train) * ds.val_fraction))
    if n_val < 1 or n_val >= len(train):
        raise ConfigError(f"dataset.val_fraction leaves {n_val} of {len(train)} samples for validation")
    return train.subset(slice(n_val, None), "train"), train.subset(slice(0, n_val), "val"), test


def model_factory(cfg: ExperimentConfig):
    mc = cfg.model
    if mc.arch == "mnist":
        return partial(model_mod.mnist_model, channels=mc.channels, kernel=mc.kernel, hidden=mc.hidden)
    s = cfg.dataset.synthetic
    return partial(model_mod.mlp_model, side=s.side, hidden=mc.hidden, classes=s.classes)


def _channel(snr, snr_range) -> ChannelSpec:
    return ChannelSpec(snr, None if snr_range is None else tuple(snr_range))


def train_config(cfg: ExperimentConfig, init_from=None) -> TrainConfig:
    t, f = cfg.train, cfg.fusion
    return TrainConfig(
        n_sensors=t.sensors,
        channel=_channel(cfg.channel.train_snr_db, cfg.channel.train_snr_range_db),
        fusion=FusionSpec(f.mode, f.p, f.p_trainable),
        p_init=f.p_init, epochs=t.epochs, batch_size=t.batch_size, lr=t.lr,
        patience=t.patience, seed=cfg.seed, rotate=cfg.dataset.rotate,
        interpolation=1 if cfg.dataset.interpolation == "bilinear" else 0,
        init_from=init_from)


def energy_spec(cfg: ExperimentConfig, n_sensors: int | None = None) -> EnergySpec:
    e = cfg.energy
    return EnergySpec(e.g_max, e.v_max, e.duration_s, e.rpi_power_w,
                      e.n_sensors if n_sensors is None else n_sensors)


def infer_config(cfg: ExperimentConfig, with_energy: bool | None = None) -> InferConfig:
    i = cfg.infer
    with_energy = cfg.energy.enabled if with_energy is None else with_energy
    return InferConfig(
        n_sensors=i.sensors,
        channel=_channel(cfg.channel.test_snr_db, cfg.channel.test_snr_range_db),
        drift_time=i.drift_time_s, programming_trials=i.programming_trials,
        channel_trials=i.channel_trials, seed=cfg.seed, analog=i.analog, device=cfg.device,
        energy=energy_spec(cfg, i.sensors) if with_energy else None,
        rotate=cfg.dataset.rotate,
        interpolation=1 if cfg.dataset.interpolation == "bilinear" else 0)


def sweep_spec(cfg: ExperimentConfig) -> SweepSpec:
    s = cfg.sweep
    return SweepSpec(s.kind, list(s.sensors), list(s.train_snr_db), list(s.test_snr_db),
                     list(s.drift_times_s), s.digital_reference)


def front_end_cells(cfg: ExperimentConfig) -> int:
    from .pipeline import crossbar_cells
    return crossbar_cells(model_factory(cfg)(np.random.default_rng(0)))
