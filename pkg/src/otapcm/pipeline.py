"""Training, analog inference and experiment sweeps.

Training is digital (no PCM noise) but runs through the simulated MAC so
the fusion exponent ``p`` learns under channel noise. Analog inference
programs the trained front-end onto a separate noisy crossbar per sensor.
"""
from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Iterable

import numpy as np

from . import nn, pcm
from .data import Dataset, make_views_batch
from .energy import EnergySpec, energy_report, mvm_energy
from .errors import ConfigError
from .model import ModelSplit
from .ota import ChannelSpec, FusionSpec
from .streams import stream

log = logging.getLogger(__name__)

ModelFactory = Callable[[np.random.Generator], ModelSplit]

CSV_COLUMNS = ["experiment_id", "M", "train_snr_db", "test_snr_db", "drift_time_s",
               "trial_id", "accuracy", "p_final", "sigma_n2", "energy_total_j"]


@dataclass
class TrainConfig:
    n_sensors: int = 5
    channel: ChannelSpec = field(default_factory=lambda: ChannelSpec(10.0))
    fusion: FusionSpec = field(default_factory=FusionSpec)
    p_init: float | None = None  # None: 0.95 + U[0, 0.1]
    epochs: int = 5
    batch_size: int = 32
    lr: float = 1e-3
    patience: int = 10
    seed: int = 0
    rotate: bool = True
    interpolation: int = 1
    init_from: ModelSplit | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.lr <= 0:
            raise ConfigError("learning rate must be positive")
        if self.n_sensors < 1 or self.batch_size < 1:
            raise ConfigError("n_sensors and batch_size must be >= 1")

    def digest(self) -> str:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "init_from"}
        d["channel"], d["fusion"] = asdict(self.channel), asdict(self.fusion)
        d["init_from"] = None if self.init_from is None else self.init_from.meta.get("digest")
        return hashlib.sha256(json.dumps(d, sort_keys=True, default=str).encode()).hexdigest()[:16]


@dataclass
class InferConfig:
    n_sensors: int = 5
    channel: ChannelSpec = field(default_factory=lambda: ChannelSpec(10.0))
    drift_time: float = 0.0  # seconds elapsed since programming
    programming_trials: int = 5
    channel_trials: int = 5
    seed: int = 0
    analog: bool = True
    device: pcm.PcmParams = field(default_factory=pcm.PcmParams)
    energy: EnergySpec | None = None
    rotate: bool = True
    interpolation: int = 1

    def __post_init__(self):
        if self.drift_time < 0:
            raise ValueError("drift time must be nonnegative")
        if self.programming_trials < 1 or self.channel_trials < 1:
            raise ConfigError("trial counts must be >= 1")

    @property
    def device_time(self) -> float:
        return self.device.t_c + self.drift_time


@dataclass
class TrainResult:
    model: ModelSplit
    history: list[dict]
    best_epoch: int
    best_val_accuracy: float
    initial_val_accuracy: float | None


@dataclass
class RunResult:
    accuracies: np.ndarray  # (programming_trials, channel_trials)
    p_final: float
    snr_db: list
    sigma_n2: np.ndarray
    energy_j: np.ndarray | None = None
    energy: object | None = None  # EnergyReport of the last trial
    wall_time: float = 0.0

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std(self) -> float:
        return float(np.std(self.accuracies))

    @property
    def per_trial(self) -> np.ndarray:
        return self.accuracies.ravel()


@dataclass
class ResultRow:
    experiment_id: str
    M: int
    train_snr_db: str
    test_snr_db: str
    drift_time_s: float
    trial_id: int
    accuracy: float
    p_final: float
    sigma_n2: float
    energy_total_j: float | None = None

    def as_list(self) -> list[str]:
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, float):
                return repr(v)
            return str(v)
        return [fmt(getattr(self, c)) for c in CSV_COLUMNS]


def snr_label(channel: ChannelSpec) -> str:
    if channel.snr_range_db is not None:
        lo, hi = channel.snr_range_db
        return f"{lo:g}:{hi:g}"
    return "inf" if channel.snr_db is None else f"{channel.snr_db:g}"


def initial_p(cfg: TrainConfig, rng: np.random.Generator) -> float:
    if cfg.p_init is not None:
        return cfg.p_init
    if not cfg.fusion.p_trainable:
        return cfg.fusion.p
    return 0.95 + rng.uniform(0.0, 0.1)


def evaluate(model: ModelSplit, views: np.ndarray, labels: np.ndarray, channel: ChannelSpec,
             rng: np.random.Generator, front_layers=None) -> tuple[float, float, float | None]:
    """Accuracy, mean noise variance and the SNR used for one pass over ``views``."""
    snr = channel.draw_snr_db(rng)
    preds, sigma2 = model.predict(views, snr, rng, front_layers)
    return float(np.mean(preds == labels)), sigma2, snr


def train(cfg: TrainConfig, train_set: Dataset, val_set: Dataset, factory: ModelFactory) -> TrainResult:
    """Joint training of front-end, back-end and ``p`` through the noisy MAC.

    Returns the best-validation model. Training stops early after
    ``cfg.patience`` epochs without validation improvement.
    """
    rng = stream(cfg.seed, "init")
    model = factory(rng)
    model.fusion_mode = cfg.fusion.mode
    model.p = initial_p(cfg, rng)
    if cfg.init_from is not None:
        try:
            model.load_state(cfg.init_from)
        except ValueError as exc:
            raise ConfigError(f"init_from: {exc}") from None
        if not cfg.fusion.p_trainable:
            model.p = cfg.fusion.p if cfg.p_init is None else cfg.p_init
    opt = nn.Adam(cfg.lr)
    m = cfg.n_sensors
    val_views = make_views_batch(val_set.images, m, stream(cfg.seed, "val-views"),
                                 cfg.rotate, cfg.interpolation).views

    def validate():
        return evaluate(model, val_views, val_set.labels, cfg.channel, stream(cfg.seed, "val-channel"))[0]

    initial = validate() if cfg.init_from is not None else None
    best_acc, best_epoch, best = -1.0, -1, model.copy()
    history = []
    n = len(train_set)
    for epoch in range(cfg.epochs):
        erng = stream(cfg.seed, "epoch", epoch)
        snr = cfg.channel.draw_snr_db(erng)
        views = make_views_batch(train_set.images, m, erng, cfg.rotate, cfg.interpolation).views
        perm = erng.permutation(n)
        losses = []
        for s in range(0, n, cfg.batch_size):
            idx = perm[s:s + cfg.batch_size]
            loss, grads, _ = model.loss_and_grads(views[:, idx], train_set.labels[idx], snr, erng)
            if not cfg.fusion.p_trainable or cfg.fusion.mode != "lp":
                grads.pop("log_p")
            opt.step(model.parameters(), grads)
            losses.append(loss)
        acc = validate()
        history.append({"epoch": epoch, "snr_db": snr, "loss": float(np.mean(losses)),
                        "val_accuracy": acc, "p": model.p})
        log.info("epoch %d snr=%s loss=%.4f val=%.4f p=%.4f", epoch, snr, np.mean(losses), acc, model.p)
        if acc > best_acc:
            best_acc, best_epoch, best = acc, epoch, model.copy()
        elif epoch - best_epoch >= cfg.patience:
            break
    best.meta.update(digest=cfg.digest(), n_sensors=m, best_epoch=best_epoch,
                     best_val_accuracy=best_acc, train_snr=snr_label(cfg.channel))
    return TrainResult(best, history, best_epoch, best_acc, initial)


def train_sequential(cfg: TrainConfig, sensor_counts: Iterable[int], train_set, val_set,
                     factory: ModelFactory) -> dict[int, TrainResult]:
    """Train for each sensor count in order, initialising M=m from M=m-1."""
    out: dict[int, TrainResult] = {}
    prev = cfg.init_from
    for m in sensor_counts:
        c = TrainConfig(**{**{f.name: getattr(cfg, f.name) for f in fields(cfg)},
                           "n_sensors": m, "init_from": prev})
        out[m] = train(c, train_set, val_set, factory)
        prev = out[m].model
    return out


def _crossbar_matrix(layer: nn.Layer) -> np.ndarray:
    """Weights plus bias column, as laid out on one crossbar."""
    w = layer.params["weight"].reshape(layer.params["weight"].shape[0], -1)
    return np.concatenate([w, layer.params["bias"][:, None]], axis=1)


def _split_matrix(layer: nn.Layer, mat: np.ndarray) -> nn.Layer:
    w_shape = layer.params["weight"].shape
    return layer.with_params({"weight": mat[:, :-1].reshape(w_shape), "bias": mat[:, -1]})


def crossbar_cells(model: ModelSplit) -> int:
    """Number of weight elements (differential pairs) on the sensor crossbar."""
    return sum(_crossbar_matrix(l).size for l in model.front_end if l.params)


def program_front_end(model: ModelSplit, device: pcm.PcmParams, rng) -> list:
    """One programming pass of every parametrised front-end layer."""
    return [pcm.program_crossbar(pcm.map_weights(_crossbar_matrix(l), device), rng) if l.params else None
            for l in model.front_end]


def read_front_end(model: ModelSplit, programmed: list, t: float, rng) -> list[nn.Layer]:
    return [l if prog is None else _split_matrix(l, prog.read_weights(t, rng))
            for l, prog in zip(model.front_end, programmed)]


def front_input_power(model: ModelSplit, views: np.ndarray, v_max: float, calib: int = 100):
    """Mean squared line voltage per crossbar input (bias line at ``v_max``).

    Activations are scaled into ``[0, v_max]`` by their maximum over the
    first ``calib`` samples.
    """
    views = views[:, :calib]
    m, n = views.shape[:2]
    x = views.reshape((m * n,) + model.input_shape)
    powers, scales = [], []
    for layer in model.front_end:
        if layer.params:
            cols = layer._columns(x)[0] if isinstance(layer, nn.Conv2D) else x
            scale = float(np.max(np.abs(cols))) or 1.0
            ms = np.mean(np.square(cols / scale * v_max), axis=0)
            powers.append(np.append(ms, v_max ** 2))
            scales.append(scale)
        x = layer.forward(x)
        layer.clear()
    return powers, scales


def _sensor_energy(programmed, powers, duration: float, t: float) -> float:
    total = 0.0
    for prog, ms in zip((p for p in programmed if p is not None), powers):
        g_pos, g_neg = prog.drifted(t)
        total += mvm_energy(g_pos + g_neg, ms, duration)
    return total


def infer_analog(model: ModelSplit, test_set: Dataset, cfg: InferConfig) -> RunResult:
    """Accuracy over ``programming_trials x channel_trials`` noisy inferences.

    Each programming trial draws an independent crossbar per sensor from the
    shared target weights; each channel trial re-reads the crossbars and
    draws fresh channel noise. Test-set rotations are fixed by ``cfg.seed``.
    """
    t0 = time.perf_counter()
    m = cfg.n_sensors
    t_dev = cfg.device_time
    if t_dev < cfg.device.t_c:
        raise ValueError("drift time precedes programming")
    views = make_views_batch(test_set.images, m, stream(cfg.seed, "test-views"),
                             cfg.rotate, cfg.interpolation).views
    powers = None
    if cfg.energy is not None:
        powers, scales = front_input_power(model, views, cfg.energy.v_max)
    acc = np.zeros((cfg.programming_trials, cfg.channel_trials))
    sig = np.zeros_like(acc)
    energy = np.full_like(acc, np.nan)
    snrs = []
    report = None
    for i in range(cfg.programming_trials):
        programmed = ([program_front_end(model, cfg.device, stream(cfg.seed, "pcm", i, s)) for s in range(m)]
                      if cfg.analog else None)
        sensor_e = None
        if powers is not None:
            if programmed is not None:
                sensor_e = [_sensor_energy(p, powers, cfg.energy.duration, t_dev) for p in programmed]
            else:
                ideal = program_front_end(model, cfg.device.noiseless(), stream(0, "ideal"))
                sensor_e = [_sensor_energy(ideal, powers, cfg.energy.duration, cfg.device.t_c)] * m
            report = energy_report(crossbar_cells(model),
                                   EnergySpec(**{**asdict(cfg.energy), "n_sensors": m}),
                                   sensor_e, scales)
        for j in range(cfg.channel_trials):
            fronts = None
            if programmed is not None:
                rrng = stream(cfg.seed, "read", i, j)
                fronts = [read_front_end(model, p, t_dev, rrng) for p in programmed]
            a, s2, snr = evaluate(model, views, test_set.labels, cfg.channel,
                                  stream(cfg.seed, "channel", i, j), fronts)
            acc[i, j], sig[i, j] = a, s2
            snrs.append(snr)
            if report is not None:
                energy[i, j] = report.total
    return RunResult(acc, model.p, snrs, sig, None if powers is None else energy, report,
                     time.perf_counter() - t0)


def result_rows(experiment_id: str, res: RunResult, n_sensors: int, train_snr: str, test_snr: str,
                drift_time: float) -> list[ResultRow]:
    rows = []
    e = res.energy_j.ravel() if res.energy_j is not None else [None] * res.accuracies.size
    for k, (a, s2) in enumerate(zip(res.accuracies.ravel(), res.sigma_n2.ravel())):
        rows.append(ResultRow(experiment_id, n_sensors, train_snr, test_snr, float(drift_time), k,
                              float(a), float(res.p_final), float(s2),
                              None if e[k] is None else float(e[k])))
    return rows


SWEEP_KINDS = ("sensors", "snr_matrix", "drift")


@dataclass
class SweepSpec:
    kind: str = "sensors"
    sensors: list[int] = field(default_factory=lambda: [1, 2, 3, 4, 5])
    train_snr_db: list[float] = field(default_factory=lambda: [10.0])
    test_snr_db: list[float] = field(default_factory=lambda: [10.0])
    drift_times_s: list[float] = field(default_factory=lambda: [1.0, 3600.0, 86400.0, 2592000.0, 31536000.0])
    digital_reference: bool = True

    def __post_init__(self):
        if self.kind not in SWEEP_KINDS:
            raise ConfigError(f"unknown sweep kind {self.kind!r}")
        grid = {"sensors": self.sensors, "snr_matrix": self.train_snr_db and self.test_snr_db,
                "drift": self.drift_times_s}[self.kind]
        if not grid:
            raise ConfigError(f"empty grid for sweep {self.kind!r}")


def sweep(spec: SweepSpec, train_cfg: TrainConfig, infer_cfg: InferConfig, train_set: Dataset,
          val_set: Dataset, test_set: Dataset, factory: ModelFactory,
          models: dict | None = None) -> tuple[list[ResultRow], dict]:
    """Run a grid and return one row per (cell, trial).

    ``models`` caches trained networks keyed by ``(M, train channel label)``;
    pass the returned dict back in to reuse them across sweeps.
    """
    models = {} if models is None else models
    rows: list[ResultRow] = []

    def replace(cfg, **kw):
        return type(cfg)(**{**{f.name: getattr(cfg, f.name) for f in fields(cfg)}, **kw})

    def trained(m_list, channel):
        missing = [m for m in m_list if (m, snr_label(channel)) not in models]
        if missing:
            # sequential init always starts from M=1 so cached models stay comparable
            chain = list(range(1, max(missing) + 1))
            have = [m for m in chain if (m, snr_label(channel)) in models]
            start = max(have) if have else 0
            init = models[(start, snr_label(channel))].model if start else None
            res = train_sequential(replace(train_cfg, channel=channel, init_from=init),
                                   chain[start:], train_set, val_set, factory)
            for m, r in res.items():
                models[(m, snr_label(channel))] = r
        return {m: models[(m, snr_label(channel))] for m in m_list}

    def run(tag, model, m, train_lbl, test_channel, drift, analog):
        cfg = replace(infer_cfg, n_sensors=m, channel=test_channel, drift_time=drift, analog=analog)
        res = infer_analog(model, test_set, cfg)
        log.info("%s M=%d train=%s test=%s drift=%g: %.4f +- %.4f", tag, m, train_lbl,
                 snr_label(test_channel), drift, res.mean, res.std)
        rows.extend(result_rows(tag, res, m, train_lbl, snr_label(test_channel), drift))

    modes = [("analog", True)] + ([("fp32", False)] if spec.digital_reference else [])
    if spec.kind == "sensors":
        tr = trained(spec.sensors, train_cfg.channel)
        for tag, analog in modes:
            for m in spec.sensors:
                run(f"sensors-{tag}", tr[m].model, m, snr_label(train_cfg.channel),
                    infer_cfg.channel, infer_cfg.drift_time, analog)
    elif spec.kind == "snr_matrix":
        m = infer_cfg.n_sensors
        for tag, analog in modes:
            for train_snr in spec.train_snr_db:
                ch = ChannelSpec(train_snr)
                model = trained([m], ch)[m].model
                for test_snr in spec.test_snr_db:
                    run(f"snr_matrix-{tag}", model, m, snr_label(ch), ChannelSpec(test_snr),
                        infer_cfg.drift_time, analog)
    else:
        m = infer_cfg.n_sensors
        model = trained([m], train_cfg.channel)[m].model
        for drift in spec.drift_times_s:
            run("drift-analog", model, m, snr_label(train_cfg.channel), infer_cfg.channel, drift, True)
    return rows, models
