"""Experiment configuration: strict JSON loading, defaults and overrides.

Every block is a dataclass. Unknown keys and type mismatches are rejected
with the dotted key path, so a typo in a device constant cannot silently
fall back to a default.
"""
from __future__ import annotations

import json
import logging
import types
import typing
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

from .errors import ConfigError
from .pcm import PcmParams

log = logging.getLogger(__name__)


@dataclass
class SyntheticConfig:
    n: int = 600
    classes: int = 3
    side: int = 6
    separation: float = 8.0
    seed: int = 0


@dataclass
class DatasetConfig:
    name: str = "mnist"  # mnist | blobs
    root: str | None = None
    n_train: int = 10000
    n_test: int = 2000
    val_fraction: float = 0.1
    rotate: bool = True
    interpolation: str = "bilinear"  # bilinear | nearest
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)


@dataclass
class ModelConfig:
    arch: str = "mnist"  # mnist | mlp
    channels: int = 10
    kernel: int = 5
    hidden: int = 50


@dataclass
class ChannelConfig:
    train_snr_db: float | None = 10.0
    train_snr_range_db: list[float] | None = None
    test_snr_db: float | None = 10.0
    test_snr_range_db: list[float] | None = None


@dataclass
class FusionConfig:
    mode: str = "lp"  # lp | average | exact_max
    p: float = 1.0
    p_trainable: bool = True
    p_init: float | None = None


@dataclass
class TrainBlock:
    sensors: int = 5
    sequential: bool = True
    epochs: int = 5
    batch_size: int = 32
    lr: float = 1e-3
    patience: int = 10
    init_from: str | None = None


@dataclass
class InferBlock:
    checkpoint: str | None = None
    sensors: int = 5
    drift_time_s: float = 0.0
    programming_trials: int = 5
    channel_trials: int = 5
    analog: bool = True


@dataclass
class SweepBlock:
    kind: str = "sensors"  # sensors | snr_matrix | drift
    sensors: list[int] = field(default_factory=lambda: [1, 2, 3, 4, 5])
    train_snr_db: list[float] = field(default_factory=lambda: [10.0])
    test_snr_db: list[float] = field(default_factory=lambda: [10.0])
    drift_times_s: list[float] = field(
        default_factory=lambda: [1.0, 3600.0, 86400.0, 2592000.0, 31536000.0])
    digital_reference: bool = True


@dataclass
class EnergyBlock:
    enabled: bool = False
    g_max: float = 50.0
    v_max: float = 0.5
    duration_s: float = 1e-3
    rpi_power_w: float = 15.0
    n_sensors: int = 10
    n_cells: int | None = None  # default: front-end parameter count


@dataclass
class OutputBlock:
    dir: str = "runs/default"


@dataclass
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    device: PcmParams = field(default_factory=PcmParams)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    train: TrainBlock = field(default_factory=TrainBlock)
    infer: InferBlock = field(default_factory=InferBlock)
    sweep: SweepBlock = field(default_factory=SweepBlock)
    energy: EnergyBlock = field(default_factory=EnergyBlock)
    output: OutputBlock = field(default_factory=OutputBlock)
    seed: int = 0


_CHOICES = {
    "dataset.name": ("mnist", "blobs"),
    "dataset.interpolation": ("bilinear", "nearest"),
    "model.arch": ("mnist", "mlp"),
    "fusion.mode": ("lp", "average", "exact_max"),
    "sweep.kind": ("sensors", "snr_matrix", "drift"),
}


def _coerce(tp, value, path: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(inner[0], value, path)
    if is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected an object, got {type(value).__name__}")
        return _build(tp, value, path + ".")
    if origin in (list, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list, got {type(value).__name__}")
        if origin is tuple and args and args[-1] is not Ellipsis:
            if len(value) != len(args):
                raise ConfigError(f"{path}: expected {len(args)} items, got {len(value)}")
            return tuple(_coerce(a, v, f"{path}[{i}]") for i, (a, v) in enumerate(zip(args, value)))
        item = args[0] if args else typing.Any
        out = [_coerce(item, v, f"{path}[{i}]") for i, v in enumerate(value)]
        return tuple(out) if origin is tuple else out
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected a boolean, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    return value


def _build(cls, data: dict, prefix: str = ""):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in fields(cls) if f.init}
    for key in data:
        if key not in names:
            raise ConfigError(f"unknown key {prefix + key!r}")
    kwargs = {}
    for f in fields(cls):
        if f.name in data:
            path = prefix + f.name
            kwargs[f.name] = _coerce(hints[f.name], data[f.name], path)
            if path in _CHOICES and kwargs[f.name] not in _CHOICES[path]:
                raise ConfigError(f"{path}: {kwargs[f.name]!r} not in {_CHOICES[path]}")
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{prefix.rstrip('.') or 'config'}: {exc}") from None


def from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be an object")
    return _build(ExperimentConfig, data)


def to_dict(cfg: ExperimentConfig) -> dict:
    return json.loads(json.dumps(asdict(cfg)))


def canonical(cfg: ExperimentConfig) -> str:
    return json.dumps(to_dict(cfg), sort_keys=True, indent=2) + "\n"


def _set_path(data: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = data
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"{dotted}: {k} is not a block")
    node[keys[-1]] = value


def parse_override(text: str) -> tuple[str, object]:
    """``key.path=value``; the value is parsed as JSON, falling back to a string."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like key.path=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def parse_config(path=None, overrides: dict | None = None, check_files: bool = True) -> ExperimentConfig:
    """Load ``path`` (JSON, may be absent), apply dotted ``overrides`` and validate.

    Overrides win over file values; defaults fill everything else.
    """
    data: dict = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8") or "{}")
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    for key, value in (overrides or {}).items():
        _set_path(data, key, value)
    cfg = from_dict(data)
    if check_files:
        check_paths(cfg)
    log.info("resolved config:\n%s", canonical(cfg))
    return cfg


def check_paths(cfg: ExperimentConfig) -> None:
    for key, value in (("train.init_from", cfg.train.init_from),
                       ("infer.checkpoint", cfg.infer.checkpoint)):
        if value is not None and not Path(value).exists():
            raise ConfigError(f"{key}: file {value} does not exist")
    if cfg.dataset.name == "mnist" and cfg.dataset.root is not None and not Path(cfg.dataset.root).is_dir():
        raise ConfigError(f"dataset.root: directory {cfg.dataset.root} does not exist")


def write_snapshot(cfg: ExperimentConfig, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "config.resolved.json"
    path.write_text(canonical(cfg), encoding="utf-8")
    return path
