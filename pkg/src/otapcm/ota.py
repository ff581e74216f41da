"""Over-the-air AWGN multiple-access channel and sensor-fusion operators.

Features from ``M`` sensors are stacked on the leading axis, ``F.shape ==
(M, N, d)`` for a batch of ``N`` samples with ``d`` features each. The MAC
superimposes what every sensor transmits in one channel use and adds white
Gaussian noise whose variance is set from a target SNR.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import DimensionError, StateError

FusionMode = Literal["lp", "average", "exact_max"]
FUSION_MODES = ("lp", "average", "exact_max")


@dataclass(frozen=True)
class ChannelSpec:
    """Channel quality. ``snr_db=None`` means a noiseless channel.

    With ``snr_range_db`` set, each call to :meth:`draw_snr_db` samples an SNR
    uniformly in linear scale between the two dB endpoints.
    """

    snr_db: float | None = None
    snr_range_db: tuple[float, float] | None = None

    def __post_init__(self):
        if self.snr_range_db is not None:
            lo, hi = self.snr_range_db
            if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
                raise ValueError(f"invalid SNR range {self.snr_range_db}")
        if self.snr_db is not None and not np.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite (use None for noiseless)")

    @property
    def noiseless(self) -> bool:
        return self.snr_db is None and self.snr_range_db is None

    def draw_snr_db(self, rng: np.random.Generator) -> float | None:
        if self.snr_range_db is None:
            return self.snr_db
        lo, hi = (10.0 ** (v / 10.0) for v in self.snr_range_db)
        return float(10.0 * np.log10(rng.uniform(lo, hi)))


@dataclass(frozen=True)
class FusionSpec:
    mode: FusionMode = "lp"
    p: float = 1.0
    p_trainable: bool = True

    def __post_init__(self):
        if self.mode not in FUSION_MODES:
            raise ValueError(f"unknown fusion mode {self.mode!r}")
        if not self.p > 0:
            raise ValueError("fusion exponent p must be positive")

    def channel_uses(self, n_sensors: int) -> int:
        return n_sensors if self.mode == "exact_max" else 1


@dataclass
class MacRealization:
    noise: np.ndarray
    sigma2: np.ndarray  # per example, broadcastable against the noise


def _stack(features) -> np.ndarray:
    if isinstance(features, np.ndarray):
        return features
    arrs = [np.asarray(f, dtype=np.float64) for f in features]
    if len({a.shape for a in arrs}) > 1:
        raise DimensionError(f"sensor features differ in shape: {[a.shape for a in arrs]}")
    return np.stack(arrs)


def preprocess(features: np.ndarray, p: float) -> np.ndarray:
    """Per-sensor transmit map ``x = F ** p`` for nonnegative features."""
    features = np.asarray(features, dtype=np.float64)
    if np.any(features < 0):
        raise ValueError("preprocess requires nonnegative features")
    if not p > 0:
        raise ValueError("p must be positive")
    return np.power(features, p)


def noise_variance_from_snr(signal_power: float, snr_db: float) -> float:
    if not signal_power > 0:
        raise ValueError(f"signal power must be positive, got {signal_power}")
    return signal_power / 10.0 ** (snr_db / 10.0)


def _reference_power(signal: np.ndarray, reference: str) -> np.ndarray:
    """Mean per-element power, per example (last axis) or over the whole batch."""
    if reference == "example":
        return np.mean(np.square(signal), axis=-1, keepdims=True)
    if reference == "batch":
        return np.full(signal.shape[:-1] + (1,), np.mean(np.square(signal)))
    raise ValueError(f"unknown SNR reference {reference!r}")


def channel_noise(signal: np.ndarray, snr_db: float | None, rng: np.random.Generator | None,
                  reference: str = "example") -> MacRealization:
    """AWGN realisation calibrated against the power of ``signal``."""
    if snr_db is None:
        sigma2 = np.zeros(signal.shape[:-1] + (1,))
        return MacRealization(np.zeros_like(signal), sigma2)
    power = _reference_power(signal, reference)
    sigma2 = power / 10.0 ** (snr_db / 10.0)
    noise = rng.standard_normal(signal.shape) * np.sqrt(sigma2)
    return MacRealization(noise, sigma2)


def mac_transmit(xs, snr_db: float | None = None, rng: np.random.Generator | None = None,
                 reference: str = "example", sigma2: float | None = None):
    """One MAC use: ``y = sum_m x_m + n``.

    ``sigma2`` pins the noise variance directly; otherwise it follows from
    ``snr_db`` relative to the noiseless superposition.
    """
    xs = _stack(xs)
    clean = xs.sum(axis=0)
    if sigma2 is not None:
        if sigma2 < 0:
            raise ValueError("sigma2 must be nonnegative")
        noise = rng.standard_normal(clean.shape) * np.sqrt(sigma2) if sigma2 > 0 else np.zeros_like(clean)
        real = MacRealization(noise, np.full(clean.shape[:-1] + (1,), float(sigma2)))
    else:
        real = channel_noise(clean, snr_db, rng, reference)
    return clean + real.noise, real


def postprocess(y: np.ndarray, p: float) -> np.ndarray:
    """Receiver map ``max(y, 0) ** (1/p)``; negative (noise-only) values clamp to zero."""
    return np.power(np.maximum(y, 0.0), 1.0 / p)


def fuse_lp(features, p: float, snr_db: float | None = None, rng=None, reference: str = "example"):
    features = _stack(features)
    y, real = mac_transmit(preprocess(features, p), snr_db, rng, reference)
    return postprocess(y, p), y, real


def fuse_average(features, snr_db: float | None = None, rng=None, reference: str = "example"):
    features = _stack(features)
    y, real = mac_transmit(features, snr_db, rng, reference)
    return y / features.shape[0], real


def fuse_exact_max(features, snr_db: float | None = None, rng=None, reference: str = "example"):
    """Orthogonal baseline: each sensor gets its own channel use, max is taken after reception.

    Every use sees independent noise at the variance an OTA use of the summed
    features would see. Returns ``(fused, received, realization, channel_uses)``.
    """
    features = _stack(features)
    real = channel_noise(features.sum(axis=0), snr_db, rng, reference)
    if snr_db is None:
        received = features.copy()
    else:
        received = features + rng.standard_normal(features.shape) * np.sqrt(real.sigma2)
    return received.max(axis=0), received, real, features.shape[0]


def fusion_gradients(y: np.ndarray, features, p: float):
    """Partial derivatives of the Lp fused output at the received ``y``.

    Returns ``(dfused_dF, dfused_dp)`` with ``dfused_dF`` shaped like the
    stacked features. Noise is held constant; clamped coordinates (``y <= 0``)
    and zero features get zero gradient.
    """
    features = _stack(features)
    y = np.asarray(y, dtype=np.float64)
    active = y > 0
    s = np.where(active, y, 1.0)
    fused = np.where(active, np.power(s, 1.0 / p), 0.0)
    ratio = fused / s  # S^(1/p - 1)
    pos = features > 0
    safe_f = np.where(pos, features, 1.0)
    f_pm1 = np.where(pos, np.power(safe_f, p - 1.0), 0.0)
    d_f = np.where(active, ratio * f_pm1, 0.0)
    flogf = np.where(pos, np.power(safe_f, p) * np.log(safe_f), 0.0).sum(axis=0)
    d_p = np.where(active, fused * (-np.log(s) / p ** 2 + flogf / (p * s)), 0.0)
    return d_f, d_p


class Fusion:
    """Differentiable fusion stage used inside a model.

    ``forward`` takes stacked front-end outputs ``(M, N, d)`` and returns the
    fused ``(N, d)`` tensor. ``backward`` returns the gradient w.r.t. the
    stacked features and w.r.t. ``p`` (zero unless mode is ``lp``).
    """

    def __init__(self, mode: FusionMode = "lp"):
        if mode not in FUSION_MODES:
            raise ValueError(f"unknown fusion mode {mode!r}")
        self.mode = mode
        self._cache = None
        self.channel_uses = 0
        self.realization: MacRealization | None = None

    def forward(self, features: np.ndarray, p: float, snr_db: float | None = None,
                rng: np.random.Generator | None = None, reference: str = "example") -> np.ndarray:
        m = features.shape[0]
        if self.mode == "lp":
            fused, y, real = fuse_lp(features, p, snr_db, rng, reference)
            self._cache = (features, y, p)
            self.channel_uses = 1
        elif self.mode == "average":
            fused, real = fuse_average(features, snr_db, rng, reference)
            self._cache = (m,)
            self.channel_uses = 1
        else:
            fused, received, real, uses = fuse_exact_max(features, snr_db, rng, reference)
            idx = received.argmax(axis=0)
            self._cache = (m, idx)
            self.channel_uses = uses
        self.realization = real
        return fused

    def backward(self, grad_out: np.ndarray) -> tuple[np.ndarray, float]:
        if self._cache is None:
            raise StateError("fusion backward called before forward")
        if self.mode == "lp":
            features, y, p = self._cache
            d_f, d_p = fusion_gradients(y, features, p)
            return d_f * grad_out, float(np.sum(d_p * grad_out))
        if self.mode == "average":
            (m,) = self._cache
            return np.broadcast_to(grad_out / m, (m,) + grad_out.shape).copy(), 0.0
        m, idx = self._cache
        onehot = np.arange(m)[:, None, None] == idx[None]
        return onehot * grad_out, 0.0
