"""Phase-change-memory device model for analog weight storage.

Weights are stored on differential pairs of PCM devices. A target
conductance is programmed with Gaussian error, then decays by a power law
(``(t / t_c) ** -nu``) and is read back with a time-dependent Gaussian
fluctuation. All conductances are in microsiemens.

Devices whose target is zero (the idle half of every pair) are left in the
reset state: they are not programmed and contribute exactly zero.
"""
from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np

from .streams import stream


@dataclass(frozen=True)
class PcmParams:
    g_min: float = 0.0
    g_max: float = 25.0
    t_c: float = 20.0
    t_read: float = 250e-9
    prog_coeffs: tuple[float, float, float] = (-1.1731, 1.9650, 0.2635)
    mu_nu_coeffs: tuple[float, float] = (-0.0155, 0.0244)
    mu_nu_clamp: tuple[float, float] = (0.049, 0.1)
    sigma_nu_coeffs: tuple[float, float] = (-0.0125, -0.0059)
    sigma_nu_clamp: tuple[float, float] = (0.008, 0.045)
    q_s_coeffs: tuple[float, float] = (0.0088, 0.65)
    q_s_max: float = 0.2
    programming_noise: bool = True
    drift: bool = True
    read_noise: bool = True

    def __post_init__(self):
        if not 0 <= self.g_min < self.g_max:
            raise ValueError(f"need 0 <= g_min < g_max, got {self.g_min}, {self.g_max}")
        if self.t_c <= 0 or self.t_read <= 0:
            raise ValueError("t_c and t_read must be positive")

    @property
    def g_range(self) -> float:
        return self.g_max - self.g_min

    def noiseless(self) -> "PcmParams":
        return self.replace(programming_noise=False, drift=False, read_noise=False)

    def replace(self, **changes) -> "PcmParams":
        return replace(self, **changes)

    def describe(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _nonneg(g_t) -> np.ndarray:
    g_t = np.asarray(g_t, dtype=np.float64)
    if np.any(g_t < 0):
        raise ValueError("target conductance must be nonnegative")
    return g_t


def sigma_prog(g_t, params: PcmParams = PcmParams()) -> np.ndarray:
    """Programming-noise std (uS); the quadratic is evaluated at ``g_t / g_max``."""
    g = _nonneg(g_t) / params.g_max
    a, b, c = params.prog_coeffs
    return np.maximum(a * g * g + b * g + c, 0.0)


def mu_nu(g_t, params: PcmParams = PcmParams()) -> np.ndarray:
    a, b = params.mu_nu_coeffs
    lo, hi = params.mu_nu_clamp
    with np.errstate(divide="ignore"):
        return np.clip(a * np.log(_nonneg(g_t)) + b, lo, hi)


def sigma_nu(g_t, params: PcmParams = PcmParams()) -> np.ndarray:
    a, b = params.sigma_nu_coeffs
    lo, hi = params.sigma_nu_clamp
    with np.errstate(divide="ignore"):
        return np.clip(a * np.log(_nonneg(g_t)) + b, lo, hi)


def q_s(g_t, params: PcmParams = PcmParams()) -> np.ndarray:
    k, e = params.q_s_coeffs
    with np.errstate(divide="ignore"):
        return np.minimum(k / np.power(_nonneg(g_t), e), params.q_s_max)


def sigma_read(g_drift, g_t, t: float, params: PcmParams = PcmParams()) -> np.ndarray:
    """Read-noise std at device time ``t`` (s)."""
    arg = (t + params.t_c) / (2.0 * params.t_read)
    if arg <= 1.0:
        raise ValueError(f"read-noise log argument {arg:g} <= 1; t_read too large")
    return np.asarray(g_drift, dtype=np.float64) * q_s(g_t, params) * np.sqrt(np.log(arg))


def _clip(g, params):
    return np.clip(g, 0.0, params.g_max)


def program(g_t, params: PcmParams, rng: np.random.Generator) -> np.ndarray:
    """Write ``g_t`` with independent Gaussian programming error per cell."""
    g_t = _nonneg(g_t)
    if not params.programming_noise:
        return g_t.copy()
    return _clip(g_t + rng.standard_normal(g_t.shape) * sigma_prog(g_t, params), params)


def sample_nu(g_t, params: PcmParams, rng: np.random.Generator) -> np.ndarray:
    """Drift exponent per cell, drawn once at programming time."""
    g_t = _nonneg(g_t)
    if not params.drift:
        return np.zeros_like(g_t)
    return mu_nu(g_t, params) + rng.standard_normal(g_t.shape) * sigma_nu(g_t, params)


def _check_time(t, params):
    if t < params.t_c:
        raise ValueError(f"device time {t} s precedes programming epoch t_c={params.t_c} s")


def drift(g_prog, t: float, params: PcmParams, nu) -> np.ndarray:
    _check_time(t, params)
    g = np.asarray(g_prog, dtype=np.float64) * np.power(t / params.t_c, -np.asarray(nu))
    return _clip(g, params)


def read(g_drift, t: float, g_t, params: PcmParams, rng: np.random.Generator) -> np.ndarray:
    """One read of drifted conductances; fresh noise every call."""
    _check_time(t, params)
    g_drift = np.asarray(g_drift, dtype=np.float64)
    if not params.read_noise:
        return g_drift.copy()
    sd = sigma_read(g_drift, g_t, t, params)
    return _clip(g_drift + rng.standard_normal(g_drift.shape) * sd, params)


@dataclass(frozen=True)
class CrossbarProgram:
    """Target conductances of a weight tensor on differential pairs."""

    g_pos: np.ndarray
    g_neg: np.ndarray
    w_scale: float
    params: PcmParams
    programmed_at: float = 0.0

    @property
    def shape(self):
        return self.g_pos.shape


def map_weights(weights, params: PcmParams = PcmParams()) -> CrossbarProgram:
    w = np.asarray(weights, dtype=np.float64)
    scale = float(np.max(np.abs(w))) if w.size else 0.0
    if not scale > 0:
        raise ValueError("cannot map an all-zero weight tensor (scale undefined)")
    g = (w / scale) * params.g_range
    g_pos = np.where(w > 0, g, 0.0)
    g_neg = np.where(w < 0, -g, 0.0)
    return CrossbarProgram(g_pos, g_neg, scale, params, programmed_at=params.t_c)


def reverse_map(xbar: CrossbarProgram, g_pos, g_neg) -> np.ndarray:
    """Inverse of :func:`map_weights` applied to (noisy) conductances."""
    diff = np.asarray(g_pos, dtype=np.float64) - np.asarray(g_neg, dtype=np.float64)
    return diff * (xbar.w_scale / xbar.params.g_range)


@dataclass
class ProgrammedCrossbar:
    """Conductances after one programming pass, with cached drift exponents."""

    target: CrossbarProgram
    g_prog_pos: np.ndarray
    g_prog_neg: np.ndarray
    nu_pos: np.ndarray
    nu_neg: np.ndarray

    def drifted(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Conductances at ``t`` before read noise."""
        prm = self.target.params
        return (drift(self.g_prog_pos, t, prm, self.nu_pos), drift(self.g_prog_neg, t, prm, self.nu_neg))

    def conductances(self, t: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        prm = self.target.params
        out = []
        for g_prog, nu, g_t in ((self.g_prog_pos, self.nu_pos, self.target.g_pos),
                                (self.g_prog_neg, self.nu_neg, self.target.g_neg)):
            g = read(drift(g_prog, t, prm, nu), t, g_t, prm, rng)
            out.append(np.where(g_t > 0, g, 0.0))
        return out[0], out[1]

    def read_weights(self, t: float, rng: np.random.Generator) -> np.ndarray:
        g_pos, g_neg = self.conductances(t, rng)
        return reverse_map(self.target, g_pos, g_neg)


def program_crossbar(xbar: CrossbarProgram, rng: np.random.Generator) -> ProgrammedCrossbar:
    prm = xbar.params
    parts = []
    for g_t in (xbar.g_pos, xbar.g_neg):
        active = g_t > 0
        g_prog = np.where(active, program(g_t, prm, rng), 0.0)
        nu = np.where(active, sample_nu(g_t, prm, rng), 0.0)
        parts.append((g_prog, nu))
    (gp, nup), (gn, nun) = parts
    return ProgrammedCrossbar(xbar, gp, gn, nup, nun)


def noisy_weights(weights, t: float, params: PcmParams, rng: np.random.Generator) -> np.ndarray:
    """Map, program, drift to ``t``, read once and reverse-map a weight tensor."""
    return program_crossbar(map_weights(weights, params), rng).read_weights(t, rng)


def noise_rng(seed: int, sensor: int, trial: int) -> np.random.Generator:
    """Generator for one (seed, sensor, trial) noise draw."""
    return stream(seed, "pcm", sensor, trial)
