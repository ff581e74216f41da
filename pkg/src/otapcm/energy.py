"""Per-inference energy of memristive front-ends versus digital sensors.

Only the matrix-vector products on the crossbar are counted; peripherals,
radio and server-side compute are excluded (``scope == "mvm-only"``).
Conductances are given in microsiemens, voltages in volts, durations in
seconds, energies in joules.
"""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field

import numpy as np

US = 1e-6  # microsiemens -> siemens


@dataclass(frozen=True)
class EnergySpec:
    g_max: float = 50.0        # uS
    v_max: float = 0.5         # V
    duration: float = 1e-3     # s per MVM
    rpi_power: float = 15.0    # W
    n_sensors: int = 10

    def __post_init__(self):
        for name in ("g_max", "v_max", "duration", "rpi_power"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.n_sensors < 1:
            raise ValueError("n_sensors must be >= 1")


@dataclass
class EnergyReport:
    per_sensor: list[float]
    upper_bound: float
    digital_total: float
    voltage_scale: list[float] = field(default_factory=list)
    scope: str = "mvm-only"

    @property
    def total(self) -> float:
        return float(np.sum(self.per_sensor))

    @property
    def efficiency_ratio(self) -> float:
        return efficiency_ratio(self)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sensor", "energy_j"])
        for i, e in enumerate(self.per_sensor):
            w.writerow([i, repr(float(e))])
        for key in ("total", "upper_bound", "digital_total", "efficiency_ratio"):
            w.writerow([key, repr(float(getattr(self, key)))])
        w.writerow(["scope", self.scope])
        return buf.getvalue()

    def summary(self) -> str:
        lines = [
            f"scope                 : {self.scope}",
            f"sensors               : {len(self.per_sensor)}",
            f"memristor total       : {self.total:.6g} J",
            f"memristor upper bound : {self.upper_bound:.6g} J",
            f"digital baseline      : {self.digital_total:.6g} J",
            f"efficiency (digital / upper bound): {self.efficiency_ratio:.6g}",
        ]
        return "\n".join(lines)

    def as_dict(self) -> dict:
        d = asdict(self)
        d.update(total=self.total, efficiency_ratio=self.efficiency_ratio)
        return d


def mvm_energy(conductance_us, voltage, duration: float) -> float:
    """``sum(G * V**2) * t`` with V broadcast against G (e.g. one voltage per input column)."""
    g = np.asarray(conductance_us, dtype=np.float64)
    if np.any(g < 0):
        raise ValueError("conductance must be nonnegative")
    v2 = np.square(np.asarray(voltage, dtype=np.float64))
    return float(np.sum(g * US * v2) * duration)


def upper_bound_energy(n_cells: int, spec: EnergySpec) -> float:
    """Every cell at ``g_max`` driven at ``v_max`` on all sensors."""
    if n_cells < 0:
        raise ValueError("n_cells must be nonnegative")
    return spec.n_sensors * n_cells * spec.g_max * US * spec.v_max ** 2 * spec.duration


def upper_bound_per_sensor(n_cells: int, spec: EnergySpec) -> float:
    return n_cells * spec.g_max * US * spec.v_max ** 2 * spec.duration


def digital_baseline_energy(spec: EnergySpec) -> float:
    if spec.duration <= 0:
        raise ValueError("duration must be positive")
    return spec.n_sensors * spec.rpi_power * spec.duration


def efficiency_ratio(report: EnergyReport) -> float:
    if report.upper_bound <= 0:
        raise ZeroDivisionError("memristor energy bound is zero")
    return report.digital_total / report.upper_bound


def activation_voltages(x, v_max: float, scale: float | None = None):
    """Linear map of nonnegative activations into ``[0, v_max]``; returns (volts, scale)."""
    x = np.asarray(x, dtype=np.float64)
    scale = float(np.max(np.abs(x))) if scale is None else scale
    if scale <= 0:
        return np.zeros_like(x), 0.0
    return np.clip(x / scale, -1.0, 1.0) * v_max, scale


def energy_report(n_cells: int, spec: EnergySpec, per_sensor: list[float] | None = None,
                  voltage_scale: list[float] | None = None) -> EnergyReport:
    """Report for ``spec.n_sensors`` crossbars of ``n_cells`` elements.

    Without measured ``per_sensor`` energies each sensor is charged its
    worst case.
    """
    if per_sensor is None:
        per_sensor = [upper_bound_per_sensor(n_cells, spec)] * spec.n_sensors
    return EnergyReport(list(map(float, per_sensor)), upper_bound_energy(n_cells, spec),
                        digital_baseline_energy(spec), list(voltage_scale or []))
