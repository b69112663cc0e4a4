"""Normalized ergonomic risk indexes, fatigue state and aggregation.

Eight instantaneous indexes are computed per frame, each normalized by a
subject-specific maximum so that a well-calibrated signal stays in [0, 1]:

    displacement     |q| over the joint range of motion
    velocity         |qd| over the peak angular speed
    acceleration     |qdd| over the peak angular acceleration
    overload_torque  external-load torque over its tolerated maximum
    fatigue          accumulated overload exposure over its capacity
    overload_power   velocity index times torque index
    com_shift        CoM height deviation from the neutral posture (scalar)
    compression      inward axial joint force over its maximum

Signed raw quantities are normalized by magnitude so every index shares
the same [0, 1] scale; the signed values remain available upstream.
Values beyond 1 are preserved (they indicate the calibrated maximum was
exceeded); ``SATURATION_MARGIN`` bounds the overshoot regarded as sane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Iterable, Sequence

import numpy as np

from .model import N_JOINTS

INDEX_NAMES = (
    "displacement", "velocity", "acceleration", "overload_torque",
    "fatigue", "overload_power", "com_shift", "compression",
)
JOINT_LEVEL_INDEXES = tuple(n for n in INDEX_NAMES if n != "com_shift")

# overshoot beyond which an entry counts as a calibration violation
SATURATION_MARGIN = 0.25


class IndexError_(ValueError):
    """Raised for malformed index inputs (zero maxima, bad thresholds...)."""


def _check_positive(maxima: np.ndarray, what: str) -> np.ndarray:
    m = np.asarray(maxima, dtype=float)
    if not np.all(np.isfinite(m)) or np.any(m <= 0.0):
        raise IndexError_(f"{what} must be strictly positive and finite, got {m}")
    return m


def joint_displacement_index(q, q_max, q_min) -> np.ndarray:
    """|q| divided by the joint range of motion."""
    q = np.asarray(q, dtype=float)
    rng = np.asarray(q_max, dtype=float) - np.asarray(q_min, dtype=float)
    if np.any(rng <= 0.0) or not np.all(np.isfinite(rng)):
        raise IndexError_(f"joint range must be strictly positive, got {rng}")
    return np.abs(q) / rng


def joint_velocity_index(qd, qd_max) -> np.ndarray:
    """|qd| divided by the peak angular speed."""
    return np.abs(np.asarray(qd, dtype=float)) / _check_positive(qd_max, "qd_max")


def joint_acceleration_index(qdd, qdd_max) -> np.ndarray:
    """|qdd| divided by the peak angular acceleration."""
    return np.abs(np.asarray(qdd, dtype=float)) / _check_positive(qdd_max, "qdd_max")


def overloading_torque_index(delta_tau, delta_tau_max) -> np.ndarray:
    """|load-induced torque| divided by the tolerated maximum."""
    return np.abs(np.asarray(delta_tau, dtype=float)) / _check_positive(delta_tau_max, "torque maxima")


def overloading_power_index(velocity_index, torque_index) -> np.ndarray:
    """Elementwise product of the velocity and torque indexes."""
    return np.asarray(velocity_index, dtype=float) * np.asarray(torque_index, dtype=float)


def com_shift_index(com_z: float, neutral_com_z: float | None, shift_max: float) -> float:
    """|CoM height minus neutral height| divided by the calibrated maximum.

    The subject's weight cancels between the potential-energy numerator
    and denominator, so only heights enter.
    """
    if neutral_com_z is None:
        raise IndexError_("neutral posture not registered")
    if not (shift_max > 0.0 and math.isfinite(shift_max)):
        raise IndexError_(f"CoM shift maximum must be positive, got {shift_max}")
    return abs(float(com_z) - float(neutral_com_z)) / float(shift_max)


def compressive_force_index(f_c, f_c_max) -> np.ndarray:
    """Compressive joint force divided by its calibrated maximum."""
    return np.abs(np.asarray(f_c, dtype=float)) / _check_positive(f_c_max, "compressive maxima")


def fatigue_index(tau_fatigue, tau_fatigue_max) -> np.ndarray:
    """Accumulated overload exposure divided by its capacity."""
    arr = tau_fatigue.values if isinstance(tau_fatigue, FatigueState) else tau_fatigue
    return np.asarray(arr, dtype=float) / _check_positive(tau_fatigue_max, "fatigue maxima")


# ---------------------------------------------------------------------------
# Fatigue accumulation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FatigueState:
    """Per-joint accumulated overload-exposure torque and phase."""

    values: tuple[float, ...] = (0.0,) * N_JOINTS
    phase: tuple[str, ...] = ("recovering",) * N_JOINTS
    t: float = 0.0

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if any(v < 0.0 or not math.isfinite(v) for v in vals):
            raise IndexError_(f"fatigue state must be finite and >= 0, got {vals}")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "phase", tuple(self.phase))

    def as_array(self) -> np.ndarray:
        return np.array(self.values)


def update_fatigue(state: FatigueState, delta_tau, dt: float,
                   lambda_f, lambda_r, theta_f) -> FatigueState:
    """Advance the fatigue state over one interval of length ``dt``.

    Above the activation threshold the state rises first-order toward the
    sustained |load torque|; below it the state decays first-order toward
    zero.  The update integrates the dynamics exactly over the step, so
    a constant load reproduces the continuous-time exponential solution
    at any rate.
    """
    if not (dt > 0.0 and math.isfinite(dt)):
        raise IndexError_(f"dt must be > 0, got {dt}")
    lf = np.broadcast_to(np.asarray(lambda_f, dtype=float), (N_JOINTS,))
    lr = np.broadcast_to(np.asarray(lambda_r, dtype=float), (N_JOINTS,))
    th = np.broadcast_to(np.asarray(theta_f, dtype=float), (N_JOINTS,))
    if np.any(lf <= 0.0) or np.any(lr <= 0.0):
        raise IndexError_("fatigue and recovery rates must be positive")
    d = np.abs(np.asarray(delta_tau, dtype=float))
    vals = []
    phases = []
    for k in range(N_JOINTS):
        v = state.values[k]
        if d[k] >= th[k]:
            v = d[k] + (v - d[k]) * math.exp(-lf[k] * dt)
            phases.append("fatiguing")
        else:
            v = v * math.exp(-lr[k] * dt)
            phases.append("recovering")
        vals.append(v)
    return FatigueState(tuple(vals), tuple(phases), state.t + dt)


# ---------------------------------------------------------------------------
# Per-frame index vector
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IndexVector:
    """All indexes for one instant.

    Joint-level entries are 7-vectors in chain order; ``com_shift`` is the
    single whole-body entry.  An index that cannot be computed for the
    session (for example compression without a force/torque sensor) is
    ``None`` -- never zero -- and reported as unavailable.
    """

    timestamp: float
    displacement: np.ndarray | None = None
    velocity: np.ndarray | None = None
    acceleration: np.ndarray | None = None
    overload_torque: np.ndarray | None = None
    fatigue: np.ndarray | None = None
    overload_power: np.ndarray | None = None
    com_shift: float | None = None
    compression: np.ndarray | None = None

    def available(self) -> dict[str, bool]:
        return {name: getattr(self, name) is not None for name in INDEX_NAMES}

    def values(self) -> dict[str, np.ndarray | float | None]:
        return {name: getattr(self, name) for name in INDEX_NAMES}


# ---------------------------------------------------------------------------
# Risk categorization
# ---------------------------------------------------------------------------

class Category(IntEnum):
    GREEN = 0
    YELLOW = 1
    RED = 2


@dataclass(frozen=True)
class RiskThresholds:
    """Two cut points of the three-color scheme, on the normalized scale."""

    yellow: float = 1.0 / 3.0
    red: float = 2.0 / 3.0

    def __post_init__(self):
        if not (0.0 < self.yellow < self.red < 1.0):
            raise IndexError_(
                f"thresholds must satisfy 0 < yellow < red < 1, got "
                f"({self.yellow}, {self.red})"
            )


def _categorize_value(v: float, th: RiskThresholds) -> Category:
    if v < th.yellow:
        return Category.GREEN
    if v < th.red:
        return Category.YELLOW
    return Category.RED


def categorize(vector: IndexVector, thresholds: RiskThresholds | None = None
               ) -> dict[str, object]:
    """Map every available index entry to green/yellow/red.

    Returns per index either a tuple of per-joint categories, a single
    category for the whole-body index, or ``None`` when unavailable.
    """
    th = thresholds if thresholds is not None else RiskThresholds()
    out: dict[str, object] = {}
    for name in INDEX_NAMES:
        val = getattr(vector, name)
        if val is None:
            out[name] = None
        elif name == "com_shift":
            out[name] = _categorize_value(float(val), th)
        else:
            out[name] = tuple(_categorize_value(float(v), th) for v in val)
    return out


# ---------------------------------------------------------------------------
# Per-action aggregation
# ---------------------------------------------------------------------------

@dataclass
class ActionAggregate:
    """Max and RMS of every index over one action window.

    ``stats[index]['max']``/``['rms']`` are 7-vectors (scalars for the
    whole-body index); ``['t_max']`` is the instant at which the maximum
    was reached, used to sample the muscle-activity benchmark.
    """

    label: str
    t_start: float
    t_end: float
    n_samples: int
    stats: dict[str, dict[str, np.ndarray | float]]


class WindowAccumulator:
    """Streaming max/RMS accumulator for one action window."""

    def __init__(self, label: str, t_start: float, t_end: float):
        self.label = label
        self.t_start = float(t_start)
        self.t_end = float(t_end)
        self.n = 0
        self._max: dict[str, object] = {}
        self._sumsq: dict[str, object] = {}
        self._tmax: dict[str, object] = {}

    def covers(self, t: float) -> bool:
        return self.t_start <= t <= self.t_end

    def add(self, vector: IndexVector) -> None:
        self.n += 1
        t = vector.timestamp
        for name in INDEX_NAMES:
            val = getattr(vector, name)
            if val is None:
                continue
            if name == "com_shift":
                v = float(val)
                if name not in self._max or v > self._max[name]:
                    self._max[name] = v
                    self._tmax[name] = t
                self._sumsq[name] = self._sumsq.get(name, 0.0) + v * v
            elif name not in self._max:
                self._max[name] = [float(v) for v in val]
                self._tmax[name] = [t] * len(self._max[name])
                self._sumsq[name] = [float(v) * float(v) for v in val]
            else:
                mx = self._max[name]
                tm = self._tmax[name]
                sq = self._sumsq[name]
                for j, v in enumerate(val):
                    v = float(v)
                    if v > mx[j]:
                        mx[j] = v
                        tm[j] = t
                    sq[j] += v * v

    def result(self) -> ActionAggregate:
        if self.n == 0:
            raise IndexError_(f"window {self.label!r} contains no samples")
        stats = {}
        for name in self._max:
            sumsq = self._sumsq[name]
            if isinstance(sumsq, list):
                stats[name] = {
                    "max": np.array(self._max[name]),
                    "rms": np.sqrt(np.array(sumsq) / self.n),
                    "t_max": np.array(self._tmax[name]),
                }
            else:
                stats[name] = {
                    "max": self._max[name],
                    "rms": math.sqrt(sumsq / self.n),
                    "t_max": self._tmax[name],
                }
        return ActionAggregate(self.label, self.t_start, self.t_end, self.n, stats)


def aggregate(vectors: Iterable[IndexVector],
              windows: Sequence[tuple[str, float, float]]) -> list[ActionAggregate]:
    """Max and RMS per index per joint over each action window.

    Windows are (label, t_start, t_end), non-overlapping and inside the
    stream bounds; a window that catches no samples is an error.
    """
    wins = sorted(windows, key=lambda w: w[1])
    for (la, a0, a1), (lb, b0, b1) in zip(wins, wins[1:]):
        if b0 < a1:
            raise IndexError_(f"windows {la!r} and {lb!r} overlap")
    accs = [WindowAccumulator(*w) for w in wins]
    for vec in vectors:
        for acc in accs:
            if acc.covers(vec.timestamp):
                acc.add(vec)
                break
    return [acc.result() for acc in accs]
