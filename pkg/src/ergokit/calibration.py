"""Subject calibration: equivalent-chain fit, maxima, fatigue parameters.

Produces the per-subject profile that normalizes every index: joint
limits, peak speeds/accelerations, tolerated load torques, fatigue
dynamics fitted to endurance-time observations, the CoM-shift range, the
compressive-force maxima, muscle-contraction references and the
equivalent-chain CoM coefficients identified from static poses.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, asdict
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from . import signal as sig
from .dynamics import ExternalWrench, compressive_forces
from .model import (
    HumanModel,
    JOINT_NAMES,
    JointConfiguration,
    N_JOINTS,
    N_SEGMENTS,
    SescParameters,
    default_model,
    load_joint_defaults,
    sesc_com,
    sesc_regressor,
    whole_body_com,
)

EMG_CHANNELS = ("AD", "PD", "BC", "TC", "TR", "ES", "GM", "RF", "BF", "TA")

# defaults tied to the fatigue model: activation threshold as a fraction of
# the tolerated load torque, and recovery rate as a fraction of the fatigue
# rate when no recovery trials exist
FATIGUE_THRESHOLD_FRACTION = 0.1
RECOVERY_RATE_RATIO = 0.4

# static-pose detector defaults
STATIC_SPEED_LIMIT = 0.05  # rad/s, infinity norm
STATIC_MIN_DURATION = 0.5  # s

EXCITATION_SPEED_FLOOR = 0.2  # rad/s: below this a joint counts as unexcited


class CalibrationError(ValueError):
    """Raised when calibration inputs are insufficient or degenerate."""


# ---------------------------------------------------------------------------
# Subject profile
# ---------------------------------------------------------------------------

def _opt_tuple(v, n, what):
    if v is None:
        return None
    out = tuple(float(x) for x in v)
    if len(out) != n:
        raise CalibrationError(f"{what}: expected {n} values, got {len(out)}")
    return out


@dataclass
class SubjectProfile:
    """Everything subject-specific the session pipeline needs.

    Maxima fields are per-joint 7-tuples in chain order; any of them may
    be ``None`` until the corresponding calibration ran, and session
    preflight enumerates what a task mode is missing.
    """

    subject_id: str
    mass: float
    height: float
    gender: str = "unspecified"
    q_min: tuple | None = None
    q_max: tuple | None = None
    qd_max: tuple | None = None
    qdd_max: tuple | None = None
    delta_tau_max: tuple | None = None
    lambda_f: tuple | None = None
    lambda_r: tuple | None = None
    theta_f: tuple | None = None
    tau_fatigue_max: tuple | None = None
    com_shift_max: float | None = None
    f_c_max: tuple | None = None
    mvc: tuple | None = None
    sesc_coeffs: tuple | None = None
    neutral_q: tuple | None = None
    neutral_com_height: float | None = None
    model_segments: list | None = None  # rows: [name, length, mass, com_fwd, com_along, inertia]

    def __post_init__(self):
        if not (self.mass > 0 and self.height > 0):
            raise CalibrationError("mass and height must be positive")
        for name in ("q_min", "q_max", "qd_max", "qdd_max", "delta_tau_max",
                     "lambda_f", "lambda_r", "theta_f", "tau_fatigue_max", "f_c_max",
                     "neutral_q"):
            setattr(self, name, _opt_tuple(getattr(self, name), N_JOINTS, name))
        self.mvc = _opt_tuple(self.mvc, len(EMG_CHANNELS), "mvc")
        if self.sesc_coeffs is not None:
            self.sesc_coeffs = tuple(float(v) for v in self.sesc_coeffs)
        if self.q_min is not None and self.q_max is not None:
            if any(hi <= lo for lo, hi in zip(self.q_min, self.q_max)):
                raise CalibrationError("q_max must exceed q_min at every joint")
        for name in ("qd_max", "qdd_max", "delta_tau_max", "lambda_f", "lambda_r",
                     "tau_fatigue_max", "f_c_max", "mvc"):
            v = getattr(self, name)
            if v is not None and any(x <= 0 for x in v):
                raise CalibrationError(f"{name} entries must be strictly positive")
        if self.com_shift_max is not None and not self.com_shift_max > 0:
            raise CalibrationError("com_shift_max must be positive")

    # -- derived objects ---------------------------------------------------

    def model(self) -> HumanModel:
        if self.model_segments is None:
            return default_model(self.mass, self.height)
        from .model import Segment, JointDef
        segs = tuple(
            Segment(r[0], float(r[1]), float(r[2]), (float(r[3]), float(r[4])), float(r[5]))
            for r in self.model_segments
        )
        return HumanModel(segs, tuple(JointDef(n) for n in JOINT_NAMES), total_mass=self.mass)

    def sesc(self) -> SescParameters | None:
        if self.sesc_coeffs is None:
            return None
        return SescParameters(self.sesc_coeffs)

    def missing_fields(self, mode: str) -> list[str]:
        """Profile fields a session in ``mode`` cannot run without."""
        needed = [
            "q_min", "q_max", "qd_max", "qdd_max", "delta_tau_max",
            "lambda_f", "lambda_r", "theta_f", "tau_fatigue_max",
            "com_shift_max", "sesc_coeffs", "neutral_com_height",
        ]
        if mode == "measured-wrench":
            needed.append("f_c_max")
        return [n for n in needed if getattr(self, n) is None]

    # -- serialization -----------------------------------------------------

    def to_json(self) -> str:
        payload = asdict(self)
        return json.dumps(payload, sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SubjectProfile":
        payload = json.loads(text)
        return cls(**payload)


def save_profile(profile: SubjectProfile, path) -> None:
    with open(path, "w") as fh:
        fh.write(profile.to_json() + "\n")


def load_profile(path) -> SubjectProfile:
    with open(path, "r") as fh:
        return SubjectProfile.from_json(fh.read())


def embed_model(profile: SubjectProfile, model: HumanModel) -> None:
    """Freeze the scaled segment table into the profile for reproducibility."""
    profile.model_segments = [
        [s.name, s.length, s.mass, s.com_offset[0], s.com_offset[1], s.inertia]
        for s in model.segments
    ]


def default_profile(subject_id: str, mass: float, height: float,
                    gender: str = "unspecified") -> SubjectProfile:
    """Profile pre-filled with the packaged literature defaults.

    Quantities with no literature fallback (peak accelerations, fatigue
    parameters, CoM-shift range, equivalent-chain coefficients, neutral
    posture) remain unset until calibrated.
    """
    defaults = load_joint_defaults()
    prof = SubjectProfile(subject_id=subject_id, mass=mass, height=height, gender=gender)
    prof.q_min = tuple(defaults[j]["q_min"] for j in JOINT_NAMES)
    prof.q_max = tuple(defaults[j]["q_max"] for j in JOINT_NAMES)
    prof.qd_max = tuple(defaults[j]["qd_max"] for j in JOINT_NAMES)
    prof.delta_tau_max = tuple(defaults[j]["tau_max"] for j in JOINT_NAMES)
    embed_model(prof, default_model(mass, height))
    return prof


# ---------------------------------------------------------------------------
# Equivalent-chain identification from static poses
# ---------------------------------------------------------------------------

class SescFit(NamedTuple):
    params: SescParameters
    residual_rms: float
    condition_number: float
    n_poses: int


def fit_sesc(poses: Sequence[tuple[JointConfiguration, float]],
             condition_limit: float = 1e8) -> SescFit:
    """Least-squares CoM coefficients from statically-held poses.

    Each pose contributes one equation: the measured CoP equals the
    horizontal CoM coordinate.  The constant vertical offset is not
    observable from ground measurements and is pinned to zero; it cancels
    in every quantity the pipeline consumes.

    Raises when the pose set is too small or leaves directions unexcited
    (rank-deficient/ill-conditioned regressor), naming the segments whose
    coefficients are not identifiable.
    """
    n_params = 2 * N_SEGMENTS + 2
    if len(poses) < n_params // 2:
        raise CalibrationError(
            f"need at least {n_params // 2} static poses, got {len(poses)}"
        )
    n_cols = 2 * N_SEGMENTS + 1  # per-segment pairs + horizontal offset
    rows = np.empty((len(poses), n_cols))
    target = np.empty(len(poses))
    for i, (cfg, cop_x) in enumerate(poses):
        phi = sesc_regressor(cfg, N_SEGMENTS)
        rows[i, : 2 * N_SEGMENTS] = phi[0, : 2 * N_SEGMENTS]
        rows[i, -1] = 1.0
        target[i] = float(cop_x) - cfg.base_pos[0]
    u, s, vt_full = np.linalg.svd(rows, full_matrices=True)
    s_full = np.zeros(n_cols)
    s_full[: len(s)] = s
    keep = s_full > s_full[0] / condition_limit
    if not np.all(keep):
        # name the directions the pose set does not excite
        weak = np.abs(vt_full[~keep]).sum(axis=0)
        names = []
        from .model import SEGMENT_NAMES
        for j, name in enumerate(SEGMENT_NAMES):
            if weak[2 * j] > 1e-3 or weak[2 * j + 1] > 1e-3:
                names.append(name)
        if weak[-1] > 1e-3:
            names.append("constant offset")
        raise CalibrationError(
            f"pose set leaves {int(np.sum(~keep))} direction(s) unexcited "
            f"(rank {int(np.sum(keep))} of {n_cols}); poorly identified: "
            f"{', '.join(names) or 'unknown'}"
        )
    cond = float(s[0] / s[-1])
    sol = vt_full.T[:, : len(s)] @ ((u.T[: len(s)] @ target) / s)
    residual = rows @ sol - target
    rms = float(np.sqrt(np.mean(residual ** 2)))
    coeffs = tuple(sol[: 2 * N_SEGMENTS]) + (float(sol[-1]), 0.0)
    return SescFit(SescParameters(coeffs), rms, cond, len(poses))


def find_static_poses(t, q, fs: float,
                      speed_limit: float = STATIC_SPEED_LIMIT,
                      min_duration: float = STATIC_MIN_DURATION,
                      window: int = sig.DEFAULT_WINDOW,
                      order: int = sig.DEFAULT_ORDER) -> list[int]:
    """Indices of held-pose midpoints in a calibration recording.

    A pose is static when every joint speed stays below ``speed_limit``
    for at least ``min_duration`` seconds.
    """
    q = np.asarray(q, dtype=float)
    if q.ndim != 2 or q.shape[1] != N_JOINTS:
        raise CalibrationError(f"q must be (N, {N_JOINTS}), got {q.shape}")
    speeds = np.empty_like(q)
    for j in range(N_JOINTS):
        _, qd, _ = sig.differentiate(q[:, j], fs, window, order)
        speeds[:, j] = qd
    ok = np.all(np.abs(speeds) < speed_limit, axis=1) & np.all(np.isfinite(speeds), axis=1)
    min_len = max(1, int(round(min_duration * fs)))
    mids = []
    i = 0
    n = len(ok)
    while i < n:
        if ok[i]:
            j = i
            while j < n and ok[j]:
                j += 1
            if j - i >= min_len:
                mids.append((i + j - 1) // 2)
            i = j
        else:
            i += 1
    return mids


# ---------------------------------------------------------------------------
# Kinematic maxima
# ---------------------------------------------------------------------------

class KinematicMaxima(NamedTuple):
    qd_max: np.ndarray
    qdd_max: np.ndarray
    com_shift_max: float
    unexcited: tuple[str, ...]


def extract_kinematic_maxima(q, fs: float, com_estimator,
                             neutral_com_height: float,
                             window: int = sig.DEFAULT_WINDOW,
                             order: int = sig.DEFAULT_ORDER) -> KinematicMaxima:
    """Peak |speed|, |acceleration| and CoM-height excursion of a trial.

    ``com_estimator`` maps a JointConfiguration to a CoM position (a
    model or coefficient closure).  Joints that never move fast enough to
    count as excited are reported and warned about.
    """
    q = np.asarray(q, dtype=float)
    if q.ndim != 2 or q.shape[1] != N_JOINTS:
        raise CalibrationError(f"q must be (N, {N_JOINTS}), got {q.shape}")
    qd_max = np.zeros(N_JOINTS)
    qdd_max = np.zeros(N_JOINTS)
    smoothed = np.empty_like(q)
    valid = None
    for j in range(N_JOINTS):
        q_s, qd, qdd = sig.differentiate(q[:, j], fs, window, order)
        smoothed[:, j] = q_s
        mask = np.isfinite(qd)
        valid = mask if valid is None else (valid & mask)
        qd_max[j] = np.max(np.abs(qd[mask]))
        qdd_max[j] = np.max(np.abs(qdd[np.isfinite(qdd)]))
    shift = 0.0
    for i in np.flatnonzero(valid):
        cfg = JointConfiguration(q=tuple(smoothed[i]))
        com = com_estimator(cfg)
        shift = max(shift, abs(float(com[1]) - neutral_com_height))
    unexcited = tuple(
        JOINT_NAMES[j] for j in range(N_JOINTS) if qd_max[j] < EXCITATION_SPEED_FLOOR
    )
    if unexcited:
        warnings.warn(
            f"calibration trial leaves joints unexcited: {', '.join(unexcited)}",
            stacklevel=2,
        )
    return KinematicMaxima(qd_max, qdd_max, shift, unexcited)


# ---------------------------------------------------------------------------
# Torque maxima
# ---------------------------------------------------------------------------

def resolve_torque_maxima(experimental, literature, band: float = 0.2) -> np.ndarray:
    """Combine experimental and literature torque maxima, safest-first.

    Within the comparability band the experimental value wins; outside it
    the smaller of the two is taken.
    """
    exp = np.asarray(experimental, dtype=float)
    lit = np.asarray(literature, dtype=float)
    if exp.shape != lit.shape:
        raise CalibrationError(f"shape mismatch: {exp.shape} vs {lit.shape}")
    if np.any(exp <= 0) or np.any(lit <= 0):
        raise CalibrationError("torque maxima must be strictly positive")
    comparable = np.abs(exp - lit) <= band * lit
    return np.where(comparable, exp, np.minimum(exp, lit))


# ---------------------------------------------------------------------------
# Fatigue parameters from endurance-time observations
# ---------------------------------------------------------------------------

class FatigueFit(NamedTuple):
    lambda_f: float
    lambda_r: float
    capacity: float
    residual_rms: float


def endurance_time(load: float, lambda_f: float, capacity: float) -> float:
    """Time for the first-order exposure state to reach capacity.

    Under a sustained |load torque| L the state follows
    L*(1 - exp(-lambda_f*t)); it reaches the capacity C < L at
    t = -ln(1 - C/L)/lambda_f and never reaches it for L <= C.
    """
    if load <= capacity:
        return math.inf
    return -math.log1p(-capacity / load) / lambda_f


def fit_fatigue_joint(observations: Sequence[tuple[float, float]],
                      delta_tau_max: float | None = None) -> FatigueFit:
    """Fit (rate, capacity) to (sustained load, endurance time) points.

    The rate is profiled out in closed form for a trial capacity and the
    capacity is found by a bounded 1-D minimization; with observations
    generated by the model itself the fit is exact.  The recovery rate
    defaults to RECOVERY_RATE_RATIO times the fitted rate.
    """
    obs = [(float(l), float(t)) for l, t in observations]
    if len(obs) < 2:
        raise CalibrationError("need at least two endurance observations per joint")
    if any(l <= 0 or t <= 0 for l, t in obs):
        raise CalibrationError("loads and endurance times must be positive")
    loads = np.array([l for l, _ in obs])
    times = np.array([t for _, t in obs])
    lo = 1e-9
    hi = float(loads.min()) * (1.0 - 1e-9)

    def profile(capacity: float):
        u = -np.log1p(-capacity / loads)
        denom = float(np.dot(u, u))
        inv_rate = float(np.dot(u, times)) / denom
        resid = times - inv_rate * u
        return float(np.dot(resid, resid)), inv_rate

    def objective(capacity: float) -> float:
        return profile(capacity)[0]

    res = minimize_scalar(objective, bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    capacity = float(res.x)
    sse, inv_rate = profile(capacity)
    if inv_rate <= 0:
        raise CalibrationError("endurance observations are inconsistent with the model")
    lam = 1.0 / inv_rate
    return FatigueFit(lam, RECOVERY_RATE_RATIO * lam, capacity,
                      math.sqrt(sse / len(obs)))


def fit_fatigue_params(per_joint_observations: dict[str, Sequence[tuple[float, float]]],
                       delta_tau_max) -> dict[str, np.ndarray]:
    """Per-joint fatigue parameters from endurance observations.

    Returns arrays keyed by 'lambda_f', 'lambda_r', 'theta_f' and
    'tau_fatigue_max' in chain joint order.  The activation threshold is
    FATIGUE_THRESHOLD_FRACTION of the tolerated load torque.
    """
    dmax = np.asarray(delta_tau_max, dtype=float)
    if dmax.shape != (N_JOINTS,) or np.any(dmax <= 0):
        raise CalibrationError("delta_tau_max must be 7 positive values")
    lam_f = np.empty(N_JOINTS)
    lam_r = np.empty(N_JOINTS)
    cap = np.empty(N_JOINTS)
    for j, name in enumerate(JOINT_NAMES):
        if name not in per_joint_observations:
            raise CalibrationError(f"no endurance observations for joint {name!r}")
        fit = fit_fatigue_joint(per_joint_observations[name])
        lam_f[j] = fit.lambda_f
        lam_r[j] = fit.lambda_r
        cap[j] = fit.capacity
    return {
        "lambda_f": lam_f,
        "lambda_r": lam_r,
        "theta_f": FATIGUE_THRESHOLD_FRACTION * dmax,
        "tau_fatigue_max": cap,
    }


# ---------------------------------------------------------------------------
# Compressive-force maxima from a maximum-exertion trial
# ---------------------------------------------------------------------------

def extract_force_maxima(model: HumanModel,
                         samples: Sequence[tuple[JointConfiguration, ExternalWrench]]
                         ) -> np.ndarray:
    """Per-joint peak compressive force over a maximum-exertion trial."""
    if not samples:
        raise CalibrationError("exertion trial is empty")
    peak = np.zeros(N_JOINTS)
    for cfg, wrench in samples:
        if wrench is None:
            raise CalibrationError("exertion trial sample lacks a wrench")
        fc = compressive_forces(model, cfg, wrench).as_array()
        peak = np.maximum(peak, fc)
    if np.all(peak == 0.0):
        raise CalibrationError(
            "exertion trial produced zero compressive force at every joint; "
            "check the wrench channels"
        )
    return peak
