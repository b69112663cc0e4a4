"""Synthetic recordings for demos, benchmarks and trend studies.

Generates physically consistent columnar sessions: smooth joint
trajectories between posture keyframes, with force-plate and hand-wrench
channels derived from the same chain model that analysis uses (total
force balance and the zero-moment point of the ground wrench), so the
pipeline's estimates can be checked against known injected loads.

Three task families mirror common manual activities: lifting boxes of
several weights to several shelf heights, tool-feed work at three panel
positions, and sustained light-tool work in two phases.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from .calibration import EMG_CHANNELS, SubjectProfile, embed_model
from .model import (
    GRAVITY,
    HumanModel,
    JOINT_NAMES,
    JointConfiguration,
    N_JOINTS,
    chain_kinematics,
    default_model,
    load_joint_defaults,
    sesc_com,
    sesc_from_model,
    whole_body_com,
)

# posture keyframes, degrees, chain-relative joint angles
# (ankle, knee, hip, back, shoulder, elbow, wrist)
POSTURES = {
    "stand":    (0.0, 0.0, 0.0, 0.0, 150.0, -60.0, 0.0),
    "reach_v1": (22.0, -110.0, 108.0, 60.0, 75.0, -45.0, 0.0),
    "reach_v2": (5.0, -15.0, 15.0, 10.0, 115.0, -45.0, 0.0),
    "reach_v3": (5.0, -10.0, 10.0, 10.0, 55.0, -20.0, 0.0),
    "carry":    (3.0, -10.0, 10.0, 5.0, 125.0, -85.0, 0.0),
    "drill_d1": (6.0, -15.0, 15.0, 12.0, 158.0, -10.0, 5.0),
    "drill_d2": (4.0, -10.0, 10.0, 10.0, 115.0, -5.0, 0.0),
    "drill_d3": (2.0, -5.0, 5.0, 5.0, 97.0, -10.0, 2.0),
    "paint_hi": (3.0, -8.0, 8.0, 8.0, 60.0, -30.0, 0.0),
    "paint_lo": (3.0, -10.0, 10.0, 10.0, 162.0, -10.0, 0.0),
}


def posture(name: str) -> tuple:
    return tuple(math.radians(v) for v in POSTURES[name])


# ---------------------------------------------------------------------------
# Smooth keyframe trajectories with analytic derivatives
# ---------------------------------------------------------------------------

class KeyframeTrajectory:
    """Quintic-ramp interpolation through (time, pose) keyframes.

    The minimum-jerk-style ramp has zero velocity and acceleration at
    both ends of every segment, so the concatenated trajectory is C2
    everywhere (no acceleration jumps at keyframes).
    """

    def __init__(self, keyframes):
        self.times = [float(t) for t, _ in keyframes]
        self.poses = [tuple(map(float, p)) for _, p in keyframes]
        if sorted(self.times) != self.times:
            raise ValueError("keyframes must be time-ordered")

    @property
    def duration(self) -> float:
        return self.times[-1]

    def __call__(self, t: float):
        """Pose values and their first/second time derivatives at t."""
        times = self.times
        width = len(self.poses[0])
        if t <= times[0]:
            return self.poses[0], (0.0,) * width, (0.0,) * width
        if t >= times[-1]:
            return self.poses[-1], (0.0,) * width, (0.0,) * width
        i = bisect_right(times, t) - 1
        ta, tb = times[i], times[i + 1]
        pa, pb = self.poses[i], self.poses[i + 1]
        T = tb - ta
        s = (t - ta) / T
        h = s * s * s * (10.0 + s * (-15.0 + 6.0 * s))
        hd = 30.0 * s * s * (1.0 + s * (-2.0 + s)) / T
        hdd = 60.0 * s * (1.0 + s * (-3.0 + 2.0 * s)) / (T * T)
        q = tuple(a + (b - a) * h for a, b in zip(pa, pb))
        qd = tuple((b - a) * hd for a, b in zip(pa, pb))
        qdd = tuple((b - a) * hdd for a, b in zip(pa, pb))
        return q, qd, qdd


class LoadProfile:
    """Smoothly ramped scalar schedule, e.g. carried mass over time."""

    def __init__(self, intervals, ramp: float = 0.2):
        # intervals: [(t_on, t_off, value)]
        self.intervals = [(float(a), float(b), float(v)) for a, b, v in intervals]
        self.ramp = float(ramp)

    def __call__(self, t: float) -> float:
        total = 0.0
        r = self.ramp
        for a, b, v in self.intervals:
            if t <= a or t >= b + r:
                continue
            if t < a + r:
                s = (t - a) / r
                total += v * 0.5 * (1.0 - math.cos(math.pi * s))
            elif t <= b:
                total += v
            else:
                s = (t - b) / r
                total += v * 0.5 * (1.0 + math.cos(math.pi * s))
        return total


# ---------------------------------------------------------------------------
# Measured-channel synthesis from total balance
# ---------------------------------------------------------------------------

def ground_reaction(model: HumanModel, cfg: JointConfiguration,
                    point_mass: float = 0.0,
                    hand_wrench: tuple | None = None,
                    gravity: float = GRAVITY):
    """Plate reading (grf vector, cop_x) for a configuration.

    ``point_mass`` rides at the grip center (a carried object);
    ``hand_wrench`` is an (fx, fz) force applied to the hand by the
    environment at the same point.  Forces follow from the total balance
    of the human+object system, the CoP from the zero-moment point of the
    resulting ground wrench.
    """
    st = chain_kinematics(model, cfg)
    # grip-center kinematics, mid-way along the hand segment
    seg = model.segments[-1]
    ang = st.angle[-1]
    s, c = math.sin(ang), math.cos(ang)
    lx, lz = 0.5 * seg.length * s, 0.5 * seg.length * c
    ox, oz = st.origin[-1]
    tip = (ox + lx, oz + lz)
    wv = st.ang_vel[-1]
    dwv = st.ang_acc[-1]
    vx, vz = st.origin_vel[-1]
    ax, az = st.origin_acc[-1]
    tip_acc = (ax + dwv * lz - wv * wv * lx, az - dwv * lx - wv * wv * lz)

    fx = fz = mu = 0.0
    for sg, (cx, cz), (acx, acz), dw in zip(model.segments, st.com, st.com_acc, st.ang_acc):
        m = sg.mass
        fx += m * acx
        fz += m * (acz + gravity)
        mu += sg.inertia * dw + m * (cz * acx - cx * acz) - m * cx * gravity
    if point_mass:
        fx += point_mass * tip_acc[0]
        fz += point_mass * (tip_acc[1] + gravity)
        mu += point_mass * (tip[1] * tip_acc[0] - tip[0] * tip_acc[1])
        mu -= point_mass * tip[0] * gravity
    if hand_wrench is not None:
        fx -= hand_wrench[0]
        fz -= hand_wrench[1]
        mu -= tip[1] * hand_wrench[0] - tip[0] * hand_wrench[1]
    cop_x = -mu / fz if abs(fz) > 1e-9 else 0.0
    return (fx, fz), cop_x, tip, tip_acc


# ---------------------------------------------------------------------------
# Subject profiles
# ---------------------------------------------------------------------------

# per-joint compressive-force capacity as a fraction of body weight,
# stand-ins for a maximum-exertion calibration
_FC_MAX_BW = (1.3, 1.3, 1.3, 1.1, 0.35, 0.35, 0.30)
_FATIGUE_RATE = 0.05  # 1/s
_QDD_MAX_FACTOR = 2.5  # peak acceleration per unit peak speed, ~0.4 Hz motion


def synthetic_profile(subject_id: str, mass: float, height: float,
                      gender: str = "unspecified") -> SubjectProfile:
    """Fully calibrated profile derived analytically from the scaled model."""
    defaults = load_joint_defaults()
    model = default_model(mass, height)
    prof = SubjectProfile(subject_id=subject_id, mass=mass, height=height, gender=gender)
    prof.q_min = tuple(defaults[j]["q_min"] for j in JOINT_NAMES)
    prof.q_max = tuple(defaults[j]["q_max"] for j in JOINT_NAMES)
    prof.qd_max = tuple(defaults[j]["qd_max"] for j in JOINT_NAMES)
    prof.qdd_max = tuple(_QDD_MAX_FACTOR * defaults[j]["qd_max"] for j in JOINT_NAMES)
    prof.delta_tau_max = tuple(defaults[j]["tau_max"] for j in JOINT_NAMES)
    prof.lambda_f = (_FATIGUE_RATE,) * N_JOINTS
    prof.lambda_r = (0.4 * _FATIGUE_RATE,) * N_JOINTS
    prof.theta_f = tuple(0.1 * v for v in prof.delta_tau_max)
    prof.tau_fatigue_max = tuple(0.8 * v for v in prof.delta_tau_max)
    prof.com_shift_max = 0.30 * height
    prof.f_c_max = tuple(f * mass * GRAVITY for f in _FC_MAX_BW)
    prof.mvc = (1.0,) * len(EMG_CHANNELS)
    sesc = sesc_from_model(model)
    prof.sesc_coeffs = sesc.coeffs
    neutral = JointConfiguration(q=posture("stand"))
    prof.neutral_q = neutral.q
    prof.neutral_com_height = float(sesc_com(sesc, neutral)[1])
    embed_model(prof, model)
    return prof


def subject_cohort(n: int = 12, seed: int = 7):
    """(id, mass, height, gender) tuples with seeded anthropometric spread."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        mass = float(np.clip(rng.normal(69.3, 10.0), 50.0, 100.0))
        height = float(np.clip(rng.normal(1.74, 0.06), 1.55, 1.95))
        gender = "male" if rng.random() < 0.67 else "female"
        out.append((f"S{i + 1:02d}", round(mass, 1), round(height, 3), gender))
    return out


# ---------------------------------------------------------------------------
# Task generators
# ---------------------------------------------------------------------------

_CSV_BASE_HEADER = "time," + ",".join(f"q_{j}" for j in JOINT_NAMES)


def _fmt(values) -> str:
    return ",".join(repr(float(v)) for v in values)


@dataclass
class SyntheticSession:
    """One generated recording plus the windows that describe it."""

    csv_text: str
    windows: list  # [label, t_start, t_end]
    rate: float
    mode: str
    meta: dict


def static_calibration_recording(model: HumanModel, n_poses: int = 24,
                                 hold_s: float = 1.4, move_s: float = 1.2,
                                 rate: float = 60.0, seed: int = 3,
                                 cop_noise: float = 0.0) -> str:
    """Held random poses with plate channels, for the CoM-coefficient fit.

    Poses include heel-raise pitch so the ground-contact segment is
    excited too (flat stance alone cannot identify it).  The first pose is
    the neutral stance, so the fitted profile registers it as the
    reference posture.
    """
    rng = np.random.default_rng(seed)
    # pose = (base_pitch, 7 joint angles)
    poses = [(0.0,) + posture("stand")]
    for _ in range(n_poses - 1):
        poses.append((float(rng.uniform(-0.3, 0.3)),)
                     + tuple(rng.uniform(-1.2, 1.2, N_JOINTS)))
    keyframes = [(0.0, poses[0])]
    t = hold_s
    for pose in poses[1:]:
        keyframes.append((t, keyframes[-1][1]))  # hold the previous pose
        keyframes.append((t + move_s, pose))
        t += move_s + hold_s
    keyframes.append((t, poses[-1]))
    traj = KeyframeTrajectory(keyframes)
    header = ("time,base_x,base_z,base_pitch,"
              + ",".join(f"q_{j}" for j in JOINT_NAMES)
              + ",cop_x,grf_x,grf_y,grf_z")
    lines = [header]
    n = int(round(traj.duration * rate)) + 1
    for k in range(n):
        tk = k / rate
        pose, posed, posedd = traj(tk)
        cfg = JointConfiguration(
            q=pose[1:], qd=posed[1:], qdd=posedd[1:],
            base_angle=pose[0], base_angle_vel=posed[0], base_angle_acc=posedd[0],
        )
        (fx, fz), cop_x, _, _ = ground_reaction(model, cfg)
        if cop_noise:
            cop_x += rng.normal(0.0, cop_noise)
        lines.append(_fmt((tk, 0.0, 0.0, pose[0]) + cfg.q + (cop_x, fx, 0.0, fz)))
    return "\n".join(lines) + "\n"


def excursion_recording(rate: float = 60.0, duration: float = 12.0) -> str:
    """Fast full-range sweeps of every joint, for the kinematic maxima."""
    header = _CSV_BASE_HEADER
    lines = [header]
    n = int(round(duration * rate)) + 1
    freqs = [0.5 + 0.08 * j for j in range(N_JOINTS)]
    amps = [0.6, 1.0, 1.0, 0.5, 1.2, 1.0, 0.8]
    ramp_s = 1.0
    for k in range(n):
        tk = k / rate
        env = min(1.0, tk / ramp_s, (duration - tk) / ramp_s)
        env = max(env, 0.0)
        q = tuple(env * a * math.sin(2 * math.pi * f * tk)
                  for a, f in zip(amps, freqs))
        lines.append(_fmt((tk,) + q))
    return "\n".join(lines) + "\n"


def exertion_recording(model: HumanModel, push_force: float = 160.0,
                       rate: float = 60.0, hold_s: float = 3.0) -> str:
    """Maximum horizontal push against a rigid stop, with wrench channels."""
    pose = (0.0, 0.0, 0.0, 0.0, math.radians(92.0), 0.0, 0.0)
    keyframes = [(0.0, posture("stand")), (1.2, pose), (1.2 + hold_s, pose)]
    traj = KeyframeTrajectory(keyframes)
    push = LoadProfile([(1.4, 1.0 + hold_s, 1.0)], ramp=0.3)
    header = _CSV_BASE_HEADER + ",cop_x,grf_x,grf_y,grf_z,ft_fx,ft_fy,ft_fz,ft_tx,ft_ty,ft_tz"
    lines = [header]
    n = int(round(traj.duration * rate)) + 1
    for k in range(n):
        tk = k / rate
        q, qd, qdd = traj(tk)
        cfg = JointConfiguration(q=q, qd=qd, qdd=qdd)
        w = (-push_force * push(tk), 0.0)
        (fx, fz), cop_x, _, _ = ground_reaction(model, cfg, hand_wrench=w)
        lines.append(_fmt((tk,) + q + (cop_x, fx, 0.0, fz, w[0], 0.0, w[1], 0.0, 0.0, 0.0)))
    return "\n".join(lines) + "\n"


def met_observations_csv(lambda_f: float = _FATIGUE_RATE,
                         capacity_fraction: float = 0.8,
                         delta_tau_max=None) -> str:
    """Endurance observations consistent with the fatigue model."""
    from .calibration import endurance_time
    defaults = load_joint_defaults()
    lines = ["joint,load,endurance_time"]
    for j in JOINT_NAMES:
        dmax = (defaults[j]["tau_max"] if delta_tau_max is None
                else delta_tau_max[JOINT_NAMES.index(j)])
        cap = capacity_fraction * dmax
        # observation loads must exceed the capacity, else endurance is
        # unbounded under the first-order model
        for frac in (0.85, 0.92, 1.0):
            load = frac * dmax
            t = endurance_time(load, lambda_f, cap)
            lines.append(f"{j},{load!r},{t!r}")
    return "\n".join(lines) + "\n"


def lifting_session(profile: SubjectProfile,
                    weights=(2.5, 5.0, 10.0),
                    heights=("v1", "v2", "v3"),
                    rate: float = 60.0,
                    posture_scale: float = 1.0,
                    noise: float = 0.0,
                    seed: int = 0) -> SyntheticSession:
    """Box transfers: every weight x shelf-height combination once.

    Each action reaches the shelf, picks the box up, carries it to chest
    height, holds, puts it back and returns to stand; the window covers
    the loaded interval.  Trajectories are identical across weights, so
    load effects are cleanly attributable.
    """
    model = profile.model()
    stand = posture("stand")
    carry = _scale_pose(posture("carry"), stand, posture_scale)
    rng = np.random.default_rng(seed)

    keyframes = [(0.0, stand)]
    load_intervals = []
    windows = []
    t = 1.0
    for w_kg in weights:
        for h in heights:
            reach = _scale_pose(posture(f"reach_{h}"), stand, posture_scale)
            t0 = t
            keyframes += [(t0, stand), (t0 + 1.2, reach), (t0 + 1.45, reach)]
            grasp = t0 + 1.45
            keyframes += [(grasp + 1.6, carry), (grasp + 2.4, carry),
                          (grasp + 4.0, reach), (grasp + 4.25, reach)]
            release = grasp + 4.25
            keyframes += [(release + 1.2, stand), (release + 1.5, stand)]
            load_intervals.append((grasp, release, w_kg))
            windows.append([f"{w_kg}kg-{h.upper()}", grasp - 0.1, release + 0.35])
            t = release + 1.5
    traj = KeyframeTrajectory(keyframes)
    load = LoadProfile(load_intervals, ramp=0.2)

    header = _CSV_BASE_HEADER + ",cop_x,grf_x,grf_y,grf_z"
    lines = [header]
    n = int(round(traj.duration * rate)) + 1
    for k in range(n):
        tk = k / rate
        q, qd, qdd = traj(tk)
        cfg = JointConfiguration(q=q, qd=qd, qdd=qdd)
        m_box = load(tk)
        (fx, fz), cop_x, _, _ = ground_reaction(model, cfg, point_mass=m_box)
        if noise:
            cop_x += rng.normal(0.0, noise)
            fz += rng.normal(0.0, noise * 1000.0)
        lines.append(_fmt((tk,) + q + (cop_x, fx, 0.0, fz)))
    return SyntheticSession(
        "\n".join(lines) + "\n", windows, rate, "load-estimation",
        {"weights": list(weights), "heights": [h.upper() for h in heights]},
    )


def _scale_pose(pose, reference, scale):
    return tuple(r + (p - r) * scale for p, r in zip(pose, reference))


def drilling_session(profile: SubjectProfile,
                     feed_force: float = 130.0,
                     tool_mass: float = 2.5,
                     hold_s: float = 10.0,
                     rate: float = 60.0) -> SyntheticSession:
    """Tool-feed work at three panel positions with a measured hand wrench.

    The feed force acts along the (nearly straight) arm axis at each
    panel, so the wrench is dominantly axial: large transmitted
    compression with small induced torque.  The low panel is worked
    leaning on the tool, making the wrench there gravity-aligned.
    """
    model = profile.model()
    stand = posture("stand")
    panels = ["drill_d1", "drill_d2", "drill_d3"]
    labels = ["D1", "D2", "D3"]
    keyframes = [(0.0, stand)]
    windows = []
    wrench_spec = []  # (t_on, t_off, posture name)
    t = 1.0
    for name, label in zip(panels, labels):
        pose = posture(name)
        keyframes += [(t, stand), (t + 1.2, pose), (t + 1.2 + hold_s, pose),
                      (t + 2.4 + hold_s, stand)]
        wrench_spec.append((t + 1.3, t + 1.1 + hold_s, name))
        windows.append([label, t + 1.25, t + 1.15 + hold_s])
        t += 2.4 + hold_s + 1.0
    traj = KeyframeTrajectory(keyframes)
    ramp = LoadProfile([(a, b, 1.0) for a, b, _ in wrench_spec], ramp=0.2)

    # feed direction: along the hand axis at each held posture
    axis = {}
    for name in panels:
        st = chain_kinematics(model, JointConfiguration(q=posture(name)))
        a = st.angle[-1]
        axis[name] = (math.sin(a), math.cos(a))

    def wrench_at(tk):
        for a, b, name in wrench_spec:
            if a - 0.3 <= tk <= b + 0.3:
                scale = ramp(tk)
                ux, uz = axis[name]
                return (
                    -feed_force * scale * ux,
                    -feed_force * scale * uz - tool_mass * GRAVITY * scale,
                )
        return (0.0, 0.0)

    header = _CSV_BASE_HEADER + ",cop_x,grf_x,grf_y,grf_z,ft_fx,ft_fy,ft_fz,ft_tx,ft_ty,ft_tz"
    lines = [header]
    n = int(round(traj.duration * rate)) + 1
    for k in range(n):
        tk = k / rate
        q, qd, qdd = traj(tk)
        cfg = JointConfiguration(q=q, qd=qd, qdd=qdd)
        w = wrench_at(tk)
        (fx, fz), cop_x, _, _ = ground_reaction(model, cfg, hand_wrench=w)
        lines.append(_fmt((tk,) + q + (cop_x, fx, 0.0, fz, w[0], 0.0, w[1], 0.0, 0.0, 0.0)))
    return SyntheticSession(
        "\n".join(lines) + "\n", windows, rate, "measured-wrench",
        {"feed_force": feed_force, "tool_mass": tool_mass, "axes": axis},
    )


def painting_session(profile: SubjectProfile,
                     tool_mass: float = 2.2,
                     stroke_s: float = 10.0,
                     strokes: int = 3,
                     rate: float = 60.0) -> SyntheticSession:
    """Sustained light-tool work in two phases at different heights.

    Phase one works high (raised arm, load torque above the fatigue
    threshold at the shoulder); phase two works lower, where the induced
    torque drops below the threshold and the accumulated exposure
    recovers.
    """
    stand = posture("stand")
    hi, lo = posture("paint_hi"), posture("paint_lo")
    hi_b = tuple(v + math.radians(4.0 if i in (4, 5) else 0.0) for i, v in enumerate(hi))
    lo_b = tuple(v + math.radians(4.0 if i in (4, 5) else 0.0) for i, v in enumerate(lo))
    keyframes = [(0.0, stand), (1.0, stand)]
    t = 1.0 + 1.2
    keyframes.append((t, hi))
    p1_start = t - 0.1
    for s in range(strokes):
        keyframes.append((t + stroke_s, hi_b if s % 2 == 0 else hi))
        t += stroke_s
    p1_end = t + 0.1
    # move down during the break, then rest at the low posture long enough
    # for the transition's exposure to recover before phase two starts
    keyframes.append((t + 2.5, lo))
    keyframes.append((t + 8.0, lo))
    t += 8.0
    p2_start = t - 0.1
    for s in range(strokes):
        keyframes.append((t + stroke_s, lo_b if s % 2 == 0 else lo))
        t += stroke_s
    p2_end = t + 0.1
    keyframes.append((t + 1.2, stand))
    traj = KeyframeTrajectory(keyframes)
    model = profile.model()

    header = _CSV_BASE_HEADER + ",cop_x,grf_x,grf_y,grf_z"
    lines = [header]
    n = int(round(traj.duration * rate)) + 1
    hold = LoadProfile([(1.6, t - 0.6, tool_mass)], ramp=0.3)
    for k in range(n):
        tk = k / rate
        q, qd, qdd = traj(tk)
        cfg = JointConfiguration(q=q, qd=qd, qdd=qdd)
        (fx, fz), cop_x, _, _ = ground_reaction(model, cfg, point_mass=hold(tk))
        lines.append(_fmt((tk,) + q + (cop_x, fx, 0.0, fz)))
    windows = [["phase1", p1_start, p1_end], ["phase2", p2_start, p2_end]]
    return SyntheticSession(
        "\n".join(lines) + "\n", windows, rate, "light-tool",
        {"tool_mass": tool_mass},
    )
