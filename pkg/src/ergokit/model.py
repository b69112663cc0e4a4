"""Sagittal-plane rigid-body human model.

The body is a single serial chain of rigid segments in the x-z plane
(x forward, z up), rooted at the ground-contact segment (foot) and ending
at the hand.  Seven revolute joints connect the eight segments:

    foot -ankle- shank -knee- thigh -hip- pelvis -back- trunk
         -shoulder- upper_arm -elbow- forearm -wrist- hand

Zero configuration: all segments stacked vertically (pointing up), so the
hand sits at the summed link lengths above the root.  A positive joint
angle tilts the distal segment forward (+x).  The chain root carries a
floating base with the sagittal subset of the six virtual coordinates
active (x, z translation and pitch); the out-of-plane coordinates are
recorded as zero.

Orientation convention: a segment with absolute angle ``a`` points along
``u(a) = (sin a, cos a)``.  Moments and angular rates are scalars about
the out-of-plane axis chosen so that the moment of force ``f`` applied at
offset ``r`` is ``r_z*f_x - r_x*f_z``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from typing import NamedTuple, Sequence

import numpy as np

GRAVITY = 9.80665  # m/s^2

JOINT_NAMES = ("ankle", "knee", "hip", "back", "shoulder", "elbow", "wrist")
SEGMENT_NAMES = (
    "foot", "shank", "thigh", "pelvis", "trunk", "upper_arm", "forearm", "hand",
)
N_JOINTS = 7
N_SEGMENTS = 8


class ModelError(ValueError):
    """Raised when a model, configuration or parameter set is inconsistent."""


def _as_floats(values, n, what):
    out = tuple(float(v) for v in values)
    if len(out) != n:
        raise ModelError(f"{what}: expected {n} values, got {len(out)}")
    if not all(math.isfinite(v) for v in out):
        raise ModelError(f"{what}: non-finite entry in {out}")
    return out


@dataclass(frozen=True)
class Segment:
    """One rigid link of the sagittal chain.

    ``com_offset`` is the segment CoM in the local frame at the proximal
    joint: (forward, along-axis) coordinates in meters.  ``inertia`` is the
    scalar moment of inertia about the segment CoM (out-of-plane axis).
    """

    name: str
    length: float
    mass: float
    com_offset: tuple[float, float]
    inertia: float

    def __post_init__(self):
        object.__setattr__(self, "com_offset", _as_floats(self.com_offset, 2, f"segment {self.name} com_offset"))
        if not (self.length > 0.0 and math.isfinite(self.length)):
            raise ModelError(f"segment {self.name}: length must be > 0, got {self.length}")
        if not (self.mass >= 0.0 and math.isfinite(self.mass)):
            raise ModelError(f"segment {self.name}: mass must be >= 0, got {self.mass}")
        if not (self.inertia >= 0.0 and math.isfinite(self.inertia)):
            raise ModelError(f"segment {self.name}: inertia must be >= 0, got {self.inertia}")
        if math.hypot(*self.com_offset) > self.length + 1e-12:
            raise ModelError(f"segment {self.name}: |com_offset| exceeds length")


@dataclass(frozen=True)
class JointDef:
    """A revolute joint between two consecutive segments."""

    name: str


@dataclass(frozen=True)
class BasePose:
    """Floating-base pose of the chain root in the world frame.

    Only the sagittal coordinates (x, z, pitch) are active; the remaining
    virtual coordinates are kept for completeness and are always zero.
    """

    x: float = 0.0
    z: float = 0.0
    pitch: float = 0.0
    y: float = 0.0
    roll: float = 0.0
    yaw: float = 0.0


@dataclass(frozen=True)
class HumanModel:
    """Subject-scaled sagittal chain: segments, joints and total mass."""

    segments: tuple[Segment, ...]
    joints: tuple[JointDef, ...]
    total_mass: float
    base_frame: BasePose = field(default_factory=BasePose)

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(self, "joints", tuple(self.joints))
        if len(self.joints) != N_JOINTS:
            raise ModelError(f"expected {N_JOINTS} joints, got {len(self.joints)}")
        if len(self.segments) != len(self.joints) + 1:
            raise ModelError(
                f"serial chain needs {len(self.joints) + 1} segments for "
                f"{len(self.joints)} joints, got {len(self.segments)}"
            )
        seg_mass = math.fsum(s.mass for s in self.segments)
        if abs(seg_mass - self.total_mass) > 1e-9 * max(self.total_mass, 1.0):
            raise ModelError(
                f"segment masses sum to {seg_mass!r}, expected total {self.total_mass!r}"
            )

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    @property
    def joint_names(self) -> tuple[str, ...]:
        return tuple(j.name for j in self.joints)

    def segment_masses(self) -> np.ndarray:
        return np.array([s.mass for s in self.segments])


_ZERO7 = (0.0,) * N_JOINTS


@dataclass(frozen=True)
class JointConfiguration:
    """Joint angles with derivatives plus the floating-base state.

    ``q``/``qd``/``qdd`` are the 7 joint coordinates in chain order
    (ankle..wrist).  The base entries describe the chain-root frame; they
    default to a fixed root at the world origin.
    """

    q: tuple[float, ...]
    qd: tuple[float, ...] = _ZERO7
    qdd: tuple[float, ...] = _ZERO7
    base_pos: tuple[float, float] = (0.0, 0.0)
    base_angle: float = 0.0
    base_vel: tuple[float, float] = (0.0, 0.0)
    base_angle_vel: float = 0.0
    base_acc: tuple[float, float] = (0.0, 0.0)
    base_angle_acc: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "q", _as_floats(self.q, N_JOINTS, "q"))
        object.__setattr__(self, "qd", _as_floats(self.qd, N_JOINTS, "qd"))
        object.__setattr__(self, "qdd", _as_floats(self.qdd, N_JOINTS, "qdd"))
        object.__setattr__(self, "base_pos", _as_floats(self.base_pos, 2, "base_pos"))
        object.__setattr__(self, "base_vel", _as_floats(self.base_vel, 2, "base_vel"))
        object.__setattr__(self, "base_acc", _as_floats(self.base_acc, 2, "base_acc"))
        for name in ("base_angle", "base_angle_vel", "base_angle_acc"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ModelError(f"{name} must be finite")
            object.__setattr__(self, name, v)

    @classmethod
    def unchecked(cls, q, qd, qdd, base_pos, base_angle, base_vel,
                  base_angle_vel, base_acc, base_angle_acc) -> "JointConfiguration":
        """Frame-rate constructor for trusted callers: skips validation.

        Inputs must already be float tuples of the right arity (the
        streaming pipeline guarantees this after resampling).
        """
        obj = object.__new__(cls)
        sa = object.__setattr__
        sa(obj, "q", q)
        sa(obj, "qd", qd)
        sa(obj, "qdd", qdd)
        sa(obj, "base_pos", base_pos)
        sa(obj, "base_angle", base_angle)
        sa(obj, "base_vel", base_vel)
        sa(obj, "base_angle_vel", base_angle_vel)
        sa(obj, "base_acc", base_acc)
        sa(obj, "base_angle_acc", base_angle_acc)
        return obj


class SegmentFrame(NamedTuple):
    """World pose of one segment: proximal-joint position and absolute angle."""

    position: np.ndarray
    orientation: float


class ChainState:
    """Full world kinematics of every segment for one configuration.

    Per segment i (chain order): ``origin`` proximal joint position,
    ``angle`` absolute orientation, ``com`` CoM position, plus first and
    second time derivatives of all three.  ``distal[i]`` coincides with
    ``origin[i+1]``.  Plain tuples are used so a frame-rate consumer pays
    no array overhead.
    """

    __slots__ = (
        "origin", "angle", "com", "distal",
        "origin_vel", "ang_vel", "com_vel",
        "origin_acc", "ang_acc", "com_acc",
    )

    def __init__(self):
        self.origin = []
        self.angle = []
        self.com = []
        self.distal = []
        self.origin_vel = []
        self.ang_vel = []
        self.com_vel = []
        self.origin_acc = []
        self.ang_acc = []
        self.com_acc = []


def chain_kinematics(model: HumanModel, cfg: JointConfiguration) -> ChainState:
    """Propagate position, velocity and acceleration along the chain."""
    st = ChainState()
    px, pz = cfg.base_pos
    vx, vz = cfg.base_vel
    ax, az = cfg.base_acc
    ang = cfg.base_angle
    w = cfg.base_angle_vel
    dw = cfg.base_angle_acc
    q, qd, qdd = cfg.q, cfg.qd, cfg.qdd
    for i, seg in enumerate(model.segments):
        if i > 0:
            ang += q[i - 1]
            w += qd[i - 1]
            dw += qdd[i - 1]
        s, c = math.sin(ang), math.cos(ang)
        st.origin.append((px, pz))
        st.angle.append(ang)
        st.origin_vel.append((vx, vz))
        st.ang_vel.append(w)
        st.origin_acc.append((ax, az))
        st.ang_acc.append(dw)
        # segment CoM: local (forward, along) offset rotated to world
        oa, ob = seg.com_offset
        gx = oa * c + ob * s
        gz = -oa * s + ob * c
        st.com.append((px + gx, pz + gz))
        # rotation about y: v = w * (r_z, -r_x)
        st.com_vel.append((vx + w * gz, vz - w * gx))
        st.com_acc.append((ax + dw * gz - w * w * gx, az - dw * gx - w * w * gz))
        # distal end feeds the next origin
        lx = seg.length * s
        lz = seg.length * c
        dx, dz = px + lx, pz + lz
        st.distal.append((dx, dz))
        px, pz = dx, dz
        vx, vz = vx + w * lz, vz - w * lx
        ax, az = ax + dw * lz - w * w * lx, az - dw * lx - w * w * lz
    return st


def forward_kinematics(model: HumanModel, cfg: JointConfiguration) -> list[SegmentFrame]:
    """World frame (position, orientation) of every segment."""
    st = chain_kinematics(model, cfg)
    return [
        SegmentFrame(np.array(p), a) for p, a in zip(st.origin, st.angle)
    ]


def whole_body_com(model: HumanModel, cfg: JointConfiguration) -> np.ndarray:
    """Mass-weighted whole-body CoM position in the world frame."""
    if model.total_mass <= 0.0:
        raise ModelError("whole_body_com undefined for zero total mass")
    st = chain_kinematics(model, cfg)
    sx = sz = 0.0
    for seg, (cx, cz) in zip(model.segments, st.com):
        sx += seg.mass * cx
        sz += seg.mass * cz
    return np.array([sx / model.total_mass, sz / model.total_mass])


class ComKinematics(NamedTuple):
    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray
    momentum_rate: float  # angular-momentum rate about the CoM


def com_kinematics(model: HumanModel, cfg: JointConfiguration,
                   state: ChainState | None = None) -> ComKinematics:
    """CoM position/velocity/acceleration and angular-momentum rate.

    The momentum rate is taken about the instantaneous whole-body CoM and
    is what the dynamic CoP estimate consumes.
    """
    if model.total_mass <= 0.0:
        raise ModelError("com_kinematics undefined for zero total mass")
    st = state if state is not None else chain_kinematics(model, cfg)
    M = model.total_mass
    sx = sz = svx = svz = sax = saz = 0.0
    for seg, (cx, cz), (vx, vz), (ax, az) in zip(model.segments, st.com, st.com_vel, st.com_acc):
        m = seg.mass
        sx += m * cx
        sz += m * cz
        svx += m * vx
        svz += m * vz
        sax += m * ax
        saz += m * az
    cx, cz = sx / M, sz / M
    cax, caz = sax / M, saz / M
    hdot = 0.0
    for seg, (gx, gz), (agx, agz), dw in zip(model.segments, st.com, st.com_acc, st.ang_acc):
        rx, rz = gx - cx, gz - cz
        fx, fz = agx - cax, agz - caz
        hdot += seg.inertia * dw + seg.mass * (rz * fx - rx * fz)
    return ComKinematics(
        np.array([cx, cz]),
        np.array([svx / M, svz / M]),
        np.array([cax, caz]),
        hdot,
    )


# ---------------------------------------------------------------------------
# Equivalent-chain CoM parameterization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SescParameters:
    """Equivalent-chain CoM coefficients.

    ``coeffs`` holds one (forward, along) pair per segment followed by a
    constant 2D offset: length ``2*n_segments + 2``.  The whole-body CoM is
    linear in these coefficients given the segment orientations.
    """

    coeffs: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.coeffs)
        if len(vals) < 4 or len(vals) % 2 != 0:
            raise ModelError(f"coefficient vector length {len(vals)} is not 2*n+2")
        if not all(math.isfinite(v) for v in vals):
            raise ModelError("non-finite equivalent-chain coefficient")
        object.__setattr__(self, "coeffs", vals)

    @property
    def n_segments(self) -> int:
        return len(self.coeffs) // 2 - 1

    @property
    def offset(self) -> tuple[float, float]:
        return self.coeffs[-2:]


def segment_angles(cfg: JointConfiguration, n_segments: int = N_SEGMENTS) -> list[float]:
    """Absolute orientation of each segment (base angle plus joint sums)."""
    angles = [cfg.base_angle]
    a = cfg.base_angle
    for i in range(n_segments - 1):
        a += cfg.q[i]
        angles.append(a)
    return angles


def sesc_regressor(cfg: JointConfiguration, n_segments: int = N_SEGMENTS) -> np.ndarray:
    """Orientation regressor: CoM = base_pos + regressor @ coeffs."""
    phi = np.zeros((2, 2 * n_segments + 2))
    for j, a in enumerate(segment_angles(cfg, n_segments)):
        s, c = math.sin(a), math.cos(a)
        phi[0, 2 * j] = c
        phi[0, 2 * j + 1] = s
        phi[1, 2 * j] = -s
        phi[1, 2 * j + 1] = c
    phi[0, -2] = 1.0
    phi[1, -1] = 1.0
    return phi


def sesc_com(params: SescParameters, cfg: JointConfiguration) -> np.ndarray:
    """Whole-body CoM from equivalent-chain coefficients."""
    n = params.n_segments
    if n - 1 != N_JOINTS:
        raise ModelError(f"coefficients describe {n} segments, configuration has {N_JOINTS + 1}")
    co = params.coeffs
    x = cfg.base_pos[0] + co[-2]
    z = cfg.base_pos[1] + co[-1]
    for j, a in enumerate(segment_angles(cfg, n)):
        s, c = math.sin(a), math.cos(a)
        x += co[2 * j] * c + co[2 * j + 1] * s
        z += -co[2 * j] * s + co[2 * j + 1] * c
    return np.array([x, z])


def sesc_com_kinematics(params: SescParameters, cfg: JointConfiguration) -> ComKinematics:
    """CoM position/velocity/acceleration from equivalent-chain coefficients.

    The momentum-rate slot is not identifiable from CoM coefficients alone
    and is returned as 0.0.
    """
    n = params.n_segments
    co = params.coeffs
    x = cfg.base_pos[0] + co[-2]
    z = cfg.base_pos[1] + co[-1]
    vx, vz = cfg.base_vel
    ax, az = cfg.base_acc
    ang = cfg.base_angle
    w = cfg.base_angle_vel
    dw = cfg.base_angle_acc
    for j in range(n):
        if j > 0:
            ang += cfg.q[j - 1]
            w += cfg.qd[j - 1]
            dw += cfg.qdd[j - 1]
        s, c = math.sin(ang), math.cos(ang)
        wx = co[2 * j] * c + co[2 * j + 1] * s
        wz = -co[2 * j] * s + co[2 * j + 1] * c
        x += wx
        z += wz
        vx += w * wz
        vz -= w * wx
        ax += dw * wz - w * w * wx
        az += -dw * wx - w * w * wz
    return ComKinematics(np.array([x, z]), np.array([vx, vz]), np.array([ax, az]), 0.0)


def sesc_from_model(model: HumanModel) -> SescParameters:
    """Closed-form equivalent-chain coefficients from segment parameters."""
    if model.total_mass <= 0.0:
        raise ModelError("conversion undefined for zero total mass")
    M = model.total_mass
    coeffs = []
    masses = [s.mass for s in model.segments]
    for j, seg in enumerate(model.segments):
        carried = math.fsum(masses[j + 1:])
        oa, ob = seg.com_offset
        coeffs.append(seg.mass * oa / M)
        coeffs.append((carried * seg.length + seg.mass * ob) / M)
    coeffs.extend([0.0, 0.0])
    return SescParameters(tuple(coeffs))


# ---------------------------------------------------------------------------
# Center of pressure
# ---------------------------------------------------------------------------

class CopEstimate(NamedTuple):
    """Estimated CoP on the ground line: point (x, 0) plus a validity flag."""

    point: np.ndarray
    valid: bool

    @property
    def x(self) -> float:
        return float(self.point[0])


# below this net vertical support acceleration [m/s^2] the sample is treated
# as free fall and flagged invalid
FREE_FALL_EPS = 0.1


def estimate_cop_static(model_or_params, cfg: JointConfiguration) -> CopEstimate:
    """Quasi-static CoP: the ground projection of the whole-body CoM."""
    com = _com_of(model_or_params, cfg)
    return CopEstimate(np.array([float(com[0]), 0.0]), True)


def estimate_cop_dynamic(model: HumanModel, cfg: JointConfiguration,
                         gravity: float = GRAVITY,
                         state: ChainState | None = None) -> CopEstimate:
    """CoP under motion, from CoM acceleration and angular-momentum rate.

    x_cop = x_com - (hdot + M*z_com*xdd_com) / (M*(g + zdd_com)); the
    sample is flagged invalid near free fall, where the ground wrench no
    longer defines a pressure point.
    """
    ck = com_kinematics(model, cfg, state)
    denom_acc = gravity + float(ck.acceleration[1])
    if denom_acc <= FREE_FALL_EPS:
        return CopEstimate(np.array([math.nan, 0.0]), False)
    M = model.total_mass
    num = ck.momentum_rate + M * float(ck.position[1]) * float(ck.acceleration[0])
    x = float(ck.position[0]) - num / (M * denom_acc)
    return CopEstimate(np.array([x, 0.0]), True)


def _com_of(model_or_params, cfg: JointConfiguration) -> np.ndarray:
    if isinstance(model_or_params, HumanModel):
        return whole_body_com(model_or_params, cfg)
    if isinstance(model_or_params, SescParameters):
        return sesc_com(model_or_params, cfg)
    raise TypeError(f"expected HumanModel or SescParameters, got {type(model_or_params)!r}")


# ---------------------------------------------------------------------------
# Default anthropometric scaling and model files
# ---------------------------------------------------------------------------

def _read_table(text: str, what: str) -> list[list[str]]:
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        rows.append(line.split())
    if not rows:
        raise ModelError(f"{what}: no data rows")
    return rows


def _load_packaged(name: str) -> str:
    return resources.files("ergokit.data").joinpath(name).read_text()


def load_scaling_table(text: str | None = None) -> dict[str, dict[str, float]]:
    """Parse the per-segment anthropometric scaling table.

    Rows: ``segment mass_frac length_frac com_frac gyration_frac`` where
    fractions scale subject mass (kg) and height (m).
    """
    if text is None:
        text = _load_packaged("bsip_scaling.txt")
    table = {}
    for row in _read_table(text, "scaling table"):
        if len(row) != 5:
            raise ModelError(f"scaling table: expected 5 columns, got {row}")
        name = row[0]
        table[name] = {
            "mass_frac": float(row[1]),
            "length_frac": float(row[2]),
            "com_frac": float(row[3]),
            "gyration_frac": float(row[4]),
        }
    missing = [s for s in SEGMENT_NAMES if s not in table]
    if missing:
        raise ModelError(f"scaling table: missing segments {missing}")
    return table


def default_model(mass: float, height: float,
                  scaling: dict[str, dict[str, float]] | None = None) -> HumanModel:
    """Build a subject model from mass/height using the packaged scaling table."""
    if not (mass > 0 and height > 0):
        raise ModelError("mass and height must be positive")
    if scaling is None:
        scaling = load_scaling_table()
    segments = []
    for name in SEGMENT_NAMES:
        sc = scaling[name]
        m = sc["mass_frac"] * mass
        length = sc["length_frac"] * height
        com = (0.0, sc["com_frac"] * length)
        gyr = sc["gyration_frac"] * length
        segments.append(Segment(name, length, m, com, m * gyr * gyr))
    joints = tuple(JointDef(n) for n in JOINT_NAMES)
    return HumanModel(tuple(segments), joints, total_mass=mass)


def load_model(path) -> HumanModel:
    """Load a chain model from the plain-text key/value + segment-row schema.

    See DATA_FORMATS.md: ``mass`` and optional ``height`` key/value lines,
    then one ``segment <name> <length> <mass> <com_forward> <com_along>
    <inertia>`` row per segment in chain order.
    """
    with open(path, "r") as fh:
        text = fh.read()
    mass = None
    segments = []
    for row in _read_table(text, str(path)):
        if row[0] == "mass":
            mass = float(row[1])
        elif row[0] == "height":
            continue
        elif row[0] == "segment":
            if len(row) != 7:
                raise ModelError(f"{path}: segment row needs 7 fields, got {row}")
            segments.append(Segment(
                row[1], float(row[2]), float(row[3]),
                (float(row[4]), float(row[5])), float(row[6]),
            ))
        else:
            raise ModelError(f"{path}: unknown directive {row[0]!r}")
    if mass is None:
        raise ModelError(f"{path}: missing 'mass' line")
    names = [s.name for s in segments]
    if names != list(SEGMENT_NAMES):
        raise ModelError(f"{path}: segment rows must be {list(SEGMENT_NAMES)}, got {names}")
    joints = tuple(JointDef(n) for n in JOINT_NAMES)
    return HumanModel(tuple(segments), joints, total_mass=mass)


def save_model(model: HumanModel, path) -> None:
    lines = [f"mass {model.total_mass!r}"]
    for s in model.segments:
        lines.append(
            f"segment {s.name} {s.length!r} {s.mass!r} "
            f"{s.com_offset[0]!r} {s.com_offset[1]!r} {s.inertia!r}"
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_joint_defaults(text: str | None = None) -> dict[str, dict[str, float]]:
    """Parse the packaged per-joint defaults table.

    Rows: ``joint q_min_deg q_max_deg qd_max tau_max`` -- published
    range-of-motion limits, peak angular speeds and maximum-torque values
    used when no subject-specific calibration exists.
    """
    if text is None:
        text = _load_packaged("joint_defaults.txt")
    table = {}
    for row in _read_table(text, "joint defaults"):
        if len(row) != 5:
            raise ModelError(f"joint defaults: expected 5 columns, got {row}")
        table[row[0]] = {
            "q_min": math.radians(float(row[1])),
            "q_max": math.radians(float(row[2])),
            "qd_max": float(row[3]),
            "tau_max": float(row[4]),
        }
    missing = [j for j in JOINT_NAMES if j not in table]
    if missing:
        raise ModelError(f"joint defaults: missing joints {missing}")
    return table
