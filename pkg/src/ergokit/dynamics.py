"""Sagittal inverse dynamics and load-related joint quantities.

A single recursive Newton-Euler pass over the chain yields, per joint, the
net actuation torque and the inter-segment force.  On top of that sit the
quantities that drive the dynamic risk indexes: the extra torque induced
by an external load, the axial (compressive) component of the transmitted
force, and the estimate of a carried vertical load from the force-plate
reading.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .model import (
    GRAVITY,
    ChainState,
    CopEstimate,
    HumanModel,
    JointConfiguration,
    ModelError,
    SescParameters,
    chain_kinematics,
    com_kinematics,
    estimate_cop_dynamic,
    sesc_com_kinematics,
)


class DynamicsError(ValueError):
    """Raised for inconsistent dynamics inputs."""


@dataclass(frozen=True)
class ExternalWrench:
    """Environment wrench acting on the hand segment.

    ``force`` is the sagittal force vector (N) applied to the body,
    ``torque`` the out-of-plane moment (N*m).  ``point`` locates the
    application point in hand-local (forward, along) coordinates; ``None``
    means the grip center at the middle of the hand segment (a two-handed
    load maps to this single equivalent point).
    """

    force: tuple[float, float] = (0.0, 0.0)
    torque: float = 0.0
    point: tuple[float, float] | None = None

    def __post_init__(self):
        f = tuple(float(v) for v in self.force)
        if len(f) != 2 or not all(math.isfinite(v) for v in f):
            raise DynamicsError(f"wrench force must be a finite 2-vector, got {self.force}")
        object.__setattr__(self, "force", f)
        if not math.isfinite(float(self.torque)):
            raise DynamicsError("wrench torque must be finite")
        object.__setattr__(self, "torque", float(self.torque))
        if self.point is not None:
            p = tuple(float(v) for v in self.point)
            if len(p) != 2 or not all(math.isfinite(v) for v in p):
                raise DynamicsError(f"wrench point must be a finite 2-vector, got {self.point}")
            object.__setattr__(self, "point", p)

    @property
    def is_zero(self) -> bool:
        return self.force == (0.0, 0.0) and self.torque == 0.0


@dataclass(frozen=True)
class OverloadingTorques:
    """Per-joint torque increment attributable to the external load alone."""

    values: tuple[float, ...]

    def as_array(self) -> np.ndarray:
        return np.array(self.values)


@dataclass(frozen=True)
class CompressiveForces:
    """Per-joint inward axial transmitted force, clipped at zero."""

    values: tuple[float, ...]

    def as_array(self) -> np.ndarray:
        return np.array(self.values)


class InverseDynamicsResult(NamedTuple):
    """Outcome of one recursive Newton-Euler pass.

    ``tau[k]`` is the net torque at joint k (chain order).
    ``support_force[k]`` is the force the proximal side exerts on the
    distal side at joint k.  ``grf_required``/``cop_required`` describe
    the ground wrench the motion implies; ``newton_residual`` is the force
    mismatch against a measured ground reaction, when one was supplied.
    """

    tau: np.ndarray
    support_force: np.ndarray
    grf_required: np.ndarray
    cop_required: float
    newton_residual: float | None


def _resolve_wrench(model: HumanModel, external: ExternalWrench | None):
    """Application point in hand-local coordinates, validated on-segment."""
    if external is None:
        return None
    hand = model.segments[-1]
    point = external.point if external.point is not None else (0.0, 0.5 * hand.length)
    if not (-1e-9 <= point[1] <= hand.length + 1e-9 and abs(point[0]) <= hand.length + 1e-9):
        raise DynamicsError(
            f"wrench application point {point} lies off the hand segment "
            f"(length {hand.length})"
        )
    return point


def inverse_dynamics(model: HumanModel, cfg: JointConfiguration,
                     external: ExternalWrench | None = None,
                     grf: tuple[float, float] | None = None,
                     gravity: float = GRAVITY,
                     state: ChainState | None = None) -> InverseDynamicsResult:
    """Net joint torques and transmitted forces for one configuration.

    The recursion starts at the hand (where the external wrench enters)
    and walks down to the foot, whose balance yields the ground wrench
    the motion requires.
    """
    st = state if state is not None else chain_kinematics(model, cfg)
    point = _resolve_wrench(model, external)
    n_seg = len(model.segments)
    # wrench application point in world coordinates
    if external is not None:
        a0, b0 = point
        ang = st.angle[-1]
        s, c = math.sin(ang), math.cos(ang)
        ox, oz = st.origin[-1]
        wpx = ox + a0 * c + b0 * s
        wpz = oz - a0 * s + b0 * c
        wfx, wfz = external.force
        wtau = external.torque
    else:
        wpx = wpz = wfx = wfz = wtau = 0.0

    tau = [0.0] * (n_seg - 1)
    fsup = [(0.0, 0.0)] * (n_seg - 1)
    # force/torque applied to the current segment at its distal joint by the
    # part above it (reaction of the next segment's proximal loading)
    fx_up = fz_up = 0.0
    n_up = 0.0
    for j in range(n_seg - 1, 0, -1):
        seg = model.segments[j]
        ax, az = st.com_acc[j]
        cxj, czj = st.com[j]
        # external contributions on this segment (hand wrench, moment about CoM)
        ex = ez = etau = 0.0
        if j == n_seg - 1 and external is not None:
            ex, ez = wfx, wfz
            etau = (wpz - czj) * wfx - (wpx - cxj) * wfz + wtau
        m = seg.mass
        # Newton: f_prox + f_distal_reaction + m g + external = m a
        fx = m * ax - (-fx_up) - ex
        fz = m * (az + gravity) - (-fz_up) - ez
        # Euler about the segment CoM
        px, pz = st.origin[j]
        dx, dz = st.distal[j]
        rpx, rpz = px - cxj, pz - czj
        rdx, rdz = dx - cxj, dz - czj
        n_prox = (
            seg.inertia * st.ang_acc[j]
            - (rpz * fx - rpx * fz)
            - (rdz * (-fx_up) - rdx * (-fz_up))
            - (-n_up)
            - etau
        )
        tau[j - 1] = n_prox
        fsup[j - 1] = (fx, fz)
        fx_up, fz_up, n_up = fx, fz, n_prox

    # foot balance gives the required ground wrench
    foot = model.segments[0]
    ax0, az0 = st.com_acc[0]
    grf_x = foot.mass * ax0 + fx_up
    grf_z = foot.mass * (az0 + gravity) + fz_up
    # moment balance about the world origin over the whole system
    mu = 0.0
    for j, seg in enumerate(model.segments):
        cx, cz = st.com[j]
        acx, acz = st.com_acc[j]
        mu += seg.inertia * st.ang_acc[j] + seg.mass * (cz * acx - cx * acz)
        mu -= seg.mass * (cx * gravity)  # moment of gravity (0, -m g)
    if external is not None:
        mu -= (wpz * wfx - wpx * wfz) + wtau
    # ground wrench (grf, moment mu about origin): zero moment at x = -mu/grf_z
    cop_required = -mu / grf_z if abs(grf_z) > 1e-12 else math.nan

    residual = None
    if grf is not None:
        gx, gz = float(grf[0]), float(grf[1])
        residual = math.hypot(gx - grf_x, gz - grf_z)

    return InverseDynamicsResult(
        np.array(tau),
        np.array(fsup),
        np.array([grf_x, grf_z]),
        cop_required,
        residual,
    )


def overloading_torque(model: HumanModel, cfg: JointConfiguration,
                       external: ExternalWrench,
                       method: str = "jacobian",
                       state: ChainState | None = None) -> OverloadingTorques:
    """Joint-torque increment caused by the external wrench alone.

    ``method='jacobian'`` maps the wrench through the transpose of the
    hand-point Jacobian; ``method='id_difference'`` subtracts two inverse
    dynamics passes.  Both agree to rounding and are kept as mutual
    checks.
    """
    if external is None:
        raise DynamicsError("external wrench required")
    if method == "id_difference":
        with_w = inverse_dynamics(model, cfg, external, state=state)
        without = inverse_dynamics(model, cfg, None, state=state)
        return OverloadingTorques(tuple(float(v) for v in (with_w.tau - without.tau)))
    if method != "jacobian":
        raise DynamicsError(f"unknown method {method!r}")
    st = state if state is not None else chain_kinematics(model, cfg)
    point = _resolve_wrench(model, external)
    a0, b0 = point
    ang = st.angle[-1]
    s, c = math.sin(ang), math.cos(ang)
    ox, oz = st.origin[-1]
    wpx = ox + a0 * c + b0 * s
    wpz = oz - a0 * s + b0 * c
    fx, fz = external.force
    vals = []
    for k in range(1, len(model.segments)):
        jx, jz = st.origin[k]
        # load moment about joint k; the joint must supply the opposite
        vals.append(-(((wpz - jz) * fx - (wpx - jx) * fz) + external.torque))
    return OverloadingTorques(tuple(vals))


def compressive_forces(model: HumanModel, cfg: JointConfiguration,
                       external: ExternalWrench,
                       grf: tuple[float, float] | None = None,
                       gravity: float = GRAVITY,
                       state: ChainState | None = None) -> CompressiveForces:
    """Inward axial component of the transmitted force at every joint.

    The transmitted force is taken from the inverse-dynamics pass; its
    component along the distal segment's axis (pointing away from the
    joint) is compression when directed into that segment, and is clipped
    at zero when the joint is in tension.
    """
    if external is None:
        raise DynamicsError("external wrench required (all sagittal components)")
    st = state if state is not None else chain_kinematics(model, cfg)
    res = inverse_dynamics(model, cfg, external, grf=grf, gravity=gravity, state=st)
    vals = []
    for k in range(1, len(model.segments)):
        ang = st.angle[k]
        ux, uz = math.sin(ang), math.cos(ang)
        fx, fz = res.support_force[k - 1]
        vals.append(max(0.0, fx * ux + fz * uz))
    return CompressiveForces(tuple(vals))


class ExternalForceEstimate(NamedTuple):
    """Vertical-load estimate from the force plate and the CoM model.

    ``force_z`` is the magnitude of the carried vertical load (positive
    when weight is carried); ``cop_residual`` is the measured CoP minus
    the load-free estimated CoP.
    """

    force_z: float
    cop_residual: float
    valid: bool


def estimate_external_vertical_force(model_or_params, cfg: JointConfiguration,
                                     measured_cop_x: float,
                                     measured_grf_z: float,
                                     mass: float | None = None,
                                     gravity: float = GRAVITY) -> ExternalForceEstimate:
    """Carried-load estimate from the vertical force-plate discrepancy.

    force_z = grf_z_measured - M*(g + zdd_com): zero when nothing is
    carried.  The CoP residual compares the measured CoP against the
    load-free dynamic estimate and carries its validity flag.
    """
    if isinstance(model_or_params, HumanModel):
        model = model_or_params
        M = model.total_mass if mass is None else float(mass)
        ck = com_kinematics(model, cfg)
        cop = estimate_cop_dynamic(model, cfg, gravity)
    elif isinstance(model_or_params, SescParameters):
        if mass is None:
            raise DynamicsError("subject mass required with equivalent-chain coefficients")
        M = float(mass)
        ck = sesc_com_kinematics(model_or_params, cfg)
        denom = gravity + float(ck.acceleration[1])
        if denom <= 0.1:
            cop = CopEstimate(np.array([math.nan, 0.0]), False)
        else:
            # momentum-rate term is not available from CoM coefficients;
            # the quasi-static share dominates for plate-standing tasks
            x = float(ck.position[0]) - float(ck.position[1]) * float(ck.acceleration[0]) / denom
            cop = CopEstimate(np.array([x, 0.0]), True)
    else:
        raise TypeError(f"expected HumanModel or SescParameters, got {type(model_or_params)!r}")
    force_z = float(measured_grf_z) - M * (gravity + float(ck.acceleration[1]))
    residual = float(measured_cop_x) - cop.x if cop.valid else math.nan
    return ExternalForceEstimate(force_z, residual, cop.valid)
