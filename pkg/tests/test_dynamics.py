import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ergokit.dynamics import (
    DynamicsError,
    ExternalWrench,
    compressive_forces,
    estimate_external_vertical_force,
    inverse_dynamics,
    overloading_torque,
)
from ergokit.model import (
    GRAVITY,
    HumanModel,
    JOINT_NAMES,
    JointConfiguration,
    JointDef,
    N_JOINTS,
    Segment,
    chain_kinematics,
    sesc_from_model,
    whole_body_com,
)

angles7 = st.tuples(*[st.floats(-1.8, 1.8) for _ in range(7)])


def arm_test_model():
    """Chain with round numbers: upper arm 0.2, forearm 0.15, hand 0.1."""
    lengths = [0.1, 0.45, 0.45, 0.1, 0.4, 0.2, 0.15, 0.1]
    masses = [2.0, 8.0, 16.0, 10.0, 30.0, 4.0, 3.0, 1.0]
    segs = tuple(
        Segment(n, L, m, (0.0, 0.5 * L), 0.02 * m * L * L)
        for n, L, m in zip(
            ("foot", "shank", "thigh", "pelvis", "trunk", "upper_arm", "forearm", "hand"),
            lengths, masses,
        )
    )
    return HumanModel(segs, tuple(JointDef(j) for j in JOINT_NAMES), total_mass=sum(masses))


def random_cfg(rng):
    return JointConfiguration(
        q=tuple(rng.uniform(-1.5, 1.5, N_JOINTS)),
        qd=tuple(rng.uniform(-3, 3, N_JOINTS)),
        qdd=tuple(rng.uniform(-8, 8, N_JOINTS)),
        base_angle=rng.uniform(-0.4, 0.4),
        base_pos=tuple(rng.uniform(-0.5, 0.5, 2)),
    )


def gravity_statics_oracle(model, cfg):
    """Independent static joint torques: moment of the weights above each
    joint about that joint (no recursion)."""
    st_ = chain_kinematics(model, cfg)
    torques = []
    for k in range(1, len(model.segments)):
        jx, jz = st_.origin[k]
        tau = 0.0
        for j in range(k, len(model.segments)):
            cx, _ = st_.com[j]
            # moment of (0, -m g) about the joint, then the joint must
            # supply the opposite to hold the pose
            tau -= (-(cx - jx) * (-model.segments[j].mass * GRAVITY))
        torques.append(tau)
    return np.array(torques)


class TestInverseDynamics:
    def test_static_upright_torques_vanish(self, model):
        res = inverse_dynamics(model, JointConfiguration(q=(0.0,) * 7))
        np.testing.assert_allclose(res.tau, 0.0, atol=1e-12)
        np.testing.assert_allclose(
            res.grf_required, [0.0, model.total_mass * GRAVITY], atol=1e-9
        )

    def test_static_bent_posture_matches_statics_oracle(self, model):
        rng = np.random.default_rng(17)
        for _ in range(10):
            cfg = JointConfiguration(q=tuple(rng.uniform(-1.2, 1.2, 7)))
            res = inverse_dynamics(model, cfg)
            np.testing.assert_allclose(
                res.tau, gravity_statics_oracle(model, cfg), rtol=1e-9, atol=1e-9
            )

    def test_point_load_at_lever_matches_hand_computation(self):
        # 10 kg at a 0.4 m horizontal lever from the shoulder: the load's
        # torque contribution there is 10 * 9.80665 * 0.4 = 39.2266 N*m
        mdl = arm_test_model()
        # arm pointing forward: shoulder->grip horizontal span 0.2+0.15+0.05
        q = (0.0, 0.0, 0.0, 0.0, math.pi / 2, 0.0, 0.0)
        cfg = JointConfiguration(q=q)
        load = ExternalWrench(force=(0.0, -10.0 * GRAVITY), point=(0.0, 0.05))
        dtau = overloading_torque(mdl, cfg, load).as_array()
        assert abs(dtau[4]) == pytest.approx(10.0 * GRAVITY * 0.4, abs=1e-9)
        assert abs(dtau[4]) == pytest.approx(39.2266, abs=1e-4)
        # elbow sees the forearm+hand share of the lever
        assert abs(dtau[5]) == pytest.approx(10.0 * GRAVITY * 0.2, abs=1e-9)
        # wrist sees the in-hand lever
        assert abs(dtau[6]) == pytest.approx(10.0 * GRAVITY * 0.05, abs=1e-9)

    def test_zero_gravity_zero_motion_zero_load_zero_torque(self, model):
        cfg = JointConfiguration(q=(0.3, -0.2, 0.5, 0.1, 1.0, -0.4, 0.2))
        res = inverse_dynamics(model, cfg, gravity=0.0)
        np.testing.assert_allclose(res.tau, 0.0, atol=1e-12)
        np.testing.assert_allclose(res.support_force, 0.0, atol=1e-12)

    def test_newton_residual_against_measured_grf(self, model):
        # consistent plate data comes from the synthetic generator
        from ergokit.synthetic import ground_reaction
        rng = np.random.default_rng(4)
        for _ in range(10):
            cfg = random_cfg(rng)
            grf, _, _, _ = ground_reaction(model, cfg)
            res = inverse_dynamics(model, cfg, grf=grf)
            assert res.newton_residual < 1e-6

    def test_newton_consistency_on_swing_trajectory(self, model):
        from ergokit.synthetic import ground_reaction
        w = 2.0 * math.pi * 0.4
        for t in np.linspace(0, 2.5, 100):
            s, c = math.sin(w * t), math.cos(w * t)
            q = (0.2 * s, -0.3 * s, 0.3 * s, 0.2 * s, 0.5 * s, -0.3 * s, 0.1 * s)
            qd = (0.2 * w * c, -0.3 * w * c, 0.3 * w * c, 0.2 * w * c,
                  0.5 * w * c, -0.3 * w * c, 0.1 * w * c)
            qdd = (-0.2 * w * w * s, 0.3 * w * w * s, -0.3 * w * w * s, -0.2 * w * w * s,
                   -0.5 * w * w * s, 0.3 * w * w * s, -0.1 * w * w * s)
            cfg = JointConfiguration(q=q, qd=qd, qdd=qdd)
            grf, _, _, _ = ground_reaction(model, cfg)
            res = inverse_dynamics(model, cfg, grf=grf)
            assert res.newton_residual < 1e-6
            # total-force route: grf + gravity == sum of segment ma
            com_acc = np.zeros(2)
            st_ = chain_kinematics(model, cfg)
            for seg, a in zip(model.segments, st_.com_acc):
                com_acc += seg.mass * np.array(a)
            balance = np.array(grf) + np.array([0.0, -model.total_mass * GRAVITY]) - com_acc
            assert np.abs(balance).max() < 1e-6


class TestOverloadingTorque:
    @settings(max_examples=60, deadline=None)
    @given(q=angles7, fx=st.floats(-300, 300), fz=st.floats(-300, 300),
           tq=st.floats(-40, 40))
    def test_jacobian_equals_id_difference(self, model, q, fx, fz, tq):
        cfg = JointConfiguration(q=q)
        w = ExternalWrench(force=(fx, fz), torque=tq)
        a = overloading_torque(model, cfg, w, method="jacobian").as_array()
        b = overloading_torque(model, cfg, w, method="id_difference").as_array()
        scale = max(1.0, np.abs(a).max())
        assert np.abs(a - b).max() < 1e-9 * scale

    @settings(max_examples=30, deadline=None)
    @given(q=angles7, fx=st.floats(-200, 200), fz=st.floats(-200, 200),
           alpha=st.floats(-3, 3))
    def test_linear_in_the_wrench(self, model, q, fx, fz, alpha):
        cfg = JointConfiguration(q=q)
        one = overloading_torque(model, cfg, ExternalWrench(force=(fx, fz))).as_array()
        scaled = overloading_torque(
            model, cfg, ExternalWrench(force=(alpha * fx, alpha * fz))
        ).as_array()
        np.testing.assert_allclose(scaled, alpha * one, rtol=1e-9, atol=1e-9)

    def test_zero_wrench_gives_zero(self, model):
        cfg = JointConfiguration(q=(0.2,) * 7)
        dtau = overloading_torque(model, cfg, ExternalWrench()).as_array()
        np.testing.assert_allclose(dtau, 0.0, atol=0.0)

    def test_independent_of_motion_and_gravity(self, model):
        rng = np.random.default_rng(8)
        q = tuple(rng.uniform(-1, 1, 7))
        w = ExternalWrench(force=(50.0, -80.0), torque=5.0)
        static = overloading_torque(model, JointConfiguration(q=q), w).as_array()
        moving = overloading_torque(
            model,
            JointConfiguration(q=q, qd=tuple(rng.uniform(-2, 2, 7)),
                               qdd=tuple(rng.uniform(-5, 5, 7))),
            w,
        ).as_array()
        np.testing.assert_allclose(static, moving, atol=1e-12)

    def test_missing_wrench_rejected(self, model):
        with pytest.raises(DynamicsError):
            overloading_torque(model, JointConfiguration(q=(0.0,) * 7), None)

    def test_off_segment_application_point_rejected(self, model):
        w = ExternalWrench(force=(0.0, -10.0), point=(0.0, 5.0))
        with pytest.raises(DynamicsError):
            overloading_torque(model, JointConfiguration(q=(0.0,) * 7), w)


class TestCompressiveForces:
    def test_upright_vertical_load_equals_supported_weight(self, model):
        F = 120.0
        cfg = JointConfiguration(q=(0.0,) * 7)
        fc = compressive_forces(model, cfg, ExternalWrench(force=(0.0, -F))).as_array()
        masses = [s.mass for s in model.segments]
        for k in range(N_JOINTS):
            expected = sum(masses[k + 1:]) * GRAVITY + F
            assert fc[k] == pytest.approx(expected, rel=1e-12)

    def test_hanging_arm_is_tension_at_the_shoulder(self, model):
        # arm pointing straight down, nothing in the hand: the trunk holds
        # the arm's weight, the joint is stretched, not compressed
        cfg = JointConfiguration(q=(0.0, 0.0, 0.0, 0.0, math.pi, 0.0, 0.0))
        fc = compressive_forces(model, cfg, ExternalWrench()).as_array()
        assert fc[4] == 0.0
        assert fc[5] == 0.0
        assert fc[6] == 0.0

    def test_axial_push_compresses_arm_without_torque(self):
        mdl = arm_test_model()
        F = 90.0
        q = (0.0, 0.0, 0.0, 0.0, math.pi / 2, 0.0, 0.0)
        cfg = JointConfiguration(q=q)
        # pushing forward against a rigid stop: reaction is axial
        w = ExternalWrench(force=(-F, 0.0), point=(0.0, 0.05))
        fc = compressive_forces(mdl, cfg, w).as_array()
        dtau = overloading_torque(mdl, cfg, w).as_array()
        for joint in (4, 5, 6):  # shoulder, elbow, wrist
            assert fc[joint] == pytest.approx(F, rel=1e-12)
            assert abs(dtau[joint]) < 1e-12

    def test_more_gravity_aligned_wrench_compresses_more(self, profile):
        # working a low panel with the arm down the tool axis: a wrench of
        # the same magnitude aligned with gravity loads the arm axially,
        # one perpendicular to it does not
        from ergokit.synthetic import posture
        model = profile.model()
        cfg = JointConfiguration(q=posture("drill_d1"))
        W = 150.0
        vertical = ExternalWrench(force=(0.0, W))   # supporting a lean
        horizontal = ExternalWrench(force=(-W, 0.0))
        fc_v = compressive_forces(model, cfg, vertical).as_array()
        fc_h = compressive_forces(model, cfg, horizontal).as_array()
        for joint in (4, 5, 6):
            assert fc_v[joint] > fc_h[joint]

    @settings(max_examples=30, deadline=None)
    @given(q=angles7, fx=st.floats(-200, 200), fz=st.floats(-200, 200),
           tq=st.floats(-50, 50))
    def test_nonnegative_and_moment_invariant(self, model, q, fx, fz, tq):
        cfg = JointConfiguration(q=q)
        base = compressive_forces(model, cfg, ExternalWrench(force=(fx, fz))).as_array()
        with_moment = compressive_forces(
            model, cfg, ExternalWrench(force=(fx, fz), torque=tq)
        ).as_array()
        assert np.all(base >= 0.0)
        np.testing.assert_allclose(base, with_moment, atol=1e-12)

    def test_missing_wrench_rejected(self, model):
        with pytest.raises(DynamicsError):
            compressive_forces(model, JointConfiguration(q=(0.0,) * 7), None)


class TestExternalForceEstimate:
    def test_unloaded_static_standing_reads_zero(self, model):
        cfg = JointConfiguration(q=(0.0,) * 7)
        grf_z = model.total_mass * GRAVITY
        com = whole_body_com(model, cfg)
        est = estimate_external_vertical_force(model, cfg, com[0], grf_z)
        assert est.valid
        assert est.force_z == pytest.approx(0.0, abs=1e-9)
        assert est.cop_residual == pytest.approx(0.0, abs=1e-9)

    def test_ten_kilogram_box_reads_its_weight(self, model):
        # carrying 10.0 kg statically adds m*g = 98.0665 N to the plate
        cfg = JointConfiguration(q=(0.1, -0.2, 0.2, 0.1, 1.8, -1.2, 0.0))
        grf_z = (model.total_mass + 10.0) * GRAVITY
        est = estimate_external_vertical_force(model, cfg, 0.0, grf_z)
        assert est.force_z == pytest.approx(98.0665, abs=1e-9)

    def test_synthetic_injected_load_recovered_within_two_percent(self, model):
        from ergokit.synthetic import ground_reaction
        sesc = sesc_from_model(model)
        cfg = JointConfiguration(q=(0.05, -0.17, 0.17, 0.09, 2.18, -1.48, 0.0))
        m_box = 7.5
        grf, cop_x, tip, _ = ground_reaction(model, cfg, point_mass=m_box)
        est = estimate_external_vertical_force(sesc, cfg, cop_x, grf[1],
                                               mass=model.total_mass)
        assert est.force_z == pytest.approx(m_box * GRAVITY, rel=0.02)
        # the pressure point moved toward the carried load
        com_x = whole_body_com(model, cfg)[0]
        assert math.copysign(1.0, est.cop_residual) == math.copysign(1.0, tip[0] - com_x)

    def test_sesc_route_requires_mass(self, model):
        sesc = sesc_from_model(model)
        with pytest.raises(DynamicsError):
            estimate_external_vertical_force(sesc, JointConfiguration(q=(0.0,) * 7), 0.0, 700.0)
