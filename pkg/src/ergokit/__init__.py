"""Streaming sagittal-plane ergonomics monitor.

Ingests whole-body motion, ground-reaction and hand-wrench data, fits a
subject-specific sagittal chain model, and computes eight normalized
ergonomic risk indexes online, with calibration, risk categorization,
per-action aggregation, muscle-activity benchmarking and the
repeated-measures statistics used to compare conditions.
"""

__version__ = "0.1.0"

from .model import (
    GRAVITY,
    JOINT_NAMES,
    SEGMENT_NAMES,
    HumanModel,
    JointConfiguration,
    Segment,
    SescParameters,
    default_model,
    estimate_cop_dynamic,
    estimate_cop_static,
    forward_kinematics,
    sesc_com,
    sesc_from_model,
    whole_body_com,
)
from .dynamics import (
    CompressiveForces,
    ExternalWrench,
    OverloadingTorques,
    compressive_forces,
    estimate_external_vertical_force,
    inverse_dynamics,
    overloading_torque,
)
from .indexes import (
    INDEX_NAMES,
    ActionAggregate,
    Category,
    FatigueState,
    IndexVector,
    RiskThresholds,
    aggregate,
    categorize,
    update_fatigue,
)
from .calibration import (
    SubjectProfile,
    default_profile,
    fit_fatigue_params,
    fit_sesc,
    extract_force_maxima,
    extract_kinematic_maxima,
    load_profile,
    resolve_torque_maxima,
    save_profile,
)
from .stats import (
    RepeatedMeasuresTable,
    TestResult,
    paired_t,
    posthoc_matrix,
    rm_anova,
)
