"""flowground: ground generated-video artifacts into metric robot trajectories.

The library turns 3D keypoint tracks, depth maps, object masks and hand
landmark trajectories into metric 6-DoF end-effector trajectories, and
closes the loop with a beam-search planner that verifies each executed
step and recovers from failures.
"""

from .camera import CameraIntrinsics
from .config import PipelineConfig
from .depth import (
    AffineDepthModel,
    DepthFrame,
    apply_depth_model,
    build_calibration_mask,
    calibrate_depth_affine,
)
from .errors import (
    CalibrationFailure,
    DegenerateGeometry,
    EmptyCandidateSet,
    FlowgroundError,
    InsufficientKeypoints,
    InterfaceError,
    MissingInput,
    NoValidGrasp,
    SpecInvalid,
    StepFailed,
)
from .flow_select import (
    GroundedPlan,
    hand_flow_to_ee,
    max_interframe_rotation,
    object_flow_to_ee,
    should_switch_to_hand,
    transform_plan,
)
from .grasp import GraspCandidate, SceneCloud, ScoredGrasp, rank_grasps
from .hand import (
    ContactInterval,
    HandTrajectory,
    MaskSequence,
    detect_contact_interval,
    hand_se3_trajectory,
    palm_frame_rotation,
    recover_scale_at_contact,
    recover_scale_non_prehensile,
)
from .planner import (
    ExecutionReport,
    PlanBeam,
    PlannerInterfaces,
    Proposal,
    RecoveryChoice,
    Rollout,
    RolloutCandidate,
    RolloutScore,
    Task,
    plan_strategic,
    run_loop,
    validate_rollout_scores,
)
from .pipeline import ground_bundle, run_pipeline
from .se3 import (
    AxisAngle,
    FlowField,
    RigidTransform,
    flow_to_motion,
    kabsch_rigid_transform,
    rotation_geodesic_error,
    to_axis_angle,
)

__version__ = "1.0.0"

__all__ = [
    "AffineDepthModel", "AxisAngle", "CalibrationFailure", "CameraIntrinsics",
    "ContactInterval", "DegenerateGeometry", "DepthFrame", "EmptyCandidateSet",
    "ExecutionReport", "FlowField", "FlowgroundError", "GraspCandidate",
    "GroundedPlan", "HandTrajectory", "InsufficientKeypoints", "InterfaceError",
    "MaskSequence", "MissingInput", "NoValidGrasp", "PipelineConfig", "PlanBeam",
    "PlannerInterfaces", "Proposal", "RecoveryChoice", "RigidTransform",
    "Rollout", "RolloutCandidate", "RolloutScore", "SceneCloud", "ScoredGrasp",
    "SpecInvalid", "StepFailed", "Task", "apply_depth_model",
    "build_calibration_mask", "calibrate_depth_affine", "detect_contact_interval",
    "flow_to_motion", "ground_bundle", "hand_flow_to_ee", "hand_se3_trajectory",
    "kabsch_rigid_transform", "max_interframe_rotation", "object_flow_to_ee",
    "palm_frame_rotation", "plan_strategic", "rank_grasps",
    "recover_scale_at_contact", "recover_scale_non_prehensile",
    "rotation_geodesic_error", "run_loop", "run_pipeline",
    "should_switch_to_hand", "to_axis_angle", "transform_plan",
    "validate_rollout_scores",
]
