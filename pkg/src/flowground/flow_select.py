"""Object-flow vs hand-flow switching and mapping to end-effector poses."""

from __future__ import annotations

from dataclasses import dataclass

from .grasp import GraspCandidate
from .se3 import RigidTransform, to_axis_angle


@dataclass(frozen=True)
class GroundedPlan:
    """An executable end-effector trajectory in the robot base frame."""

    source: str  # "object-flow" | "hand-flow"
    ee_trajectory: list[RigidTransform]
    grasp: GraspCandidate | None = None

    def __post_init__(self):
        if self.source not in ("object-flow", "hand-flow"):
            raise ValueError(f"unknown flow source {self.source!r}")
        if not self.ee_trajectory:
            raise ValueError("trajectory must be nonempty")
        if self.source == "object-flow" and self.grasp is None:
            raise ValueError("object-flow plans require a grasp")


# slack absorbing the cos/acos round-trip error when a rotation magnitude
# lands exactly on the threshold; far below any physically meaningful angle
_ANGLE_EPS = 1e-9


def should_switch_to_hand(motions: list[RigidTransform], theta_max: float) -> bool:
    """True iff any adjacent-frame rotation magnitude strictly exceeds theta_max (radians)."""
    return any(to_axis_angle(m.rotation).angle > theta_max + _ANGLE_EPS for m in motions)


def object_flow_to_ee(motions: list[RigidTransform], grasp: GraspCandidate) -> GroundedPlan:
    """Compose cumulative object motion onto the grasp pose.

    The first pose is the grasp pose itself; pose t applies the motions up
    to t on the left, so the object stays fixed relative to the gripper.
    """
    poses = [grasp.pose]
    cumulative = RigidTransform.identity()
    for m in motions:
        cumulative = m.compose(cumulative)
        poses.append(cumulative.compose(grasp.pose))
    return GroundedPlan(source="object-flow", ee_trajectory=poses, grasp=grasp)


def hand_flow_to_ee(hand_traj: list[RigidTransform], grasp: GraspCandidate | None = None,
                    grasp_pose: RigidTransform | None = None) -> GroundedPlan:
    """Rebase the hand trajectory so its first pose is the grasp pose.

    A constant offset is composed on the right, which preserves all
    adjacent-frame relative transforms of the hand flow.
    """
    if not hand_traj:
        raise ValueError("hand trajectory must be nonempty")
    if grasp_pose is None:
        grasp_pose = grasp.pose if grasp is not None else hand_traj[0]
    offset = hand_traj[0].inverse().compose(grasp_pose)
    poses = [h.compose(offset) for h in hand_traj]
    return GroundedPlan(source="hand-flow", ee_trajectory=poses, grasp=grasp)


def transform_plan(plan: GroundedPlan, extrinsic: RigidTransform,
                   tool_offset: RigidTransform | None = None) -> GroundedPlan:
    """Map a camera-frame plan into the robot base frame.

    extrinsic is the camera-to-robot transform applied on the left;
    tool_offset is an optional fixed gripper-convention rotation composed
    on the right.
    """
    poses = [extrinsic.compose(p) for p in plan.ee_trajectory]
    if tool_offset is not None:
        poses = [p.compose(tool_offset) for p in poses]
    return GroundedPlan(source=plan.source, ee_trajectory=poses, grasp=plan.grasp)


def max_interframe_rotation(motions: list[RigidTransform]) -> float:
    """Largest adjacent-frame rotation magnitude in radians."""
    if not motions:
        return 0.0
    return max(to_axis_angle(m.rotation).angle for m in motions)


def relative_transforms(poses: list[RigidTransform]) -> list[RigidTransform]:
    """Adjacent-pose relative transforms: rel_t = pose_t * pose_{t-1}^-1."""
    return [b.compose(a.inverse()) for a, b in zip(poses, poses[1:])]
