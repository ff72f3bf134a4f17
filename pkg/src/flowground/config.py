"""Pipeline configuration.

The on-disk JSON keeps the units the thresholds are usually quoted in
(degrees, centimeters, millimeters, pixels); properties convert to
meters/radians for internal use. Values are stored as given so that
parse -> serialize -> parse is a fixed point.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

from .camera import CameraIntrinsics
from .se3 import RigidTransform


@dataclass
class PipelineConfig:
    theta_max_deg: float = 45.0
    epsilon_grasp: float = 0.9
    epsilon_nonprehensile: float = 0.95
    delta_grasp_cm: float = 5.0
    delta_nonprehensile_cm: float = 2.0
    tau: float = 0.15  # meters
    ransac_iterations: int = 1000
    min_component_area: int = 50  # pixels
    tip_radius_px: float = 15.0
    contact_max_dist_cm: float = 5.0
    collision_clearance_mm: float = 1.0
    support_band_cm: float = 0.5
    n_c: int = 2
    actions_per_beam: int = 2
    rollouts_strategic: int = 4
    rollouts_greedy: int = 8
    s_min: float = 0.0
    recovery_budget: int = 2
    seed: int = 0
    camera: dict = field(default_factory=lambda: {
        "fx": 100.0, "fy": 100.0, "cx": 32.0, "cy": 24.0,
        "width": 64, "height": 48})
    # camera-to-robot extrinsic and gripper tool offset, row-major rotation
    camera_to_robot_rotation: list = field(default_factory=lambda: [
        1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0])
    camera_to_robot_translation: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    tool_offset_rotation: list = field(default_factory=lambda: [
        1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0])

    def __post_init__(self):
        for name in ("theta_max_deg", "epsilon_grasp", "epsilon_nonprehensile",
                     "delta_grasp_cm", "delta_nonprehensile_cm", "tau",
                     "tip_radius_px", "contact_max_dist_cm",
                     "collision_clearance_mm", "support_band_cm"):
            if getattr(self, name) <= 0 and not name.startswith("epsilon"):
                raise ValueError(f"{name} must be positive")
        if not (0 < self.epsilon_grasp <= 1 and 0 < self.epsilon_nonprehensile <= 1):
            raise ValueError("epsilon thresholds must lie in (0, 1]")

    # unit conversions
    @property
    def theta_max(self) -> float:
        return math.radians(self.theta_max_deg)

    @property
    def delta_grasp(self) -> float:
        return self.delta_grasp_cm / 100.0

    @property
    def delta_nonprehensile(self) -> float:
        return self.delta_nonprehensile_cm / 100.0

    @property
    def contact_max_dist(self) -> float:
        return self.contact_max_dist_cm / 100.0

    @property
    def collision_clearance(self) -> float:
        return self.collision_clearance_mm / 1000.0

    @property
    def support_band(self) -> float:
        return self.support_band_cm / 100.0

    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics.from_dict(self.camera)

    def extrinsic(self) -> RigidTransform:
        import numpy as np
        return RigidTransform(np.array(self.camera_to_robot_rotation).reshape(3, 3),
                              np.array(self.camera_to_robot_translation))

    def tool_offset(self) -> RigidTransform:
        import numpy as np
        return RigidTransform(np.array(self.tool_offset_rotation).reshape(3, 3),
                              np.zeros(3))

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "PipelineConfig":
        known = {f for f in PipelineConfig.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return PipelineConfig(**d)

    @staticmethod
    def load(path) -> "PipelineConfig":
        with open(path) as f:
            return PipelineConfig.from_dict(json.load(f))

    def dump(self, path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
