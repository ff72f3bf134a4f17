"""Scene bundles: the on-disk stand-in for live cameras and models.

A bundle directory holds every input the pipeline needs (tracks, depth,
masks, landmarks, grasp candidates, a scripted planner scenario) plus a
manifest. The synthetic generator emits mutually consistent bundles from
a parametric rigid-motion and pinhole-projection model, together with the
analytic ground-truth trajectory, deterministically per seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .camera import CameraIntrinsics
from .depth import DepthFrame
from .errors import MissingInput, SpecInvalid
from .fileio import (
    write_depth_sequence,
    write_grasps,
    write_landmarks,
    write_mask_sequence,
    write_tracks,
    write_trajectory,
)
from .grasp import GraspCandidate
from .hand import FINGERTIPS, MCP_JOINTS, WRIST, HandTrajectory, MaskSequence, palm_frame_rotation
from .se3 import AxisAngle, RigidTransform


@dataclass
class BundleSpec:
    kind: str = "object"  # "object" | "hand"
    seed: int = 0
    frames: int = 8
    keypoints: int = 6
    depth_scale: float = 2.0
    depth_shift: float = 0.1
    motion_axis: list = field(default_factory=lambda: [0.0, 0.0, 1.0])
    motion_angle_deg: float = 5.0
    motion_translation: list = field(default_factory=lambda: [0.01, 0.0, 0.002])
    object_center: list = field(default_factory=lambda: [0.0, 0.0, 0.6])
    object_extent: float = 0.08
    contact_start: int = 4
    hand_scale: float = 1.6
    camera: dict = field(default_factory=lambda: {
        "fx": 100.0, "fy": 100.0, "cx": 32.0, "cy": 24.0,
        "width": 64, "height": 48})

    def validate(self):
        if self.kind not in ("object", "hand"):
            raise SpecInvalid("kind", f"kind must be object|hand, got {self.kind!r}")
        if self.frames < 2:
            raise SpecInvalid("frames", "need at least 2 frames")
        if self.keypoints < 3:
            raise SpecInvalid("keypoints", "need at least 3 keypoints")
        if self.depth_scale <= 0:
            raise SpecInvalid("depth_scale", "depth scale must be positive")
        if self.hand_scale <= 0:
            raise SpecInvalid("hand_scale", "hand scale must be positive")
        if self.kind == "hand" and not (1 <= self.contact_start < self.frames):
            raise SpecInvalid("contact_start", "contact_start must fall inside the clip")
        if np.linalg.norm(self.motion_axis) == 0:
            raise SpecInvalid("motion_axis", "motion axis must be nonzero")

    @staticmethod
    def from_dict(d: dict) -> "BundleSpec":
        known = set(BundleSpec.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise SpecInvalid(sorted(unknown)[0], f"unknown spec fields: {sorted(unknown)}")
        spec = BundleSpec(**d)
        spec.validate()
        return spec

    @staticmethod
    def load(path) -> "BundleSpec":
        with open(path) as f:
            return BundleSpec.from_dict(json.load(f))


def planted_motion(spec: BundleSpec) -> RigidTransform:
    axis = np.asarray(spec.motion_axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    rot = AxisAngle(math.radians(spec.motion_angle_deg), axis).to_matrix()
    return RigidTransform(rot, np.asarray(spec.motion_translation, dtype=float))


def _plane_depth(camera: CameraIntrinsics) -> np.ndarray:
    """A tilted background plane; non-constant so the affine fit is identifiable."""
    v, u = np.mgrid[0:camera.height, 0:camera.width].astype(np.float64)
    return 0.8 + 0.004 * u + 0.002 * v


def _motion_about_center(spec: BundleSpec) -> RigidTransform:
    """Planted per-frame motion re-centered on the object so it stays in view."""
    m = planted_motion(spec)
    c = np.asarray(spec.object_center, dtype=float)
    # rotate about the object center, then add the spec translation
    t = c - m.rotation @ c + m.translation
    return RigidTransform(m.rotation, t)


def _default_scenario() -> dict:
    return {
        "goal": "execute the grounded plan",
        "initial_observation": "obs0",
        "mode": "greedy",
        "max_steps": 1,
        "proposals": {"obs0": [{"action": "execute plan", "track_object": "object"}]},
        "rollouts": {"obs0|execute plan": [
            {"video_ref": "v0", "flow_ref": "f0", "final_frame_ref": "obs1"}]},
        "scores": {"v0": {"success": True, "score": 0.9, "reason": "scripted"}},
        "transitions": {"obs0|execute plan": "obs1"},
        "recoveries": {"*": {"mode": "grasp"}},
        "env_failures": {},
    }


def _hand_skeleton(tip_metric: np.ndarray) -> np.ndarray:
    """A fixed synthetic 21-landmark hand whose index fingertip is at the origin.

    Returned landmarks are offsets; add tip_metric to place the hand.
    """
    lm = np.zeros((21, 3))
    lm[WRIST] = [0.02, 0.09, -0.03]
    mcp_offsets = {1: [0.035, 0.06, -0.025], 5: [0.005, 0.045, -0.02],
                   9: [0.02, 0.05, -0.022], 13: [0.035, 0.052, -0.021],
                   17: [0.05, 0.055, -0.02]}
    for idx, off in mcp_offsets.items():
        lm[idx] = off
    # fingertips: index at the origin; the others are pulled far enough
    # sideways that their projection disks cannot reach the object mask,
    # keeping the index finger the unique contact candidate
    lm[FINGERTIPS["thumb"]] = [-0.30, 0.03, -0.04]
    lm[FINGERTIPS["index"]] = [0.0, 0.0, 0.0]
    lm[FINGERTIPS["middle"]] = [-0.30, 0.025, -0.04]
    lm[FINGERTIPS["ring"]] = [-0.30, 0.03, -0.045]
    lm[FINGERTIPS["pinky"]] = [-0.30, 0.035, -0.045]
    # remaining joints: midway fillers between MCPs and tips
    for base, tip in ((1, 4), (5, 8), (9, 12), (13, 16), (17, 20)):
        for k, frac in zip(range(base + 1, tip), (0.4, 0.7)):
            lm[k] = lm[base] + frac * (lm[tip] - lm[base])
    return lm + np.asarray(tip_metric, dtype=float)


def _square_mask(camera: CameraIntrinsics, center_uv: tuple[int, int], half: int) -> np.ndarray:
    mask = np.zeros((camera.height, camera.width), dtype=bool)
    u0, v0 = center_uv
    mask[max(0, v0 - half):v0 + half + 1, max(0, u0 - half):u0 + half + 1] = True
    return mask


def _contact_centroid(camera: CameraIntrinsics, metric_depth: np.ndarray,
                      mask: np.ndarray, tip: np.ndarray, radius: float) -> np.ndarray:
    """Centroid of plane points under the fingertip disk, as scale recovery sees it."""
    pts = camera.point_map(metric_depth)
    h, w = mask.shape
    vv, uu = np.mgrid[0:h, 0:w]
    center = camera.project(tip[None, :])[0]
    disk = (uu - center[0]) ** 2 + (vv - center[1]) ** 2 <= radius ** 2
    sel = disk & mask
    if not np.any(sel):
        raise SpecInvalid("contact_start", "fingertip disk misses the object mask")
    return pts[sel].reshape(-1, 3).mean(axis=0)


def generate_synthetic_bundle(spec: BundleSpec, output_dir, seed: int | None = None) -> Path:
    """Write a consistent scene bundle and its ground truth; returns the directory."""
    spec.validate()
    if seed is not None:
        spec.seed = int(seed)
    rng = np.random.default_rng(spec.seed)
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    camera = CameraIntrinsics.from_dict(spec.camera)
    s, t_shift = spec.depth_scale, spec.depth_shift

    # depth: static tilted plane; generated depth is the affine preimage
    plane = _plane_depth(camera)
    gen_plane = ((plane - t_shift) / s).astype(np.float32)
    gen_frames = [DepthFrame(gen_plane, None) for _ in range(spec.frames)]
    sensor = [DepthFrame(plane.astype(np.float32), None)]
    write_depth_sequence(out / "gen_depth", gen_frames)
    write_depth_sequence(out / "sensor_depth", sensor)

    # object keypoints under the planted cumulative motion; hand bundles
    # plant a deliberately fast rotation so consumers switch to hand flow
    center = np.asarray(spec.object_center, dtype=float)
    points0 = center + rng.uniform(-spec.object_extent / 2, spec.object_extent / 2,
                                   size=(spec.keypoints, 3))
    track_spec = spec
    if spec.kind == "hand" and spec.motion_angle_deg <= 45.0:
        track_spec = replace(spec, motion_angle_deg=50.0)
    motion = _motion_about_center(track_spec)
    positions = np.zeros((spec.keypoints, spec.frames, 3))
    positions[:, 0] = points0
    for f in range(1, spec.frames):
        positions[:, f] = motion.apply(positions[:, f - 1])
    pixels = np.zeros((spec.keypoints, spec.frames, 2))
    gen_z = np.zeros((spec.keypoints, spec.frames))
    for f in range(spec.frames):
        pixels[:, f] = camera.project(positions[:, f])
        gen_z[:, f] = (positions[:, f, 2] - t_shift) / s
    validity = np.ones((spec.keypoints, spec.frames), dtype=bool)
    write_tracks(out / "tracks.txt", pixels, gen_z, validity)

    manifest = {
        "kind": spec.kind,
        "seed": spec.seed,
        "camera": "camera.json",
        "gen_depth": "gen_depth",
        "sensor_depth": "sensor_depth",
        "tracks": "tracks.txt",
        "grasps": "grasps.txt",
        "scenario": "scenario.json",
        "ground_truth": "ground_truth.txt",
    }

    if spec.kind == "object":
        # grasp candidates with the palm line through the object center
        grasp_pose = RigidTransform(np.eye(3), center)
        write_grasps(out / "grasps.txt", _grasp_candidates(center))
        masks = MaskSequence(np.stack([_square_mask(camera, (int(camera.cx), int(camera.cy)), 5)
                                       for _ in range(spec.frames)]))
        manifest["masks"] = [f"masks/{n}" for n in write_mask_sequence(out / "masks", masks)]
        # analytic expectation: cumulative planted motion composed onto the grasp
        truth = [grasp_pose]
        cumulative = RigidTransform.identity()
        for _ in range(spec.frames - 1):
            cumulative = motion.compose(cumulative)
            truth.append(cumulative.compose(grasp_pose))
        write_trajectory(out / "ground_truth.txt", truth)
    else:
        manifest.update(_generate_hand_inputs(spec, out, camera, plane))

    (out / "camera.json").write_text(json.dumps(camera.to_dict(), indent=2, sort_keys=True) + "\n")
    (out / "scenario.json").write_text(json.dumps(_default_scenario(), indent=2, sort_keys=True) + "\n")
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out


def _grasp_candidates(center: np.ndarray) -> list[GraspCandidate]:
    """Two candidates; the first passes through center and wins the ranking.

    The decoy's palm line is offset far enough that no object point can
    fall inside its support band, so the first candidate wins on support
    or, failing that, on the confidence tie-break.
    """
    center = np.asarray(center, dtype=float)
    return [
        GraspCandidate(pose=RigidTransform(np.eye(3), center), confidence=0.9,
                       finger_base_left=center + [-0.02, 0.0, 0.0],
                       finger_base_right=center + [0.02, 0.0, 0.0]),
        GraspCandidate(pose=RigidTransform(np.eye(3), center + [0.0, 0.05, 0.0]),
                       confidence=0.5,
                       finger_base_left=center + [-0.02, 0.05, 0.0],
                       finger_base_right=center + [0.02, 0.05, 0.0]),
    ]


def _generate_hand_inputs(spec: BundleSpec, out: Path, camera: CameraIntrinsics,
                          plane: np.ndarray) -> dict:
    """Masks, landmarks, grasps and hand-path ground truth for a hand bundle."""
    t_start, t_end = spec.contact_start, spec.frames - 1
    mask_a = _square_mask(camera, (int(camera.cx) - 14, int(camera.cy)), 4)
    mask_b = _square_mask(camera, (int(camera.cx) + 10, int(camera.cy)), 4)
    masks = MaskSequence(np.stack(
        [mask_a if t < t_start else mask_b for t in range(spec.frames)]))
    names = [f"masks/{n}" for n in write_mask_sequence(out / "masks", masks)]

    # anchor the index fingertip on the contact centroid (fixed point of the
    # disk-overlap rule so the recovered scale equals the planted one)
    tip = camera.unproject(np.array([[camera.cx + 10.0, camera.cy]]),
                           np.array([plane[int(camera.cy), int(camera.cx) + 10]]))[0]
    for _ in range(8):
        new_tip = _contact_centroid(camera, plane, mask_b, tip, 15.0)
        if np.allclose(new_tip, tip, atol=1e-12):
            break
        tip = new_tip

    # metric tip path: contact, a small lift, then return to the anchor
    lift = np.array([0.0, -0.02, 0.0])
    tips = []
    n_int = t_end - t_start
    for k in range(n_int + 1):
        phase = math.sin(math.pi * k / n_int) if n_int else 0.0
        tips.append(tip + phase * lift)
    tips[-1] = tip  # release anchored exactly at the contact centroid

    frames = np.zeros((spec.frames, 21, 3))
    approach = tip + np.array([0.0, -0.08, 0.0])
    for t in range(spec.frames):
        if t < t_start:
            frames[t] = _hand_skeleton(approach)
        else:
            frames[t] = _hand_skeleton(tips[t - t_start])
    raw = frames / spec.hand_scale
    write_landmarks(out / "landmarks.txt", HandTrajectory(raw, np.ones(spec.frames)))

    # grasp candidates sit at the fingertip contact point
    grasp_pose = RigidTransform(np.eye(3), tip)
    write_grasps(out / "grasps.txt", _grasp_candidates(tip))

    # hand-path expectation: palm-frame poses rebased onto the grasp pose
    poses = [RigidTransform(palm_frame_rotation(frames[t]), tips[t - t_start])
             for t in range(t_start, t_end + 1)]
    offset = poses[0].inverse().compose(grasp_pose)
    truth = [p.compose(offset) for p in poses]
    write_trajectory(out / "ground_truth.txt", truth)
    return {"masks": names, "landmarks": "landmarks.txt"}


@dataclass
class Bundle:
    """A loaded bundle manifest with resolved paths."""

    directory: Path
    manifest: dict

    @staticmethod
    def load(directory) -> "Bundle":
        directory = Path(directory)
        manifest_path = directory / "manifest.json"
        if not manifest_path.exists():
            raise MissingInput(manifest_path)
        return Bundle(directory=directory, manifest=json.loads(manifest_path.read_text()))

    def path(self, key: str) -> Path:
        if key not in self.manifest:
            raise MissingInput(self.directory / key,
                               f"bundle manifest has no entry {key!r}")
        return self.directory / self.manifest[key]

    def has(self, key: str) -> bool:
        return key in self.manifest
