"""Grounding of hand-landmark trajectories into metric SE(3) trajectories.

The calibration runs in three stages: contact-interval detection from
object-mask motion, scale recovery at contact onset (grasp or
non-prehensile anchoring), and a linearly ramped drift correction near
release. Palm orientation comes from a plane fit to the wrist and MCP
joints.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .camera import CameraIntrinsics
from .errors import (
    DegenerateLandmarks,
    EmptyInitialMask,
    NoContactDetected,
    NoFingertipContact,
    NoMaskOverlap,
)
from .se3 import RigidTransform

logger = logging.getLogger(__name__)

WRIST = 0
MCP_JOINTS = (1, 5, 9, 13, 17)
MIDDLE_MCP = 9
FINGERTIPS = {"thumb": 4, "index": 8, "middle": 12, "ring": 16, "pinky": 20}


@dataclass(frozen=True)
class HandTrajectory:
    """Per-frame 21-landmark skeletons (camera frame) with confidences."""

    frames: np.ndarray  # (T, 21, 3)
    confidence: np.ndarray  # (T,)

    def __post_init__(self):
        f = np.asarray(self.frames, dtype=float)
        if f.ndim != 3 or f.shape[1:] != (21, 3):
            raise ValueError(f"frames must have shape (T, 21, 3), got {f.shape}")
        if not np.all(np.isfinite(f)):
            raise ValueError("landmark positions must be finite")
        object.__setattr__(self, "frames", f)
        c = np.asarray(self.confidence, dtype=float).reshape(-1)
        if c.shape[0] != f.shape[0]:
            raise ValueError("one confidence per frame required")
        object.__setattr__(self, "confidence", c)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


@dataclass(frozen=True)
class MaskSequence:
    """T binary masks of constant dimensions."""

    masks: np.ndarray  # (T, H, W) bool

    def __post_init__(self):
        m = np.asarray(self.masks, dtype=bool)
        if m.ndim != 3:
            raise ValueError(f"masks must have shape (T, H, W), got {m.shape}")
        object.__setattr__(self, "masks", m)

    @property
    def num_frames(self) -> int:
        return self.masks.shape[0]


@dataclass(frozen=True)
class ContactInterval:
    t_start: int
    t_end: int
    contact_finger: str
    s_start: float
    s_end: float
    t_corr: int
    translation_offset_start: np.ndarray = field(default=None)

    def __post_init__(self):
        off = self.translation_offset_start
        off = np.zeros(3) if off is None else np.asarray(off, dtype=float).reshape(3)
        object.__setattr__(self, "translation_offset_start", off)
        if not (self.t_start <= self.t_corr <= self.t_end):
            raise ValueError("require t_start <= t_corr <= t_end")
        if self.s_start <= 0 or self.s_end <= 0:
            raise ValueError("scales must be positive")


@dataclass(frozen=True)
class DriftCorrection:
    """Offset ramped linearly over the window [t_corr, t_end]."""

    offset: np.ndarray  # (3,)
    window: tuple[int, int]  # (t_corr, t_end)

    def __post_init__(self):
        object.__setattr__(self, "offset", np.asarray(self.offset, dtype=float).reshape(3))

    def ramp(self, t: int) -> float:
        t_corr, t_end = self.window
        if t < t_corr:
            return 0.0
        if t_end == t_corr:
            return 1.0 if t >= t_end else 0.0
        return min((t - t_corr) / (t_end - t_corr), 1.0)


@dataclass(frozen=True)
class Rejection:
    accepted: bool
    reason: str | None = None

    @staticmethod
    def accept() -> "Rejection":
        return Rejection(True)

    @staticmethod
    def reject(reason: str) -> "Rejection":
        return Rejection(False, reason)


def detect_contact_interval(masks: MaskSequence, epsilon: float) -> tuple[int, int]:
    """First/last frames where the appearing mask area ratio reaches epsilon.

    The ratio is |M^t \\ M^{t0}| / |M^{t0}| against the initial mask.
    """
    m0 = masks.masks[0]
    area0 = int(np.count_nonzero(m0))
    if area0 == 0:
        raise EmptyInitialMask("initial object mask is empty")
    hits = []
    for t in range(masks.num_frames):
        appearing = np.count_nonzero(masks.masks[t] & ~m0)
        if appearing / area0 >= epsilon:
            hits.append(t)
    if not hits:
        raise NoContactDetected(f"no frame reached mask-motion ratio {epsilon}")
    return hits[0], hits[-1]


def _points_under_disk(point_map: np.ndarray, point_valid: np.ndarray,
                       object_mask: np.ndarray, center_px: np.ndarray,
                       radius_px: float) -> np.ndarray:
    h, w = object_mask.shape
    v, u = np.mgrid[0:h, 0:w]
    disk = (u - center_px[0]) ** 2 + (v - center_px[1]) ** 2 <= radius_px ** 2
    sel = disk & object_mask & point_valid
    return point_map[sel]


def recover_scale_at_contact(hand_frame: np.ndarray, object_points: np.ndarray,
                             object_mask: np.ndarray, camera: CameraIntrinsics,
                             tip_radius: float = 15.0) -> tuple[float, str]:
    """Grasp-mode scale: snap each candidate fingertip to the object surface.

    A fingertip is a candidate when its projected disk of tip_radius pixels
    overlaps the object mask; its candidate scale snaps the tip to the
    centroid of the object points under that overlap. The maximum scale
    wins and names the contact finger.

    object_points is an (H, W, 3) metric point map (invalid entries
    non-finite) aligned with object_mask.
    """
    hand_frame = np.asarray(hand_frame, dtype=float)
    object_mask = np.asarray(object_mask, dtype=bool)
    point_valid = np.all(np.isfinite(object_points), axis=2)
    if not np.any(object_mask & point_valid):
        raise NoFingertipContact("object has no valid metric points under its mask")

    best = None
    for finger, idx in FINGERTIPS.items():
        tip = hand_frame[idx]
        if tip[2] <= 0:
            continue
        center = camera.project(tip[None, :])[0]
        pts = _points_under_disk(object_points, point_valid, object_mask, center, tip_radius)
        if pts.shape[0] == 0:
            continue
        centroid = pts.mean(axis=0)
        tip_norm = np.linalg.norm(tip)
        if tip_norm == 0:
            continue
        s_f = float(np.linalg.norm(centroid) / tip_norm)
        if best is None or s_f > best[0]:
            best = (s_f, finger)
    if best is None:
        raise NoFingertipContact("no fingertip disk overlaps the object mask")
    return best


def recover_scale_non_prehensile(hand_frame: np.ndarray, contact_finger: str,
                                 hand_mask: np.ndarray, object_mask: np.ndarray,
                                 object_points: np.ndarray) -> tuple[float, np.ndarray]:
    """Non-prehensile anchoring: scale plus translation offset.

    The contact centroid P_c is taken over object points under the
    hand/object mask intersection; scale = |P_c| / |P_tip| and the offset
    satisfies P_c = scale * P_tip + offset exactly.
    """
    hand_frame = np.asarray(hand_frame, dtype=float)
    inter = np.asarray(hand_mask, dtype=bool) & np.asarray(object_mask, dtype=bool)
    valid = inter & np.all(np.isfinite(object_points), axis=2)
    if not np.any(valid):
        raise NoMaskOverlap("hand and object masks do not overlap on valid points")
    p_c = object_points[valid].mean(axis=0)
    p_tip = hand_frame[FINGERTIPS[contact_finger]]
    tip_norm = np.linalg.norm(p_tip)
    if tip_norm == 0:
        raise NoMaskOverlap("contact fingertip at the camera origin")
    s = float(np.linalg.norm(p_c) / tip_norm)
    offset = p_c - s * p_tip
    return s, offset


def compute_drift_correction(tip_track: np.ndarray, s_end_tip_position: np.ndarray,
                             delta: float, t_start: int = 0) -> DriftCorrection:
    """Drift offset between release-anchored and onset-anchored fingertips.

    tip_track holds the onset-scaled fingertip for frames
    [t_start, t_end]; the correction window starts at the first frame
    whose position comes within delta of the release position. When no
    frame qualifies the window degrades to a step at t_end (logged).
    """
    tip_track = np.asarray(tip_track, dtype=float)
    t_end = t_start + tip_track.shape[0] - 1
    release = tip_track[-1]
    d_err = np.asarray(s_end_tip_position, dtype=float) - release

    dist = np.linalg.norm(tip_track - release, axis=1)
    close = np.flatnonzero(dist < delta)
    if close.size:
        t_corr = t_start + int(close[0])
    else:
        logger.warning("no frame within %.3g of release; applying step correction at t_end", delta)
        t_corr = t_end
    return DriftCorrection(offset=d_err, window=(t_corr, t_end))


def apply_drift_correction(track: np.ndarray, correction: DriftCorrection,
                           t_start: int = 0) -> np.ndarray:
    """Add the ramped offset to a [t_start, t_end] track; pre-window frames untouched."""
    track = np.asarray(track, dtype=float)
    out = track.copy()
    for k in range(track.shape[0]):
        a = correction.ramp(t_start + k)
        if a > 0:
            out[k] = track[k] + a * correction.offset
    return out


def palm_frame_rotation(landmarks: np.ndarray) -> np.ndarray:
    """Orthonormal palm basis [u, v, n] from the wrist and MCP joints.

    n is the total-least-squares plane normal, oriented toward the camera;
    u is the wrist-to-middle-MCP direction projected into the plane;
    v = n x u completes a right-handed basis (det +1).
    """
    landmarks = np.asarray(landmarks, dtype=float)
    pts = landmarks[[WRIST, *MCP_JOINTS]]
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    if s[1] <= max(s[0], 1.0) * 1e-9:
        raise DegenerateLandmarks("wrist and MCP joints are collinear")
    n = vt[2]

    # orient the normal toward the camera (at the origin); fall back to a
    # fixed convention when the wrist sits on the plane through the origin
    ref = -landmarks[WRIST]
    d = float(np.dot(n, ref))
    if abs(d) < 1e-12:
        d = float(np.dot(n, np.array([0.0, 0.0, -1.0])))
    if abs(d) < 1e-12:
        nz = np.flatnonzero(np.abs(n) > 1e-12)
        d = n[nz[0]] if nz.size else 1.0
    if d < 0:
        n = -n

    raw_u = landmarks[MIDDLE_MCP] - landmarks[WRIST]
    u = raw_u - np.dot(raw_u, n) * n
    norm_u = np.linalg.norm(u)
    if norm_u < 1e-12:
        raise DegenerateLandmarks("wrist-to-middle-MCP direction is normal to the palm plane")
    u = u / norm_u
    v = np.cross(n, u)
    return np.stack([u, v, n], axis=1)


def hand_se3_trajectory(hand: HandTrajectory, interval: ContactInterval,
                        correction: DriftCorrection) -> list[RigidTransform]:
    """Calibrated per-frame hand pose over the contact interval.

    Translation is the contact fingertip under onset scale, non-prehensile
    offset and drift ramp; rotation is the palm frame.
    """
    tip_idx = FINGERTIPS[interval.contact_finger]
    poses = []
    for t in range(interval.t_start, interval.t_end + 1):
        raw = hand.frames[t]
        tip = raw[tip_idx] * interval.s_start + interval.translation_offset_start
        tip = tip + correction.ramp(t) * correction.offset
        poses.append(RigidTransform(palm_frame_rotation(raw), tip))
    return poses


def calibrated_tip_track(hand: HandTrajectory, interval: ContactInterval,
                         scale: float | None = None) -> np.ndarray:
    """Fingertip positions over [t_start, t_end] under a given scale."""
    s = interval.s_start if scale is None else scale
    tip_idx = FINGERTIPS[interval.contact_finger]
    track = hand.frames[interval.t_start:interval.t_end + 1, tip_idx] * s
    return track + interval.translation_offset_start


def reject_hand_flow(hand: HandTrajectory, image_bounds: tuple[int, int],
                     camera: CameraIntrinsics, interval: ContactInterval,
                     calibration_error: Exception | None = None,
                     max_outside_fraction: float = 0.30) -> Rejection:
    """Accept or reject a grounded hand flow.

    Rejects with CalibrationFailure when scale recovery errored, and with
    OutOfFrame when in any interaction frame more than max_outside_fraction
    of the projected hand points fall outside the image.
    """
    if calibration_error is not None:
        return Rejection.reject("CalibrationFailure")
    w, h = image_bounds
    for t in range(interval.t_start, interval.t_end + 1):
        px = camera.project(hand.frames[t])
        outside = (px[:, 0] < 0) | (px[:, 0] >= w) | (px[:, 1] < 0) | (px[:, 1] >= h)
        if np.count_nonzero(outside) / px.shape[0] > max_outside_fraction:
            return Rejection.reject("OutOfFrame")
    return Rejection.accept()
