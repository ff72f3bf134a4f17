"""SE(3) types and the rigid-motion solver for keypoint flow.

Rotations are 3x3 orthonormal matrices with det +1; translations are in
meters. All operations are pure functions on immutable arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateGeometry,
    InsufficientKeypoints,
    NotARotation,
    SizeMismatch,
)

ORTHO_TOL = 1e-9
SMALL_ANGLE = 1e-12


def _check_rotation(r: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if r.shape != (3, 3):
        raise NotARotation(f"expected 3x3 matrix, got shape {r.shape}")
    if not np.allclose(r.T @ r, np.eye(3), atol=tol):
        raise NotARotation("matrix is not orthonormal")
    if np.linalg.det(r) < 0:
        raise NotARotation("matrix has determinant -1 (reflection)")
    return r


@dataclass(frozen=True)
class RigidTransform:
    """A rigid transform: x -> rotation @ x + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float).reshape(3))

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return points @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Returns self * other (apply `other` first, then `self`)."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def almost_equal(self, other: "RigidTransform", tol: float = 1e-9) -> bool:
        return bool(
            np.allclose(self.rotation, other.rotation, atol=tol)
            and np.allclose(self.translation, other.translation, atol=tol)
        )

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m


@dataclass(frozen=True)
class AxisAngle:
    """Axis-angle rotation: angle in [0, pi], unit axis."""

    angle: float
    axis: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "axis", np.asarray(self.axis, dtype=float).reshape(3))

    def to_matrix(self) -> np.ndarray:
        k = self.axis
        kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
        return np.eye(3) + np.sin(self.angle) * kx + (1 - np.cos(self.angle)) * (kx @ kx)


@dataclass(frozen=True)
class FlowField:
    """K keypoints tracked over T frames in 3D, with per-entry validity."""

    positions: np.ndarray  # (K, T, 3)
    validity: np.ndarray = field(default=None)  # (K, T) bool

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 3 or pos.shape[2] != 3:
            raise ValueError(f"positions must have shape (K, T, 3), got {pos.shape}")
        object.__setattr__(self, "positions", pos)
        if self.validity is None:
            valid = np.ones(pos.shape[:2], dtype=bool)
        else:
            valid = np.asarray(self.validity, dtype=bool)
            if valid.shape != pos.shape[:2]:
                raise ValueError("validity shape must match (K, T)")
        object.__setattr__(self, "validity", valid)
        if not np.all(np.isfinite(pos[valid])):
            raise ValueError("valid flow entries must be finite")

    @property
    def num_keypoints(self) -> int:
        return self.positions.shape[0]

    @property
    def num_frames(self) -> int:
        return self.positions.shape[1]


def kabsch_rigid_transform(src: np.ndarray, dst: np.ndarray) -> RigidTransform:
    """Least-squares rigid transform mapping src onto dst.

    Rotation minimizes sum ||R (src_i - c_src) - (dst_i - c_dst)||^2 over
    SO(3); translation is c_dst - R c_src. Reflections from the SVD are
    corrected by flipping the sign of the last singular vector.
    """
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    if src.shape != dst.shape:
        raise SizeMismatch(f"point sets differ: {src.shape} vs {dst.shape}")
    if src.ndim != 2 or src.shape[1] != 3 or src.shape[0] < 3:
        raise SizeMismatch("need at least 3 points of dimension 3")

    c_src = src.mean(axis=0)
    c_dst = dst.mean(axis=0)
    h = (src - c_src).T @ (dst - c_dst)

    u, s, vt = np.linalg.svd(h)
    # rank < 2 leaves the rotation underdetermined (collinear/coincident points)
    if np.sum(s > max(s[0], 1.0) * 1e-12) < 2:
        raise DegenerateGeometry("cross-covariance rank < 2; points are collinear")

    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    t = c_dst - r @ c_src
    return RigidTransform(r, t)


def flow_to_motion(flow: FlowField) -> list[RigidTransform]:
    """Per-frame rigid motion of a flow field: T-1 adjacent-frame transforms.

    For each frame pair (t-1, t) only keypoints valid in both frames
    participate; fewer than 3 shared keypoints is a hard error.
    """
    motions = []
    pos, valid = flow.positions, flow.validity
    for t in range(1, flow.num_frames):
        both = valid[:, t - 1] & valid[:, t]
        if np.count_nonzero(both) < 3:
            raise InsufficientKeypoints(t)
        motions.append(kabsch_rigid_transform(pos[both, t - 1], pos[both, t]))
    return motions


def to_axis_angle(r: np.ndarray) -> AxisAngle:
    """Convert a rotation matrix to axis-angle with angle in [0, pi]."""
    r = _check_rotation(r)
    cos_angle = np.clip((np.trace(r) - 1.0) / 2.0, -1.0, 1.0)
    angle = float(np.arccos(cos_angle))
    if angle < SMALL_ANGLE:
        return AxisAngle(0.0, np.array([0.0, 0.0, 1.0]))
    if np.pi - angle < 1e-6:
        # near pi: extract axis from R + I, whose columns are parallel to the axis
        m = r + np.eye(3)
        col = m[:, int(np.argmax(np.linalg.norm(m, axis=0)))]
        axis = col / np.linalg.norm(col)
        # resolve sign so that sin(angle) * axis matches the skew part;
        # at exactly pi the skew vanishes and either sign is valid, so fall
        # back to a deterministic lexicographic convention
        skew = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
        s_dot = np.dot(axis, skew)
        if abs(s_dot) > 1e-14:
            if s_dot < 0:
                axis = -axis
        else:
            for c in axis:
                if abs(c) > 1e-12:
                    if c < 0:
                        axis = -axis
                    break
        return AxisAngle(angle, axis)
    skew = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    axis = skew / (2.0 * np.sin(angle))
    axis = axis / np.linalg.norm(axis)
    return AxisAngle(angle, axis)


def rotation_geodesic_error(r1: np.ndarray, r2: np.ndarray) -> float:
    """Angle of the relative rotation between two rotation matrices.

    Uses ||R1 - R2||_F = 2*sqrt(2)*sin(theta/2), which stays accurate for
    near-identical rotations where the acos-of-trace form loses half the
    significant digits.
    """
    diff = np.linalg.norm(np.asarray(r1, dtype=float) - np.asarray(r2, dtype=float))
    return float(2.0 * np.arcsin(np.clip(diff / (2.0 * math.sqrt(2.0)), -1.0, 1.0)))
