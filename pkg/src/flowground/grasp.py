"""Filtering and scoring of externally supplied grasp candidates.

The cascade: contact-proximity filter on the palm line, collision filter
against the non-target scene cloud, then ranking by confidence times
palm-line support fraction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import NoValidGrasp
from .se3 import RigidTransform

# two-finger probe layout (gripper frame, meters): finger tips, finger
# bases and palm center of a parallel-jaw gripper with ~8 cm opening
DEFAULT_PROBE_POINTS = np.array([
    [-0.04, 0.0, 0.00], [0.04, 0.0, 0.00],
    [-0.04, 0.0, -0.04], [0.04, 0.0, -0.04],
    [0.0, 0.0, -0.06],
])


@dataclass(frozen=True)
class GraspCandidate:
    """A candidate gripper pose with confidence and palm-line endpoints."""

    pose: RigidTransform
    confidence: float
    finger_base_left: np.ndarray  # robot base frame, meters
    finger_base_right: np.ndarray

    def __post_init__(self):
        l = np.asarray(self.finger_base_left, dtype=float).reshape(3)
        r = np.asarray(self.finger_base_right, dtype=float).reshape(3)
        if np.allclose(l, r):
            raise ValueError("palm-line endpoints must be distinct")
        object.__setattr__(self, "finger_base_left", l)
        object.__setattr__(self, "finger_base_right", r)


@dataclass(frozen=True)
class SceneCloud:
    """Labeled scene points; label 0 marks the target object."""

    points: np.ndarray  # (N, 3)
    object_labels: np.ndarray  # (N,) int

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(p)):
            raise ValueError("scene points must be finite")
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "object_labels",
                           np.asarray(self.object_labels, dtype=int).reshape(-1))

    def non_target_points(self) -> np.ndarray:
        return self.points[self.object_labels != 0]


def segment_point_distances(a: np.ndarray, b: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Distance from each point to the segment [a, b]."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    ab = b - a
    denom = float(np.dot(ab, ab))
    if denom == 0:
        return np.linalg.norm(points - a, axis=1)
    t = np.clip((points - a) @ ab / denom, 0.0, 1.0)
    closest = a + t[:, None] * ab
    return np.linalg.norm(points - closest, axis=1)


def palm_line_distance(candidate: GraspCandidate, points: np.ndarray) -> float:
    """Minimum distance between the candidate's palm line and any point."""
    return float(segment_point_distances(
        candidate.finger_base_left, candidate.finger_base_right, points).min())


def filter_by_contact(candidates: list[GraspCandidate], contact_points: np.ndarray,
                      max_dist: float = 0.05) -> list[GraspCandidate]:
    """Keep candidates whose palm line passes within max_dist of a contact point."""
    contact_points = np.atleast_2d(np.asarray(contact_points, dtype=float))
    return [c for c in candidates if palm_line_distance(c, contact_points) <= max_dist]


def filter_by_collision(candidates: list[GraspCandidate], scene: SceneCloud,
                        clearance: float = 0.001,
                        probe_points: np.ndarray = None) -> list[GraspCandidate]:
    """Discard candidates whose transformed probe points graze the non-target scene."""
    obstacles = scene.non_target_points()
    if obstacles.shape[0] == 0:
        return list(candidates)
    probes = DEFAULT_PROBE_POINTS if probe_points is None else np.asarray(probe_points, dtype=float)
    tree = cKDTree(obstacles)
    kept = []
    for c in candidates:
        world = c.pose.apply(probes)
        d, _ = tree.query(world)
        if np.min(d) >= clearance:
            kept.append(c)
    return kept


def support_fraction(candidate: GraspCandidate, object_points: np.ndarray,
                     band: float = 0.005) -> float:
    """Fraction of object points within `band` of the palm-line segment."""
    d = segment_point_distances(candidate.finger_base_left,
                                candidate.finger_base_right, object_points)
    return float(np.count_nonzero(d <= band) / d.shape[0])


@dataclass(frozen=True)
class ScoredGrasp:
    candidate: GraspCandidate
    index: int  # original candidate index
    support: float
    total: float


def rank_grasps(candidates: list[GraspCandidate], object_points: np.ndarray,
                contact_points: np.ndarray, scene: SceneCloud,
                max_dist: float = 0.05, clearance: float = 0.001,
                band: float = 0.005,
                probe_points: np.ndarray = None) -> list[ScoredGrasp]:
    """Full cascade: contact filter, collision filter, score and sort.

    Sorted descending by confidence * support; ties broken by higher
    confidence, then lower original index.
    """
    indexed = list(enumerate(candidates))
    contact_ok = set(id(c) for c in filter_by_contact(candidates, contact_points, max_dist))
    survivors = [(i, c) for i, c in indexed if id(c) in contact_ok]
    collision_ok = set(id(c) for c in filter_by_collision(
        [c for _, c in survivors], scene, clearance, probe_points))
    survivors = [(i, c) for i, c in survivors if id(c) in collision_ok]
    if not survivors:
        raise NoValidGrasp("no candidate survived the filter cascade")

    scored = []
    for i, c in survivors:
        s_support = support_fraction(c, object_points, band)
        scored.append(ScoredGrasp(candidate=c, index=i, support=s_support,
                                  total=c.confidence * s_support))
    scored.sort(key=lambda s: (-s.total, -s.candidate.confidence, s.index))
    return scored
