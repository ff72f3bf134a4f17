import numpy as np
import pytest

from flowground.errors import NoValidGrasp
from flowground.grasp import (
    GraspCandidate,
    SceneCloud,
    filter_by_collision,
    filter_by_contact,
    palm_line_distance,
    rank_grasps,
    segment_point_distances,
    support_fraction,
)
from flowground.se3 import RigidTransform


def candidate(center, confidence=0.8, half=0.02, dy=0.0):
    c = np.asarray(center, dtype=float)
    return GraspCandidate(pose=RigidTransform(np.eye(3), c),
                          confidence=confidence,
                          finger_base_left=c + [-half, dy, 0],
                          finger_base_right=c + [half, dy, 0])


EMPTY_SCENE = SceneCloud(np.zeros((0, 3)), np.zeros(0, dtype=int))


class TestSegmentDistance:
    def test_interior_projection(self):
        d = segment_point_distances(np.array([0.0, 0, 0]), np.array([1.0, 0, 0]),
                                    np.array([[0.5, 0.3, 0]]))
        assert abs(d[0] - 0.3) < 1e-12

    def test_endpoint_clamp_vs_dense_oracle(self):
        rng = np.random.default_rng(0)
        a, b = np.array([0.0, 0, 0]), np.array([0.3, 0.1, -0.2])
        pts = rng.normal(size=(50, 3))
        d = segment_point_distances(a, b, pts)
        ts = np.linspace(0, 1, 20001)
        samples = a + ts[:, None] * (b - a)
        for i, p in enumerate(pts):
            oracle = np.linalg.norm(samples - p, axis=1).min()
            assert abs(d[i] - oracle) < 1e-6

    def test_degenerate_segment(self):
        d = segment_point_distances(np.zeros(3), np.zeros(3),
                                    np.array([[0.0, 0, 1.0]]))
        assert abs(d[0] - 1.0) < 1e-12


class TestContactFilter:
    def test_through_contact_point_kept(self):
        c = candidate([0, 0, 0.5])
        assert filter_by_contact([c], np.array([[0, 0, 0.5]])) == [c]

    def test_too_far_discarded(self):
        c = candidate([0, 0, 0.5])
        kept = filter_by_contact([c], np.array([[0, 0.06, 0.5]]), max_dist=0.05)
        assert kept == []

    def test_boundary_inclusive(self):
        c = candidate([0, 0, 0.5])
        kept = filter_by_contact([c], np.array([[0, 0.05, 0.5]]), max_dist=0.05)
        assert kept == [c]


class TestCollisionFilter:
    def test_empty_scene_all_kept(self):
        cands = [candidate([0, 0, 0.5]), candidate([0.1, 0, 0.5])]
        assert filter_by_collision(cands, EMPTY_SCENE) == cands

    def test_close_obstacle_discarded(self):
        c = candidate([0, 0, 0.5])
        # 0.5 mm from the probe point at pose + (-0.04, 0, 0)
        obstacle = np.array([[-0.04, 0.0005, 0.5]])
        scene = SceneCloud(obstacle, np.array([1]))
        assert filter_by_collision([c], scene, clearance=0.001) == []

    def test_distant_obstacle_kept(self):
        c = candidate([0, 0, 0.5])
        obstacle = np.array([[-0.04, 0.002, 0.5]])
        scene = SceneCloud(obstacle, np.array([1]))
        assert filter_by_collision([c], scene, clearance=0.001) == [c]

    def test_target_points_ignored(self):
        c = candidate([0, 0, 0.5])
        scene = SceneCloud(np.array([[-0.04, 0.0, 0.5]]), np.array([0]))
        assert filter_by_collision([c], scene, clearance=0.001) == [c]


class TestSupport:
    def test_all_points_on_line(self):
        c = candidate([0, 0, 0.5])
        pts = np.array([[x, 0, 0.5] for x in np.linspace(-0.02, 0.02, 7)])
        assert support_fraction(c, pts) == 1.0

    def test_half_split(self):
        c = candidate([0, 0, 0.5])
        near = [[0.0, 0.004, 0.5]] * 5
        far = [[0.0, 0.1, 0.5]] * 5
        assert support_fraction(c, np.array(near + far), band=0.005) == 0.5


class TestRanking:
    def test_single_survivor_score(self):
        c = candidate([0, 0, 0.5], confidence=0.8)
        pts = np.array([[0.0, 0.004, 0.5]] * 5 + [[0.0, 0.1, 0.5]] * 5)
        ranked = rank_grasps([c], pts, np.array([[0, 0, 0.5]]), EMPTY_SCENE)
        assert abs(ranked[0].total - 0.4) < 1e-12

    def test_no_survivors(self):
        c = candidate([0, 0, 0.5])
        with pytest.raises(NoValidGrasp):
            rank_grasps([c], np.array([[0, 0, 0.5]]),
                        np.array([[0, 0.2, 0.5]]), EMPTY_SCENE)

    def test_total_ordering(self):
        a = candidate([0, 0, 0.5], confidence=0.9)
        b = candidate([0, 0, 0.5], confidence=0.5, dy=0.008)
        pts = np.array(
            [[0.0, 0.0, 0.5]] * 1 +            # on a's line only
            [[0.0, 0.004, 0.5]] * 2 +          # within band of both
            [[0.0, 0.05, 0.5]] * 2)            # near neither
        sa = support_fraction(a, pts)
        sb = support_fraction(b, pts)
        assert (sa, sb) == (0.6, 0.4)  # layout sanity
        ranked = rank_grasps([a, b], pts, np.array([[0, 0, 0.5]]), EMPTY_SCENE)
        assert [r.index for r in ranked] == [0, 1]
        # high confidence with zero support loses to the reverse
        pts2 = np.array([[0.0, 0.0, 0.5]] * 1 + [[0.0, 0.004, 0.5]] * 2
                        + [[0.0, 0.05, 0.5]] * 2)
        ranked2 = rank_grasps([candidate([0, 0, 0.5], confidence=0.9, dy=0.03),
                               candidate([0, 0, 0.5], confidence=0.5)],
                              pts2, np.array([[0, 0, 0.5]]), EMPTY_SCENE)
        # candidate 0 has zero support, candidate 1 covers everything near
        assert ranked2[0].index == 1

    def test_tie_breaks(self):
        a = candidate([0, 0, 0.5], confidence=0.5)
        b = candidate([0, 0, 0.5], confidence=0.9)
        pts = np.array([[0.0, 0.1, 0.5]] * 4)  # zero support for both
        ranked = rank_grasps([a, b], pts, np.array([[0, 0, 0.5]]), EMPTY_SCENE)
        assert [r.index for r in ranked] == [1, 0]  # higher confidence first
        c = candidate([0, 0, 0.5], confidence=0.9)
        ranked = rank_grasps([b, c], pts, np.array([[0, 0, 0.5]]), EMPTY_SCENE)
        assert [r.index for r in ranked] == [0, 1]  # then lower index

    def test_filter_order_independent(self):
        rng = np.random.default_rng(1)
        cands = [candidate(rng.normal(size=3) * 0.05 + [0, 0, 0.5],
                           confidence=rng.uniform(0.1, 1.0))
                 for _ in range(10)]
        contact = rng.normal(size=(5, 3)) * 0.05 + [0, 0, 0.5]
        scene = SceneCloud(rng.normal(size=(30, 3)) * 0.05 + [0, 0, 0.5],
                           rng.integers(0, 3, size=30))
        ab = filter_by_collision(filter_by_contact(cands, contact), scene)
        ba = filter_by_contact(filter_by_collision(cands, scene), contact)
        assert {id(c) for c in ab} == {id(c) for c in ba}

    def test_identical_endpoints_rejected(self):
        with pytest.raises(ValueError):
            GraspCandidate(pose=RigidTransform.identity(), confidence=0.5,
                           finger_base_left=np.zeros(3),
                           finger_base_right=np.zeros(3))
