import numpy as np
import pytest

from flowground.depth import DepthFrame
from flowground.errors import MissingInput
from flowground.fileio import (
    read_depth_sequence,
    read_grasps,
    read_landmarks,
    read_mask_pgm,
    read_mask_sequence,
    read_tracks,
    read_trajectory,
    write_depth_sequence,
    write_grasps,
    write_landmarks,
    write_mask_pgm,
    write_mask_sequence,
    write_tracks,
    write_trajectory,
)
from flowground.grasp import GraspCandidate
from flowground.hand import HandTrajectory, MaskSequence
from flowground.se3 import RigidTransform

from conftest import random_rotation


class TestDepthIO:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        frames = [DepthFrame.from_values(rng.uniform(0.2, 2.0, size=(12, 16)))
                  for _ in range(3)]
        write_depth_sequence(tmp_path / "depth", frames)
        out = read_depth_sequence(tmp_path / "depth")
        assert len(out) == 3
        for a, b in zip(frames, out):
            assert np.array_equal(a.values, b.values)
            assert np.array_equal(a.valid, b.valid)

    def test_invalid_pixels_roundtrip_as_nan(self, tmp_path):
        values = np.full((8, 8), 1.0)
        values[2, 3] = np.nan
        values[4, 4] = -1.0  # nonpositive -> invalid
        frames = [DepthFrame.from_values(values)]
        write_depth_sequence(tmp_path / "depth", frames)
        out = read_depth_sequence(tmp_path / "depth")[0]
        assert not out.valid[2, 3] and not out.valid[4, 4]
        assert out.valid.sum() == 62

    def test_missing(self, tmp_path):
        with pytest.raises(MissingInput):
            read_depth_sequence(tmp_path / "nope")

    def test_payload_size_mismatch(self, tmp_path):
        frames = [DepthFrame.from_values(np.ones((4, 4)))]
        write_depth_sequence(tmp_path / "depth", frames)
        (tmp_path / "depth.meta").write_text("width 4\nheight 4\nframes 2\n")
        with pytest.raises(MissingInput):
            read_depth_sequence(tmp_path / "depth")


class TestMaskIO:
    def test_pgm_roundtrip(self, tmp_path):
        rng = np.random.default_rng(1)
        mask = rng.random((10, 14)) > 0.5
        write_mask_pgm(tmp_path / "m.pgm", mask)
        assert np.array_equal(read_mask_pgm(tmp_path / "m.pgm"), mask)

    def test_pgm_with_comment(self, tmp_path):
        raw = b"P5\n# a comment line\n2 2\n255\n" + bytes([255, 0, 0, 255])
        (tmp_path / "m.pgm").write_bytes(raw)
        mask = read_mask_pgm(tmp_path / "m.pgm")
        assert np.array_equal(mask, [[True, False], [False, True]])

    def test_not_a_pgm(self, tmp_path):
        (tmp_path / "m.pgm").write_bytes(b"P6\n2 2\n255\n" + bytes(12))
        with pytest.raises(ValueError):
            read_mask_pgm(tmp_path / "m.pgm")

    def test_sequence_roundtrip(self, tmp_path):
        rng = np.random.default_rng(2)
        masks = MaskSequence(rng.random((4, 6, 8)) > 0.5)
        names = write_mask_sequence(tmp_path / "masks", masks)
        assert names == [f"mask_{t:04d}.pgm" for t in range(4)]
        out = read_mask_sequence(tmp_path / "masks", names)
        assert np.array_equal(out.masks, masks.masks)

    def test_missing(self, tmp_path):
        with pytest.raises(MissingInput):
            read_mask_pgm(tmp_path / "nope.pgm")


class TestLandmarkIO:
    def test_roundtrip_exact(self, tmp_path):
        rng = np.random.default_rng(3)
        hand = HandTrajectory(rng.normal(size=(5, 21, 3)), rng.uniform(size=5))
        write_landmarks(tmp_path / "lm.txt", hand)
        out = read_landmarks(tmp_path / "lm.txt")
        assert np.array_equal(out.frames, hand.frames)
        assert np.array_equal(out.confidence, hand.confidence)

    def test_bad_header(self, tmp_path):
        (tmp_path / "lm.txt").write_text("something else\n")
        with pytest.raises(ValueError):
            read_landmarks(tmp_path / "lm.txt")

    def test_missing(self, tmp_path):
        with pytest.raises(MissingInput):
            read_landmarks(tmp_path / "nope.txt")


class TestTrackIO:
    def test_roundtrip_exact(self, tmp_path):
        rng = np.random.default_rng(4)
        pixels = rng.uniform(0, 64, size=(3, 5, 2))
        depth = rng.uniform(0.2, 2.0, size=(3, 5))
        valid = rng.random((3, 5)) > 0.2
        write_tracks(tmp_path / "tracks.txt", pixels, depth, valid)
        p, d, v = read_tracks(tmp_path / "tracks.txt")
        assert np.array_equal(p, pixels)
        assert np.array_equal(d, depth)
        assert np.array_equal(v, valid)

    def test_line_count(self, tmp_path):
        write_tracks(tmp_path / "tracks.txt", np.zeros((2, 3, 2)),
                     np.ones((2, 3)), np.ones((2, 3), dtype=bool))
        lines = (tmp_path / "tracks.txt").read_text().splitlines()
        assert len(lines) == 3 + 2 * 3

    def test_missing(self, tmp_path):
        with pytest.raises(MissingInput):
            read_tracks(tmp_path / "nope.txt")


class TestGraspIO:
    def test_roundtrip_exact(self, tmp_path):
        rng = np.random.default_rng(5)
        cands = [GraspCandidate(
            pose=RigidTransform(random_rotation(rng), rng.normal(size=3)),
            confidence=float(rng.uniform(0.1, 1.0)),
            finger_base_left=rng.normal(size=3),
            finger_base_right=rng.normal(size=3)) for _ in range(3)]
        write_grasps(tmp_path / "grasps.txt", cands)
        out = read_grasps(tmp_path / "grasps.txt")
        assert len(out) == 3
        for a, b in zip(cands, out):
            assert np.array_equal(a.pose.rotation, b.pose.rotation)
            assert np.array_equal(a.pose.translation, b.pose.translation)
            assert a.confidence == b.confidence
            assert np.array_equal(a.finger_base_left, b.finger_base_left)
            assert np.array_equal(a.finger_base_right, b.finger_base_right)

    def test_missing(self, tmp_path):
        with pytest.raises(MissingInput):
            read_grasps(tmp_path / "nope.txt")


class TestTrajectoryIO:
    def test_identity_pose_text(self, tmp_path):
        write_trajectory(tmp_path / "t.txt", [RigidTransform.identity()])
        assert (tmp_path / "t.txt").read_text() == \
            "flowground-trajectory 1 poses 1\n0 1 0 0 0 1 0 0 0 1 0 0 0\n"

    def test_roundtrip_tolerance(self, tmp_path):
        rng = np.random.default_rng(6)
        poses = [RigidTransform(random_rotation(rng), rng.normal(size=3))
                 for _ in range(4)]
        write_trajectory(tmp_path / "t.txt", poses)
        out = read_trajectory(tmp_path / "t.txt")
        for a, b in zip(poses, out):
            assert np.allclose(a.rotation, b.rotation, atol=1e-8)
            assert np.allclose(a.translation, b.translation, atol=1e-8)

    def test_line_count(self, tmp_path):
        write_trajectory(tmp_path / "t.txt", [RigidTransform.identity()] * 5)
        assert len((tmp_path / "t.txt").read_text().splitlines()) == 6

    def test_bad_header(self, tmp_path):
        (tmp_path / "t.txt").write_text("garbage\n")
        with pytest.raises(ValueError):
            read_trajectory(tmp_path / "t.txt")

    def test_missing(self, tmp_path):
        with pytest.raises(MissingInput):
            read_trajectory(tmp_path / "nope.txt")
