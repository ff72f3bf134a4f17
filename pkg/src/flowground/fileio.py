"""On-disk formats for depth, masks, landmarks, tracks, grasps, trajectories.

Depth: little-endian float32, row-major, all frames concatenated, with a
sidecar text header naming width, height and frame count; NaN encodes
invalid. Masks: one binary (P5) PGM per frame, 255 = object. The text
formats are whitespace-delimited with explicit headers.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .depth import DepthFrame
from .errors import MissingInput
from .grasp import GraspCandidate
from .hand import HandTrajectory, MaskSequence
from .se3 import RigidTransform


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


# depth sequences ------------------------------------------------------------

def write_depth_sequence(base_path, frames: list[DepthFrame]) -> None:
    base = Path(base_path)
    h, w = frames[0].values.shape
    data = np.empty((len(frames), h, w), dtype="<f4")
    for i, f in enumerate(frames):
        values = f.values.astype("<f4", copy=True)
        values[~f.valid] = np.nan
        data[i] = values
    base.with_suffix(".f32").write_bytes(data.tobytes())
    base.with_suffix(".meta").write_text(
        f"width {w}\nheight {h}\nframes {len(frames)}\n")


def read_depth_sequence(base_path) -> list[DepthFrame]:
    base = Path(base_path)
    meta_path = base.with_suffix(".meta")
    data_path = base.with_suffix(".f32")
    if not meta_path.exists() or not data_path.exists():
        raise MissingInput(data_path)
    meta = dict(line.split() for line in meta_path.read_text().splitlines() if line)
    w, h, n = int(meta["width"]), int(meta["height"]), int(meta["frames"])
    raw = np.frombuffer(data_path.read_bytes(), dtype="<f4")
    if raw.size != n * h * w:
        raise MissingInput(data_path, f"depth payload size mismatch in {data_path}")
    frames = raw.reshape(n, h, w)
    return [DepthFrame(f, np.isfinite(f) & (f > 0)) for f in frames]


# masks ----------------------------------------------------------------------

def write_mask_pgm(path, mask: np.ndarray) -> None:
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + (mask.astype(np.uint8) * 255).tobytes())


def read_mask_pgm(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise MissingInput(path)
    raw = path.read_bytes()
    # parse the three whitespace-separated header tokens after the magic
    if not raw.startswith(b"P5"):
        raise ValueError(f"{path} is not a binary PGM")
    tokens, pos = [], 2
    while len(tokens) < 3:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    pos += 1  # single whitespace after maxval
    w, h = int(tokens[0]), int(tokens[1])
    data = np.frombuffer(raw, dtype=np.uint8, count=w * h, offset=pos)
    return (data.reshape(h, w) > 127)


def write_mask_sequence(directory, masks: MaskSequence) -> list[str]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = []
    for t in range(masks.num_frames):
        name = f"mask_{t:04d}.pgm"
        write_mask_pgm(directory / name, masks.masks[t])
        names.append(name)
    return names


def read_mask_sequence(directory, names: list[str]) -> MaskSequence:
    frames = [read_mask_pgm(Path(directory) / n) for n in names]
    return MaskSequence(np.stack(frames))


# hand landmarks -------------------------------------------------------------

def write_landmarks(path, hand: HandTrajectory) -> None:
    lines = ["flowground-landmarks 1", f"frames {hand.num_frames}"]
    for t in range(hand.num_frames):
        coords = " ".join(_fmt(v) for v in hand.frames[t].reshape(-1))
        lines.append(f"{t} {coords} {_fmt(hand.confidence[t])}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_landmarks(path) -> HandTrajectory:
    path = Path(path)
    if not path.exists():
        raise MissingInput(path)
    lines = [l for l in path.read_text().splitlines() if l.strip()]
    if not lines or not lines[0].startswith("flowground-landmarks"):
        raise ValueError(f"{path} is not a landmark file")
    n = int(lines[1].split()[1])
    frames = np.zeros((n, 21, 3))
    conf = np.zeros(n)
    for line in lines[2:]:
        parts = line.split()
        t = int(parts[0])
        values = np.array([float(v) for v in parts[1:]])
        frames[t] = values[:63].reshape(21, 3)
        conf[t] = values[63]
    return HandTrajectory(frames, conf)


# keypoint tracks ------------------------------------------------------------

def write_tracks(path, pixels: np.ndarray, gen_depth: np.ndarray,
                 validity: np.ndarray) -> None:
    """Tracks: per keypoint/frame pixel coordinates plus generated depth.

    pixels: (K, T, 2); gen_depth: (K, T); validity: (K, T).
    """
    k, t = gen_depth.shape
    lines = ["flowground-tracks 1", f"keypoints {k}", f"frames {t}"]
    for i in range(k):
        for j in range(t):
            lines.append(f"{i} {j} {_fmt(pixels[i, j, 0])} {_fmt(pixels[i, j, 1])} "
                         f"{_fmt(gen_depth[i, j])} {int(validity[i, j])}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_tracks(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise MissingInput(path)
    lines = [l for l in path.read_text().splitlines() if l.strip()]
    if not lines or not lines[0].startswith("flowground-tracks"):
        raise ValueError(f"{path} is not a track file")
    k = int(lines[1].split()[1])
    t = int(lines[2].split()[1])
    pixels = np.zeros((k, t, 2))
    depth = np.zeros((k, t))
    valid = np.zeros((k, t), dtype=bool)
    for line in lines[3:]:
        parts = line.split()
        i, j = int(parts[0]), int(parts[1])
        pixels[i, j] = [float(parts[2]), float(parts[3])]
        depth[i, j] = float(parts[4])
        valid[i, j] = parts[5] == "1"
    return pixels, depth, valid


# grasp candidates -----------------------------------------------------------

def write_grasps(path, candidates: list[GraspCandidate]) -> None:
    lines = ["flowground-grasps 1", f"count {len(candidates)}"]
    for c in candidates:
        values = list(c.pose.rotation.reshape(-1)) + list(c.pose.translation)
        values.append(c.confidence)
        values += list(c.finger_base_left) + list(c.finger_base_right)
        lines.append(" ".join(_fmt(v) for v in values))
    Path(path).write_text("\n".join(lines) + "\n")


def read_grasps(path) -> list[GraspCandidate]:
    path = Path(path)
    if not path.exists():
        raise MissingInput(path)
    lines = [l for l in path.read_text().splitlines() if l.strip()]
    if not lines or not lines[0].startswith("flowground-grasps"):
        raise ValueError(f"{path} is not a grasp candidate file")
    count = int(lines[1].split()[1])
    candidates = []
    for line in lines[2:2 + count]:
        v = [float(x) for x in line.split()]
        candidates.append(GraspCandidate(
            pose=RigidTransform(np.array(v[:9]).reshape(3, 3), np.array(v[9:12])),
            confidence=v[12],
            finger_base_left=np.array(v[13:16]),
            finger_base_right=np.array(v[16:19])))
    return candidates


# trajectories ---------------------------------------------------------------

def write_trajectory(path, poses: list[RigidTransform]) -> None:
    """One pose per line: frame index, 9 row-major rotation values and 3
    translation values at 9 significant digits."""
    lines = [f"flowground-trajectory 1 poses {len(poses)}"]
    for i, p in enumerate(poses):
        values = list(p.rotation.reshape(-1)) + list(p.translation)
        lines.append(f"{i} " + " ".join(format(float(v), ".9g") for v in values))
    Path(path).write_text("\n".join(lines) + "\n")


def read_trajectory(path) -> list[RigidTransform]:
    path = Path(path)
    if not path.exists():
        raise MissingInput(path)
    lines = [l for l in path.read_text().splitlines() if l.strip()]
    if not lines or not lines[0].startswith("flowground-trajectory"):
        raise ValueError(f"{path} is not a trajectory file")
    poses = []
    for line in lines[1:]:
        v = [float(x) for x in line.split()[1:]]
        poses.append(RigidTransform(np.array(v[:9]).reshape(3, 3), np.array(v[9:12])))
    return poses
