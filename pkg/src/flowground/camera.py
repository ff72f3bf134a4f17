"""Pinhole camera model: projection and unprojection helpers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def project(self, points: np.ndarray) -> np.ndarray:
        """Project 3D camera-frame points (N, 3) to pixel coordinates (N, 2)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        z = points[:, 2]
        u = self.fx * points[:, 0] / z + self.cx
        v = self.fy * points[:, 1] / z + self.cy
        return np.stack([u, v], axis=1)

    def unproject(self, pixels: np.ndarray, depth: np.ndarray) -> np.ndarray:
        """Lift pixel coordinates (N, 2) with depth (N,) to 3D points (N, 3)."""
        pixels = np.atleast_2d(np.asarray(pixels, dtype=float))
        depth = np.asarray(depth, dtype=float)
        x = (pixels[:, 0] - self.cx) / self.fx * depth
        y = (pixels[:, 1] - self.cy) / self.fy * depth
        return np.stack([x, y, depth], axis=1)

    def point_map(self, depth_values: np.ndarray) -> np.ndarray:
        """Unproject a dense (H, W) depth image to an (H, W, 3) point map."""
        h, w = depth_values.shape
        v, u = np.mgrid[0:h, 0:w].astype(float)
        z = np.asarray(depth_values, dtype=float)
        x = (u - self.cx) / self.fx * z
        y = (v - self.cy) / self.fy * z
        return np.stack([x, y, z], axis=2)

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height}

    @staticmethod
    def from_dict(d: dict) -> "CameraIntrinsics":
        return CameraIntrinsics(fx=float(d["fx"]), fy=float(d["fy"]),
                                cx=float(d["cx"]), cy=float(d["cy"]),
                                width=int(d["width"]), height=int(d["height"]))
