"""Metric depth calibration against a sensor reference frame.

A global affine map s * d + t is fit with RANSAC between a generated depth
frame and a sensor depth frame, after removing small connected components
of the joint validity mask, and then applied to the whole sequence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import (
    CalibrationFailure,
    DegenerateSample,
    DimensionMismatch,
    InsufficientPixels,
)


@dataclass(frozen=True)
class DepthFrame:
    """Dense per-pixel depth in meters with a validity mask."""

    values: np.ndarray  # (H, W) float
    valid: np.ndarray  # (H, W) bool

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        object.__setattr__(self, "values", v)
        if self.valid is None:
            m = np.isfinite(v) & (v > 0)
        else:
            m = np.asarray(self.valid, dtype=bool)
            if m.shape != v.shape:
                raise DimensionMismatch("valid mask shape must match values")
        object.__setattr__(self, "valid", m)

    @staticmethod
    def from_values(values: np.ndarray) -> "DepthFrame":
        """Build a frame treating NaN / nonpositive entries as invalid."""
        return DepthFrame(np.asarray(values, dtype=np.float32), None)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class AffineDepthModel:
    """Global affine depth map: metric = scale * generated + shift."""

    scale: float
    shift: float
    inlier_count: int
    inlier_ratio: float


def build_calibration_mask(gen: DepthFrame, sensor: DepthFrame,
                           min_component_area: int = 50) -> np.ndarray:
    """Joint validity mask with small 4-connected components removed."""
    if gen.values.shape != sensor.values.shape:
        raise DimensionMismatch(
            f"frames differ: {gen.values.shape} vs {sensor.values.shape}")
    mask = gen.valid & sensor.valid
    labels, n = ndimage.label(mask, structure=np.array(
        [[0, 1, 0], [1, 1, 1], [0, 1, 0]]))
    if n == 0:
        return mask
    areas = ndimage.sum_labels(np.ones_like(labels), labels, index=np.arange(1, n + 1))
    small = np.flatnonzero(areas < min_component_area) + 1
    if small.size:
        mask = mask & ~np.isin(labels, small)
    return mask


def _fit_two_point(g: np.ndarray, d: np.ndarray) -> tuple[float, float]:
    s = (d[1] - d[0]) / (g[1] - g[0])
    return float(s), float(d[0] - s * g[0])


def _least_squares_affine(g: np.ndarray, d: np.ndarray) -> tuple[float, float]:
    a = np.stack([g, np.ones_like(g)], axis=1)
    (s, t), *_ = np.linalg.lstsq(a, d, rcond=None)
    return float(s), float(t)


def calibrate_depth_affine(gen: DepthFrame, sensor: DepthFrame,
                           iterations: int = 1000,
                           inlier_threshold: float = 0.15,
                           rng_seed: int = 0,
                           min_component_area: int = 50) -> AffineDepthModel:
    """Robust global affine fit of sensor depth against generated depth.

    Each RANSAC round samples 2 masked pixels with distinct generated
    depths and keeps the hypothesis maximizing the number of pixels with
    residual strictly below the threshold. Inlier-count ties are broken by
    lower total absolute inlier residual. The final parameters are the
    least-squares re-fit over the winning hypothesis's inliers; the
    reported inlier count is re-evaluated under the re-fit parameters.
    """
    mask = build_calibration_mask(gen, sensor, min_component_area)
    g = gen.values[mask].astype(np.float64)
    d = sensor.values[mask].astype(np.float64)
    n = g.size
    if n < 2:
        raise InsufficientPixels(f"calibration mask has {n} pixels, need >= 2")

    best = None  # (inlier_count, -abs_residual_sum, s, t, inlier_mask)
    degenerate_rounds = 0
    for i in range(int(iterations)):
        rng = np.random.default_rng([int(rng_seed), i])
        idx = rng.choice(n, size=2, replace=False)
        if g[idx[0]] == g[idx[1]]:
            degenerate_rounds += 1
            continue
        s, t = _fit_two_point(g[idx], d[idx])
        res = np.abs(s * g + t - d)
        inl = res < inlier_threshold
        count = int(np.count_nonzero(inl))
        key = (count, -float(res[inl].sum()))
        if best is None or key > best[0]:
            best = (key, s, t, inl)

    if best is None:
        raise DegenerateSample(
            f"all {degenerate_rounds} rounds sampled pixels with equal generated depth")

    _, s, t, inl = best
    s, t = _least_squares_affine(g[inl], d[inl])
    count = int(np.count_nonzero(np.abs(s * g + t - d) < inlier_threshold))

    if s <= 0:
        raise CalibrationFailure(f"recovered nonpositive depth scale {s}")
    return AffineDepthModel(scale=float(s), shift=float(t),
                            inlier_count=count, inlier_ratio=count / n)


def apply_depth_model(model: AffineDepthModel,
                      sequence: list[DepthFrame]) -> list[DepthFrame]:
    """Map every valid pixel by scale * d + shift; nonpositive results are invalidated."""
    if model.scale <= 0:
        raise CalibrationFailure("model scale must be positive")
    out = []
    for frame in sequence:
        values = frame.values * np.float32(model.scale) + np.float32(model.shift)
        valid = frame.valid & (values > 0)
        out.append(DepthFrame(values, valid))
    return out
