"""Disparity to depth, and per-branch coloured point clouds.

Camera frame: X right, Y down, Z forward, millimetres.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .raster import CameraIntrinsics, as_binary, check_same_shape, valid_mask


def disparity_to_depth(disparity: np.ndarray, intrinsics: CameraIntrinsics) -> np.ndarray:
    """``Z = fx * B / D`` where ``D > 0``; NaN elsewhere."""
    d = np.asarray(disparity, dtype=np.float64)
    good = np.isfinite(d) & (d > 0)
    depth = np.full(d.shape, np.nan)
    depth[good] = (intrinsics.fx * intrinsics.baseline) / d[good]
    return depth


def depth_to_disparity(depth: np.ndarray, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Inverse of :func:`disparity_to_depth` (0 where depth is invalid)."""
    z = np.asarray(depth, dtype=np.float64)
    good = np.isfinite(z) & (z > 0)
    d = np.zeros(z.shape)
    d[good] = (intrinsics.fx * intrinsics.baseline) / z[good]
    return d


@dataclass(frozen=True)
class PointCloud:
    xyz: np.ndarray  # (N, 3) float, mm
    rgb: np.ndarray  # (N, 3) uint8

    def __len__(self) -> int:
        return len(self.xyz)

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.uint8))


def backproject(
    depth: np.ndarray, rgb: np.ndarray, mask: np.ndarray, intrinsics: CameraIntrinsics
) -> PointCloud:
    """One point per valid masked pixel, in raster order, coloured from ``rgb``."""
    mask = as_binary(mask)
    check_same_shape(depth, rgb, mask)
    v, u = np.nonzero(valid_mask(depth, mask) & (depth > 0))
    z = depth[v, u].astype(np.float64)
    x = (u - intrinsics.cx) * z / intrinsics.fx
    y = (v - intrinsics.cy) * z / intrinsics.fy
    return PointCloud(np.column_stack([x, y, z]), np.asarray(rgb)[v, u].astype(np.uint8))


def project(xyz: np.ndarray, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Pixel coordinates ``(u, v)`` of camera-frame points."""
    xyz = np.asarray(xyz, dtype=np.float64)
    u = xyz[:, 0] * intrinsics.fx / xyz[:, 2] + intrinsics.cx
    v = xyz[:, 1] * intrinsics.fy / xyz[:, 2] + intrinsics.cy
    return np.column_stack([u, v])
