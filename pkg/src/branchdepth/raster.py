"""Raster containers, camera model and branch-instance records.

Planes are plain numpy arrays indexed ``[row, col]``:

* byte planes: ``uint8``
* binary planes: ``bool``
* real planes: ``float64``/``float32`` with ``NaN`` marking invalid pixels

RGB images are ``(H, W, 3) uint8`` (sRGB), Lab images ``(H, W, 3) float64``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

INVALID = np.nan


class RasterError(ValueError):
    pass


def plane_kind(plane: np.ndarray) -> str:
    """Return ``"binary"``, ``"byte"`` or ``"real"`` for a 2-D plane."""
    if plane.ndim != 2:
        raise RasterError(f"expected a 2-D plane, got shape {plane.shape}")
    if plane.dtype == np.bool_:
        return "binary"
    if plane.dtype == np.uint8:
        return "byte"
    if np.issubdtype(plane.dtype, np.floating):
        return "real"
    raise RasterError(f"unsupported plane dtype {plane.dtype}")


def as_binary(mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise RasterError(f"mask must be 2-D, got shape {mask.shape}")
    if mask.dtype == np.bool_:
        return mask
    return mask != 0


def check_binary(mask: np.ndarray) -> None:
    """Plane-kind audit: raise unless ``mask`` is a 2-D boolean plane."""
    if plane_kind(mask) != "binary":
        raise RasterError(f"expected a binary plane, got dtype {mask.dtype}")


def check_same_shape(*planes: np.ndarray) -> None:
    shapes = {p.shape[:2] for p in planes}
    if len(shapes) > 1:
        raise RasterError(f"dimension mismatch: {sorted(shapes)}")


def invalid_plane(shape: tuple[int, int]) -> np.ndarray:
    return np.full(shape, INVALID, dtype=np.float64)


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    baseline: float  # millimetres

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0 and self.baseline > 0):
            raise RasterError(f"fx, fy and baseline must be positive: {self}")

    def check_image(self, width: int, height: int) -> None:
        if not (0 <= self.cx < width and 0 <= self.cy < height):
            raise RasterError(
                f"principal point ({self.cx}, {self.cy}) outside {width}x{height} image"
            )


@dataclass(frozen=True, eq=False)
class BranchInstance:
    id: int
    mask: np.ndarray
    score: float = 1.0
    flags: tuple[str, ...] = field(default=())

    def __post_init__(self):
        mask = np.array(as_binary(self.mask), copy=True)
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)
        if not 0.0 <= self.score <= 1.0:
            raise RasterError(f"score must lie in [0, 1], got {self.score}")

    @property
    def pixel_count(self) -> int:
        return mask_pixel_count(self.mask)

    def with_mask(self, mask: np.ndarray, *flags: str) -> "BranchInstance":
        return BranchInstance(self.id, mask, self.score, self.flags + tuple(flags))


def make_instances(
    masks: Sequence[np.ndarray], scores: Sequence[float], ids: Iterable[int] | None = None
) -> list[BranchInstance]:
    """Build instances, checking the construction invariants (nonempty, unique ids)."""
    ids = list(range(1, len(masks) + 1)) if ids is None else list(ids)
    if len(set(ids)) != len(ids):
        raise RasterError(f"branch ids must be unique: {ids}")
    out = []
    for i, m, s in zip(ids, masks, scores):
        inst = BranchInstance(int(i), m, float(s))
        if inst.pixel_count == 0:
            raise RasterError(f"instance {i} has an empty mask")
        out.append(inst)
    return out


def gate_by_score(instances: Sequence[BranchInstance], threshold: float) -> list[BranchInstance]:
    """Keep instances whose score is strictly greater than ``threshold``."""
    if not 0.0 <= threshold <= 1.0:
        raise RasterError(f"threshold must lie in [0, 1], got {threshold}")
    return [inst for inst in instances if inst.score > threshold]


def apply_mask(depth: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Copy of ``depth`` with every pixel outside ``mask`` set invalid."""
    mask = as_binary(mask)
    check_same_shape(depth, mask)
    out = np.array(depth, dtype=np.float64, copy=True)
    out[~mask] = INVALID
    return out


def mask_pixel_count(mask: np.ndarray) -> int:
    return int(np.count_nonzero(mask))


def valid_mask(depth: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Pixels holding a finite depth (and inside ``mask`` if given)."""
    valid = np.isfinite(depth)
    if mask is not None:
        valid &= as_binary(mask)
    return valid


def bounding_box(mask: np.ndarray, pad: int = 0) -> tuple[slice, slice]:
    """Slices of the padded bounding box of ``mask`` (clipped to the plane)."""
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0:
        return slice(0, 0), slice(0, 0)
    h, w = mask.shape
    return (
        slice(max(rows[0] - pad, 0), min(rows[-1] + pad + 1, h)),
        slice(max(cols[0] - pad, 0), min(cols[-1] + pad + 1, w)),
    )
