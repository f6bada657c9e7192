"""Mask refinement: erosion with fallback, skeleton-preserving erosion and
colour-validated cleaning with cross-branch overlap resolution."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .color import ColorModel, fit_color_model, srgb_to_lab
from .morphology import (
    connected_components,
    dilate,
    distance_transform,
    erode,
    remove_small_components,
    skeletonize,
)
from .raster import BranchInstance, as_binary, mask_pixel_count


@dataclass(frozen=True)
class MaskRefineParams:
    erosion_radius: int = 15
    core_radius: int = 25
    core_min_pixels: int = 100
    mahalanobis_threshold: float = 3.5
    component_ratio: float = 0.01
    color_model_eps: float = 1e-3

    def __post_init__(self):
        if self.erosion_radius < 1 or self.core_radius < 1:
            raise ValueError("erosion and core radii must be >= 1")
        if not self.mahalanobis_threshold > 0:
            raise ValueError("mahalanobis_threshold must be positive")
        if not 0.0 < self.component_ratio <= 1.0:
            raise ValueError("component_ratio must lie in (0, 1]")
        if not self.color_model_eps > 0:
            raise ValueError("color_model_eps must be positive")

    @property
    def skeleton_dilation(self) -> int:
        return max(3, self.erosion_radius // 4)


@dataclass
class RefinementTrace:
    branch_id: int
    stage_pixels: dict[str, int] = field(default_factory=dict)
    rejected: dict[str, int] = field(default_factory=dict)
    fallback_radius: int | None = None
    core_radius: int | None = None
    flags: list[str] = field(default_factory=list)

    def record(self, stage: str, before: np.ndarray, after: np.ndarray) -> None:
        n_before, n_after = mask_pixel_count(before), mask_pixel_count(after)
        self.stage_pixels[stage] = n_after
        self.rejected[stage] = n_before - n_after

    def to_dict(self) -> dict:
        return {
            "branch_id": self.branch_id,
            "stage_pixels": dict(self.stage_pixels),
            "rejected": dict(self.rejected),
            "fallback_radius": self.fallback_radius,
            "core_radius": self.core_radius,
            "flags": list(self.flags),
        }


def fallback_radii(r_e: int) -> list[int]:
    radii = []
    for r in (r_e, r_e // 2, r_e // 4, 3, 1):
        if 1 <= r <= r_e and r not in radii:
            radii.append(r)
    return radii


def erode_with_fallback(mask: np.ndarray, r_e: int) -> tuple[np.ndarray, int]:
    """Erode at ``r_e``, retrying smaller radii while the result is empty.

    Returns ``(mask, radius_used)``; if every radius empties the mask the
    original is returned with ``radius_used = 0``.
    """
    if r_e < 1:
        raise ValueError(f"erosion radius must be >= 1, got {r_e}")
    mask = as_binary(mask)
    if not mask.any():
        return mask.copy(), 0
    for r in fallback_radii(r_e):
        eroded = erode(mask, r)
        if eroded.any():
            return eroded, r
    return mask.copy(), 0


def skeleton_preserving_erode(mask: np.ndarray, r_e: int, r_s: int | None = None) -> np.ndarray:
    """``({dist >= r_e} | dilate(skeleton, r_s)) & mask``, restricted to the
    components that contain skeleton pixels.

    The restriction only drops slivers the disc picks up across a background
    gap (mask pixels near the centreline but not connected to it), so a
    connected mask stays connected.
    """
    mask = as_binary(mask)
    if r_s is None:
        r_s = max(3, r_e // 4)
    if not mask.any():
        return mask.copy()
    skeleton = skeletonize(mask)
    inner = distance_transform(mask) >= r_e
    out = (inner | dilate(skeleton, r_s)) & mask
    cc = connected_components(out)
    keep = np.zeros(cc.count + 1, dtype=bool)
    keep[np.unique(cc.labels[skeleton])] = True
    keep[0] = False
    return keep[cc.labels]


def extract_core_region(mask: np.ndarray, r_c: int, min_pixels: int) -> tuple[np.ndarray, int]:
    """Deep interior ``{dist >= r_c}``; halve ``r_c`` while it holds too few pixels.

    Falls back to the full mask with ``radius_used = 0``.
    """
    mask = as_binary(mask)
    dist = distance_transform(mask)
    r = r_c
    while True:
        core = dist >= r
        if mask_pixel_count(core) >= min_pixels:
            return core, r
        if r <= 1:
            return mask.copy(), 0
        r = max(1, r // 2)


class ColorValidation(NamedTuple):
    mask: np.ndarray
    model: ColorModel | None
    core_radius: int
    rejected: int


def color_validate_detail(
    mask: np.ndarray, lab: np.ndarray, params: MaskRefineParams = MaskRefineParams()
) -> ColorValidation:
    mask = as_binary(mask)
    core, radius = extract_core_region(mask, params.core_radius, params.core_min_pixels)
    if mask_pixel_count(core) < 2:
        return ColorValidation(mask.copy(), None, radius, 0)
    model = fit_color_model(lab, core, params.color_model_eps)
    out = mask.copy()
    if math.isinf(params.mahalanobis_threshold):
        return ColorValidation(out, model, radius, 0)
    ys, xs = np.nonzero(mask)
    reject = model.distance(lab[ys, xs]) > params.mahalanobis_threshold
    out[ys[reject], xs[reject]] = False
    return ColorValidation(out, model, radius, int(reject.sum()))


def color_validate(
    mask: np.ndarray, lab: np.ndarray, params: MaskRefineParams = MaskRefineParams()
) -> np.ndarray:
    """Remove mask pixels whose Lab colour is far (Mahalanobis) from the core's model."""
    return color_validate_detail(mask, lab, params).mask


def resolve_overlaps(
    instances: Sequence[BranchInstance],
    lab: np.ndarray,
    models: Mapping[int, ColorModel | None],
) -> list[BranchInstance]:
    """Give each multiply-claimed pixel to the branch with the smallest colour distance.

    Ties go to the lowest branch id; branches without a model never win a
    contested pixel.
    """
    if not instances:
        return []
    by_id = sorted(instances, key=lambda inst: inst.id)
    stack = np.stack([inst.mask for inst in by_id])
    claims = stack.sum(axis=0)
    contested = claims >= 2
    if not contested.any():
        return list(instances)
    ys, xs = np.nonzero(contested)
    colors = lab[ys, xs]
    dist = np.full((len(by_id), len(ys)), np.inf)
    for k, inst in enumerate(by_id):
        model = models.get(inst.id)
        claimed = stack[k, ys, xs]
        if model is not None and claimed.any():
            dist[k, claimed] = model.distance(colors[claimed])
    # unclaimed rows must never win, even against all-inf claimants
    dist[~stack[:, ys, xs]] = np.nan
    winner = np.empty(len(ys), dtype=np.intp)
    for j in range(len(ys)):
        col = dist[:, j]
        claimed = np.flatnonzero(~np.isnan(col))
        winner[j] = claimed[np.argmin(col[claimed])]
    new_masks = {}
    for k, inst in enumerate(by_id):
        m = inst.mask.copy()
        lose = stack[k, ys, xs] & (winner != k)
        m[ys[lose], xs[lose]] = False
        new_masks[inst.id] = m
    return [inst.with_mask(new_masks[inst.id]) for inst in instances]


def refine_v2(
    instance: BranchInstance, params: MaskRefineParams = MaskRefineParams()
) -> tuple[BranchInstance, RefinementTrace]:
    trace = RefinementTrace(instance.id)
    mask, radius = erode_with_fallback(instance.mask, params.erosion_radius)
    trace.record("erosion", instance.mask, mask)
    trace.fallback_radius = radius
    if radius == 0:
        trace.flags.append("erosion_fallback_exhausted")
    return instance.with_mask(mask), trace


def refine_v3(
    instance: BranchInstance, params: MaskRefineParams = MaskRefineParams()
) -> tuple[BranchInstance, RefinementTrace]:
    trace = RefinementTrace(instance.id)
    mask = skeleton_preserving_erode(instance.mask, params.erosion_radius, params.skeleton_dilation)
    trace.record("skeleton_erosion", instance.mask, mask)
    return instance.with_mask(mask), trace


def refine_v4(
    instances: Sequence[BranchInstance],
    rgb: np.ndarray | None = None,
    params: MaskRefineParams = MaskRefineParams(),
    lab: np.ndarray | None = None,
) -> tuple[list[BranchInstance], dict[int, RefinementTrace]]:
    """Skeleton erosion, colour validation and component cleaning per branch,
    then overlap resolution across branches.

    Instances emptied along the way are dropped and flagged in their trace.
    """
    if lab is None:
        if rgb is None:
            raise ValueError("refine_v4 needs an RGB or Lab image")
        lab = srgb_to_lab(rgb)
    traces: dict[int, RefinementTrace] = {}
    models: dict[int, ColorModel | None] = {}
    survivors = []
    for inst in instances:
        trace = RefinementTrace(inst.id)
        traces[inst.id] = trace
        stage1 = skeleton_preserving_erode(inst.mask, params.erosion_radius, params.skeleton_dilation)
        trace.record("skeleton_erosion", inst.mask, stage1)
        if not stage1.any():
            trace.flags.append("dropped_empty")
            continue
        validated = color_validate_detail(stage1, lab, params)
        trace.record("color_validation", stage1, validated.mask)
        trace.core_radius = validated.core_radius
        if validated.model is None:
            trace.flags.append("color_model_unfitted")
        stage3 = remove_small_components(validated.mask, params.component_ratio)
        trace.record("component_cleaning", validated.mask, stage3)
        if not stage3.any():
            trace.flags.append("dropped_empty")
            continue
        models[inst.id] = validated.model
        survivors.append(inst.with_mask(stage3))
    resolved = resolve_overlaps(survivors, lab, models)
    out = []
    for before, after in zip(survivors, resolved):
        trace = traces[after.id]
        trace.record("overlap_resolution", before.mask, after.mask)
        if after.pixel_count == 0:
            trace.flags.append("dropped_empty")
            continue
        out.append(after)
    return out, traces
