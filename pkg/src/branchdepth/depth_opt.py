"""Per-branch depth denoising.

Two pipelines operate on a depth plane (mm, NaN = invalid) restricted to a
branch mask:

* ``optimize_v5``: IQR clipping, global Z-score, local spatial outliers and a
  masked median filter.
* ``optimize_v6``: global MAD, spatial density consensus, local MAD, a
  guided filter and an adaptive bilateral filter.

Every stage only reads and writes valid pixels inside the mask; everything
else is copied through untouched. Local windows clip at the image border and
only count valid mask pixels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .color import srgb_to_lab
from .raster import as_binary, check_same_shape, valid_mask

MAD_TO_SIGMA = 1.4826
MODIFIED_Z = 0.6745
MIN_WINDOW_MATES = 3


@dataclass(frozen=True)
class V5Params:
    iqr_alpha: float = 1.5
    iqr_rounds: int = 3
    zscore_threshold: float = 2.0
    local_window: int = 7
    local_beta: float = 2.0
    median_window: int = 5
    # "mean": local sigma about the local mean (uniform filtering, as written);
    # "median": local sigma about the local median
    local_sigma_center: str = "mean"

    def __post_init__(self):
        _check_window(self.local_window)
        _check_window(self.median_window)
        if not (self.iqr_alpha > 0 and self.local_beta > 0):
            raise ValueError("iqr_alpha and local_beta must be positive")
        if self.iqr_rounds < 1:
            raise ValueError("iqr_rounds must be >= 1")
        if self.local_sigma_center not in ("mean", "median"):
            raise ValueError(f"local_sigma_center must be 'mean' or 'median', got {self.local_sigma_center!r}")


@dataclass(frozen=True)
class V6Params:
    mad_threshold: float = 3.5
    mad_rounds: int = 3
    consensus_window: int = 11
    consensus_gamma: float = 2.0
    consensus_rho: float = 0.3
    local_mad_window: int = 7
    local_mad_threshold: float = 3.0
    guided_radius: int = 4
    guided_eps: float = 0.01
    guidance_weights: tuple[float, float, float, float] = (0.4, 0.3, 0.15, 0.15)
    bilateral_sigma_s: float = 7.0
    bilateral_alpha: float = 1.5

    def __post_init__(self):
        _check_window(self.consensus_window)
        _check_window(self.local_mad_window)
        if not 0.0 < self.consensus_rho <= 1.0:
            raise ValueError("consensus_rho must lie in (0, 1]")
        if len(self.guidance_weights) != 4 or not math.isclose(sum(self.guidance_weights), 1.0):
            raise ValueError(f"guidance weights must be 4 values summing to 1: {self.guidance_weights}")
        if self.guided_radius < 1 or not self.guided_eps > 0:
            raise ValueError("guided filter needs radius >= 1 and eps > 0")
        if not self.bilateral_sigma_s > 0:
            raise ValueError("bilateral_sigma_s must be positive")
        if self.mad_rounds < 1:
            raise ValueError("mad_rounds must be >= 1")


def _check_window(size: int) -> None:
    if size < 3 or size % 2 == 0:
        raise ValueError(f"window sizes must be odd and >= 3, got {size}")


@dataclass
class StageReport:
    stage: str
    pixels_modified: int
    sigma_before: float
    sigma_after: float
    range_before: float
    range_after: float
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "pixels_modified": self.pixels_modified,
            "sigma_before_mm": self.sigma_before,
            "sigma_after_mm": self.sigma_after,
            "range_before_mm": self.range_before,
            "range_after_mm": self.range_after,
            "flags": list(self.flags),
        }


def _spread(values: np.ndarray) -> tuple[float, float]:
    if values.size == 0:
        return 0.0, 0.0
    sigma = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
    return sigma, float(values.max() - values.min())


def _report(stage: str, before: np.ndarray, after: np.ndarray, flags=()) -> StageReport:
    sb, rb = _spread(before)
    sa, ra = _spread(after)
    return StageReport(stage, int(np.count_nonzero(before != after)), sb, sa, rb, ra, list(flags))


class _Branch:
    """Valid pixels of one branch plus flat-index window gathering."""

    def __init__(self, depth: np.ndarray, mask: np.ndarray):
        mask = as_binary(mask)
        check_same_shape(depth, mask)
        self.depth = depth
        self.valid = valid_mask(depth, mask)
        self.ys, self.xs = np.nonzero(self.valid)
        self.values = depth[self.ys, self.xs].astype(np.float64)

    @property
    def n(self) -> int:
        return self.values.size

    def output(self, values: np.ndarray) -> np.ndarray:
        out = np.array(self.depth, dtype=np.float64, copy=True)
        out[self.ys, self.xs] = values
        return out

    def offsets(self, half: int, disc: bool = False) -> tuple[np.ndarray, np.ndarray]:
        dy, dx = np.mgrid[-half : half + 1, -half : half + 1]
        dy, dx = dy.ravel(), dx.ravel()
        if disc:
            keep = dy * dy + dx * dx <= half * half
            dy, dx = dy[keep], dx[keep]
        return dy, dx

    def gather(self, values: np.ndarray, half: int, disc: bool = False) -> np.ndarray:
        """``(n, k)`` window values around each valid pixel, NaN where invalid."""
        h, w = self.valid.shape
        plane = np.full((h + 2 * half, w + 2 * half), np.nan)
        plane[self.ys + half, self.xs + half] = values
        dy, dx = self.offsets(half, disc)
        width = w + 2 * half
        base = (self.ys + half) * width + (self.xs + half)
        return plane.ravel()[base[:, None] + (dy * width + dx)[None, :]]


def _row_median(win: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Median of the finite entries of each row, and the count of finite entries."""
    s = np.sort(win, axis=1)  # NaN sorts last
    n = np.count_nonzero(np.isfinite(win), axis=1)
    safe = np.maximum(n, 1)
    rows = np.arange(len(win))
    med = 0.5 * (s[rows, (safe - 1) // 2] + s[rows, safe // 2])
    med[n == 0] = np.nan
    return med, n


def _local_median_mad(win: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    med, n = _row_median(win)
    mad, _ = _row_median(np.abs(win - med[:, None]))
    return med, mad, n


# --- V5 --------------------------------------------------------------------

def iqr_filter(
    depth: np.ndarray, mask: np.ndarray, alpha: float = 1.5, rounds: int = 3
) -> tuple[np.ndarray, StageReport]:
    """Replace values outside the Tukey fences by the branch median, repeatedly."""
    br = _Branch(depth, mask)
    vals = br.values.copy()
    flags = []
    if br.n < 4:
        flags.append("insufficient_pixels")
    else:
        for _ in range(rounds):
            q1, q3 = np.percentile(vals, [25, 75])
            spread = q3 - q1
            out = (vals < q1 - alpha * spread) | (vals > q3 + alpha * spread)
            if not out.any():
                break
            vals[out] = np.median(vals)
    return br.output(vals), _report("iqr", br.values, vals, flags)


def zscore_filter(
    depth: np.ndarray, mask: np.ndarray, threshold: float = 2.0
) -> tuple[np.ndarray, StageReport]:
    """Replace values more than ``threshold`` sample deviations from the mean by the median."""
    br = _Branch(depth, mask)
    vals = br.values.copy()
    flags = []
    sd = float(np.std(vals, ddof=1)) if br.n >= 2 else 0.0
    if br.n < 2:
        flags.append("insufficient_pixels")
    elif sd == 0.0:
        flags.append("zero_sigma")
    else:
        out = np.abs(vals - vals.mean()) / sd > threshold
        vals[out] = np.median(vals)
    return br.output(vals), _report("zscore", br.values, vals, flags)


def local_spatial_filter(
    depth: np.ndarray,
    mask: np.ndarray,
    window: int = 7,
    beta: float = 2.0,
    sigma_center: str = "mean",
) -> tuple[np.ndarray, StageReport]:
    """Flag ``|Z - local median| > beta * local sigma``; replace by the local median."""
    _check_window(window)
    br = _Branch(depth, mask)
    vals = br.values.copy()
    if br.n:
        win = br.gather(br.values, window // 2)
        med, n = _row_median(win)
        center = np.nanmean(win, axis=1) if sigma_center == "mean" else med
        sigma = np.sqrt(np.nanmean((win - center[:, None]) ** 2, axis=1))
        out = (n - 1 >= MIN_WINDOW_MATES) & (np.abs(br.values - med) > beta * sigma)
        vals[out] = med[out]
    return br.output(vals), _report("local_spatial", br.values, vals)


def masked_median_filter(
    depth: np.ndarray, mask: np.ndarray, window: int = 5
) -> tuple[np.ndarray, StageReport]:
    """Median of the valid mask pixels in each pixel's window."""
    _check_window(window)
    br = _Branch(depth, mask)
    vals = br.values.copy()
    if br.n:
        vals, _ = _row_median(br.gather(br.values, window // 2))
    return br.output(vals), _report("median", br.values, vals)


def optimize_v5(
    depth: np.ndarray, mask: np.ndarray, params: V5Params = V5Params()
) -> tuple[np.ndarray, list[StageReport]]:
    stages: list[Callable[[np.ndarray], tuple[np.ndarray, StageReport]]] = [
        lambda z: iqr_filter(z, mask, params.iqr_alpha, params.iqr_rounds),
        lambda z: zscore_filter(z, mask, params.zscore_threshold),
        lambda z: local_spatial_filter(
            z, mask, params.local_window, params.local_beta, params.local_sigma_center
        ),
        lambda z: masked_median_filter(z, mask, params.median_window),
    ]
    reports = []
    for stage in stages:
        depth, rep = stage(depth)
        reports.append(rep)
    return depth, reports


# --- V6 --------------------------------------------------------------------

def mad_global_filter(
    depth: np.ndarray, mask: np.ndarray, threshold: float = 3.5, rounds: int = 3
) -> tuple[np.ndarray, StageReport]:
    """Replace pixels with modified Z-score above ``threshold`` by the branch median.

    A round whose MAD is zero is a no-op (flagged) rather than a division by zero.
    """
    br = _Branch(depth, mask)
    vals = br.values.copy()
    flags = []
    if br.n < 2:
        flags.append("insufficient_pixels")
    else:
        for _ in range(rounds):
            med = np.median(vals)
            dev = np.abs(vals - med)
            mad = np.median(dev)
            if mad == 0.0:
                flags.append("mad_zero")
                break
            out = MODIFIED_Z * dev / mad > threshold
            if not out.any():
                break
            vals[out] = med
    return br.output(vals), _report("mad_global", br.values, vals, flags)


def spatial_density_consensus(
    depth: np.ndarray,
    mask: np.ndarray,
    window: int = 11,
    gamma: float = 2.0,
    rho_min: float = 0.3,
) -> tuple[np.ndarray, StageReport]:
    """Replace pixels that disagree with their neighbourhood while the neighbourhood agrees.

    A pixel is consistent when ``|Z - local median| <= gamma * 1.4826 * local MAD``.
    Its consensus ratio is the fraction of its valid window-mates that are
    themselves consistent; inconsistent pixels with ratio >= ``rho_min`` take
    the local median.
    """
    _check_window(window)
    half = window // 2
    br = _Branch(depth, mask)
    vals = br.values.copy()
    if br.n:
        med, mad, n = _local_median_mad(br.gather(br.values, half))
        consistent = np.abs(br.values - med) <= gamma * MAD_TO_SIGMA * mad
        votes = br.gather(consistent.astype(np.float64), half)
        mates = n - 1
        agree = np.nansum(votes, axis=1) - consistent
        rho = np.divide(agree, mates, out=np.zeros(br.n), where=mates > 0)
        out = ~consistent & (rho >= rho_min) & (mates >= MIN_WINDOW_MATES)
        vals[out] = med[out]
    return br.output(vals), _report("spatial_density", br.values, vals)


def local_mad_filter(
    depth: np.ndarray, mask: np.ndarray, window: int = 7, threshold: float = 3.0
) -> tuple[np.ndarray, StageReport]:
    """Flag ``|Z - local median| > threshold * 1.4826 * local MAD``; replace by the local median."""
    _check_window(window)
    br = _Branch(depth, mask)
    vals = br.values.copy()
    if br.n:
        med, mad, n = _local_median_mad(br.gather(br.values, window // 2))
        out = (
            (n - 1 >= MIN_WINDOW_MATES)
            & (mad > 0)
            & (np.abs(br.values - med) > threshold * MAD_TO_SIGMA * mad)
        )
        vals[out] = med[out]
    return br.output(vals), _report("local_mad", br.values, vals)


def build_guidance(
    rgb: np.ndarray, weights: tuple[float, float, float, float] = (0.4, 0.3, 0.15, 0.15)
) -> np.ndarray:
    """Single guidance channel in [0, 1] from grey, L, a and b."""
    rgb = np.asarray(rgb)
    gray = (rgb[..., 0] * 0.299 + rgb[..., 1] * 0.587 + rgb[..., 2] * 0.114) / 255.0
    lab = srgb_to_lab(rgb)
    channels = (
        gray,
        lab[..., 0] / 100.0,
        (lab[..., 1] + 128.0) / 255.0,
        (lab[..., 2] + 128.0) / 255.0,
    )
    guide = sum(w * c for w, c in zip(weights, channels))
    return np.clip(guide, 0.0, 1.0)


def _box_sum(a: np.ndarray, r: int) -> np.ndarray:
    """Sum over the (2r+1)^2 window around each pixel, zero outside the plane."""
    p = np.pad(a, ((r + 1, r), (r + 1, r)))
    c = p.cumsum(axis=0).cumsum(axis=1)
    k = 2 * r + 1
    return c[k:, k:] - c[:-k, k:] - c[k:, :-k] + c[:-k, :-k]


def guided_filter(
    depth: np.ndarray,
    guidance: np.ndarray,
    mask: np.ndarray,
    radius: int = 4,
    eps: float = 0.01,
) -> tuple[np.ndarray, StageReport]:
    """Guided filter with window statistics over valid mask pixels only.

    Linear coefficients are computed for every window centred on a valid
    pixel, then averaged over the valid centres covering each pixel.
    """
    br = _Branch(depth, mask)
    check_same_shape(depth, guidance)
    vals = br.values.copy()
    if br.n:
        pad = 2 * radius
        y0, y1 = br.ys.min(), br.ys.max() + 1
        x0, x1 = br.xs.min(), br.xs.max() + 1
        h, w = y1 - y0 + 2 * pad, x1 - x0 + 2 * pad
        ly, lx = br.ys - y0 + pad, br.xs - x0 + pad
        # centring keeps the moments well conditioned; the filter is
        # translation equivariant so the offset is added back exactly
        offset = float(np.median(br.values))
        v = np.zeros((h, w))
        p = np.zeros((h, w))
        guide = np.zeros((h, w))
        v[ly, lx] = 1.0
        p[ly, lx] = br.values - offset
        guide[ly, lx] = guidance[br.ys, br.xs]
        count = np.rint(_box_sum(v, radius))
        n = np.maximum(count, 1.0)
        mean_i = _box_sum(guide, radius) / n
        mean_p = _box_sum(p, radius) / n
        corr_ip = _box_sum(guide * p, radius) / n
        var_i = np.maximum(_box_sum(guide * guide, radius) / n - mean_i**2, 0.0)
        a = (corr_ip - mean_i * mean_p) / (var_i + eps)
        b = mean_p - a * mean_i
        a *= v
        b *= v
        centres = np.maximum(np.rint(_box_sum(v, radius)), 1.0)
        mean_a = _box_sum(a, radius) / centres
        mean_b = _box_sum(b, radius) / centres
        vals = mean_a[ly, lx] * guide[ly, lx] + mean_b[ly, lx] + offset
    return br.output(vals), _report("guided", br.values, vals)


def adaptive_bilateral(
    depth: np.ndarray,
    mask: np.ndarray,
    sigma_s: float = 7.0,
    alpha_d: float = 1.5,
    branch_mad: float | None = None,
) -> tuple[np.ndarray, StageReport]:
    """Bilateral filter with range bandwidth ``alpha_d * 1.4826 * branch MAD``.

    The kernel covers valid pixels within radius ``ceil(2 * sigma_s)``. A zero
    MAD leaves the depth unchanged.
    """
    br = _Branch(depth, mask)
    vals = br.values.copy()
    if branch_mad is None and br.n:
        branch_mad = float(np.median(np.abs(br.values - np.median(br.values))))
    flags = []
    if br.n and branch_mad and branch_mad > 0:
        sigma_d = alpha_d * MAD_TO_SIGMA * branch_mad
        half = math.ceil(2 * sigma_s)
        h, w = br.valid.shape
        width = w + 2 * half
        plane = np.full((h + 2 * half, width), np.nan)
        plane[br.ys + half, br.xs + half] = br.values
        flat = plane.ravel()
        base = (br.ys + half) * width + (br.xs + half)
        dy, dx = br.offsets(half, disc=True)
        num = np.zeros(br.n)
        den = np.zeros(br.n)
        for oy, ox in zip(dy, dx):
            zj = flat[base + oy * width + ox]
            ok = np.isfinite(zj)
            ws = math.exp(-(oy * oy + ox * ox) / (2.0 * sigma_s**2))
            diff = zj[ok] - br.values[ok]
            wt = ws * np.exp(-(diff**2) / (2.0 * sigma_d**2))
            # offsets from the centre value: a flat neighbourhood returns it exactly
            num[ok] += wt * diff
            den[ok] += wt
        vals = br.values + num / den
    elif br.n:
        flags.append("mad_zero")
    return br.output(vals), _report("adaptive_bilateral", br.values, vals, flags)


def branch_mad(depth: np.ndarray, mask: np.ndarray) -> float:
    vals = depth[valid_mask(depth, mask)]
    if vals.size == 0:
        return 0.0
    return float(np.median(np.abs(vals - np.median(vals))))


V6_STAGES = ("mad_global", "spatial_density", "local_mad", "guided", "adaptive_bilateral")


def optimize_v6(
    depth: np.ndarray,
    mask: np.ndarray,
    rgb: np.ndarray | None = None,
    params: V6Params = V6Params(),
    guidance: np.ndarray | None = None,
) -> tuple[np.ndarray, list[StageReport]]:
    """Five robust stages in fixed order; pass ``guidance`` to reuse it across branches."""
    if guidance is None:
        if rgb is None:
            raise ValueError("optimize_v6 needs an RGB image or a prebuilt guidance plane")
        guidance = build_guidance(rgb, params.guidance_weights)
    reports = []
    depth, rep = mad_global_filter(depth, mask, params.mad_threshold, params.mad_rounds)
    reports.append(rep)
    depth, rep = spatial_density_consensus(
        depth, mask, params.consensus_window, params.consensus_gamma, params.consensus_rho
    )
    reports.append(rep)
    depth, rep = local_mad_filter(depth, mask, params.local_mad_window, params.local_mad_threshold)
    reports.append(rep)
    mad = branch_mad(depth, mask)
    depth, rep = guided_filter(depth, guidance, mask, params.guided_radius, params.guided_eps)
    reports.append(rep)
    depth, rep = adaptive_bilateral(depth, mask, params.bilateral_sigma_s, params.bilateral_alpha, mad)
    reports.append(rep)
    return depth, reports
