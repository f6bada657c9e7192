"""Branch depth statistics, version comparison tables and synthetic scenes."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from skimage.draw import line as draw_line

from .morphology import dilate
from .raster import BranchInstance, CameraIntrinsics, as_binary, mask_pixel_count, valid_mask


@dataclass(frozen=True)
class BranchStats:
    branch_id: int
    pixel_count: int
    valid_depth_count: int
    mean: float
    median: float
    sigma_z: float
    range: float
    min: float
    max: float

    def to_dict(self) -> dict:
        return asdict(self)


def branch_depth_stats(depth: np.ndarray, mask: np.ndarray, branch_id: int = 0) -> BranchStats:
    """Statistics of the valid depths inside ``mask``; sigma uses n - 1 (0 for n = 1)."""
    mask = as_binary(mask)
    vals = depth[valid_mask(depth, mask)].astype(np.float64)
    n = int(vals.size)
    if n == 0:
        return BranchStats(branch_id, mask_pixel_count(mask), 0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    lo, hi = float(vals.min()), float(vals.max())
    med = float(np.median(vals))
    # offsets from the median: a constant branch gives exactly zero spread
    off = vals - med
    return BranchStats(
        branch_id=branch_id,
        pixel_count=mask_pixel_count(mask),
        valid_depth_count=n,
        mean=med + float(off.mean()),
        median=med,
        sigma_z=float(off.std(ddof=1)) if n > 1 else 0.0,
        range=hi - lo,
        min=lo,
        max=hi,
    )


@dataclass(frozen=True)
class ComparisonRow:
    version: str
    branches: int
    avg_sigma_mm: float
    avg_range_mm: float
    pixels: int
    valid_pixels: int


def _exact_mean(values: Sequence[float]) -> float:
    if not values:
        return 0.0
    return float(sum((Fraction(v) for v in values), Fraction(0)) / len(values))


def version_comparison(per_version: Mapping[str, Sequence[BranchStats]]) -> list[ComparisonRow]:
    """One row per version: unweighted branch averages of sigma and range, summed pixels."""
    rows = []
    for version, stats in per_version.items():
        rows.append(
            ComparisonRow(
                version=version,
                branches=len(stats),
                avg_sigma_mm=_exact_mean([s.sigma_z for s in stats]),
                avg_range_mm=_exact_mean([s.range for s in stats]),
                pixels=sum(s.pixel_count for s in stats),
                valid_pixels=sum(s.valid_depth_count for s in stats),
            )
        )
    return rows


def depth_histogram(depth: np.ndarray, mask: np.ndarray, bins: int = 50) -> tuple[np.ndarray, np.ndarray]:
    """Counts over ``bins`` uniform bins spanning [min, max] of the valid masked depths."""
    vals = depth[valid_mask(depth, mask)]
    if vals.size == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    return np.histogram(vals, bins=bins, range=(float(vals.min()), float(vals.max())))


def box_plot_data(depth: np.ndarray, mask: np.ndarray) -> dict:
    vals = depth[valid_mask(depth, mask)]
    if vals.size == 0:
        return {}
    q1, med, q3 = np.percentile(vals, [25, 50, 75])
    iqr = q3 - q1
    inside = vals[(vals >= q1 - 1.5 * iqr) & (vals <= q3 + 1.5 * iqr)]
    return {
        "q1": float(q1),
        "median": float(med),
        "q3": float(q3),
        "whisker_low": float(inside.min()),
        "whisker_high": float(inside.max()),
        "outliers": int(vals.size - inside.size),
    }


@dataclass(frozen=True)
class GroundTruthError:
    branch_id: int
    count: int
    mae: float
    rmse: float


def compare_to_ground_truth(
    depths: Mapping[int, np.ndarray],
    ground_truth: np.ndarray,
    masks: Mapping[int, np.ndarray] | None = None,
) -> dict[int, GroundTruthError]:
    """MAE and RMSE of each branch's valid (masked) depth against the ground truth."""
    out = {}
    for bid, depth in depths.items():
        sel = valid_mask(depth, None if masks is None else masks[bid])
        err = depth[sel].astype(np.float64) - ground_truth[sel]
        n = int(err.size)
        mae = float(np.abs(err).mean()) if n else 0.0
        rmse = float(np.sqrt((err * err).mean())) if n else 0.0
        out[bid] = GroundTruthError(bid, n, mae, rmse)
    return out


# --- synthetic scenes ------------------------------------------------------

class SceneSpecError(ValueError):
    pass


@dataclass(frozen=True)
class Primitive:
    kind: str  # "rect" or "polyline"
    rect: tuple[int, int, int, int] = (0, 0, 0, 0)  # x0, y0, x1, y1 (exclusive)
    points: tuple[tuple[int, int], ...] = ()  # (x, y) vertices
    width: int = 1

    def rasterize(self, shape: tuple[int, int]) -> np.ndarray:
        h, w = shape
        m = np.zeros(shape, dtype=bool)
        if self.kind == "rect":
            x0, y0, x1, y1 = self.rect
            m[max(y0, 0) : min(y1, h), max(x0, 0) : min(x1, w)] = True
        elif self.kind == "polyline":
            if len(self.points) < 2:
                raise SceneSpecError("a polyline needs at least two points")
            for (xa, ya), (xb, yb) in zip(self.points[:-1], self.points[1:]):
                rr, cc = draw_line(int(ya), int(xa), int(yb), int(xb))
                ok = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w)
                m[rr[ok], cc[ok]] = True
            if self.width > 1:
                m = dilate(m, (self.width - 1) // 2)
        else:
            raise SceneSpecError(f"unknown primitive kind {self.kind!r}")
        return m

    @classmethod
    def from_dict(cls, d: dict) -> "Primitive":
        return cls(
            kind=d["kind"],
            rect=tuple(d.get("rect", (0, 0, 0, 0))),
            points=tuple(tuple(p) for p in d.get("points", ())),
            width=int(d.get("width", 1)),
        )


@dataclass(frozen=True)
class BranchSpec:
    id: int
    depth_mm: float
    primitives: tuple[Primitive, ...]
    color: tuple[int, int, int] = (110, 85, 60)
    score: float = 0.95

    @classmethod
    def from_dict(cls, d: dict) -> "BranchSpec":
        return cls(
            id=int(d["id"]),
            depth_mm=float(d["depth_mm"]),
            primitives=tuple(Primitive.from_dict(p) for p in d["primitives"]),
            color=tuple(d.get("color", (110, 85, 60))),
            score=float(d.get("score", 0.95)),
        )


@dataclass(frozen=True)
class NoiseSpec:
    gaussian_sigma_mm: float = 0.0
    outlier_fraction: float = 0.0
    outlier_offset_mm: tuple[float, float] = (2000.0, 6000.0)
    spike_count: int = 0
    spike_offset_mm: tuple[float, float] = (1000.0, 3000.0)
    mask_bleed_px: int = 0  # instance masks overshoot the branch by this many pixels
    color_jitter: float = 0.0  # per-channel RGB noise, 8-bit levels

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseSpec":
        d = dict(d)
        for key in ("outlier_offset_mm", "spike_offset_mm"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass(frozen=True)
class SceneSpec:
    width: int
    height: int
    branches: tuple[BranchSpec, ...]
    intrinsics: CameraIntrinsics = CameraIntrinsics(1120.0, 1120.0, 320.0, 180.0, 63.0)
    background_depth_mm: float = 20000.0
    background_color: tuple[int, int, int] = (205, 222, 240)
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        return cls(
            width=int(d["width"]),
            height=int(d["height"]),
            branches=tuple(BranchSpec.from_dict(b) for b in d["branches"]),
            intrinsics=CameraIntrinsics(**d["intrinsics"]) if "intrinsics" in d else cls.intrinsics,
            background_depth_mm=float(d.get("background_depth_mm", 20000.0)),
            background_color=tuple(d.get("background_color", (205, 222, 240))),
            noise=NoiseSpec.from_dict(d.get("noise", {})),
        )

    @classmethod
    def load(cls, path: str | Path) -> "SceneSpec":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def with_noise(self, noise: NoiseSpec) -> "SceneSpec":
        return SceneSpec(
            self.width, self.height, self.branches, self.intrinsics,
            self.background_depth_mm, self.background_color, noise,
        )


@dataclass(frozen=True, eq=False)
class SyntheticScene:
    spec: SceneSpec
    seed: int
    rgb: np.ndarray  # (H, W, 3) uint8
    ground_truth: np.ndarray  # float64 mm, consistent with disparity via Z = fx B / D
    disparity: np.ndarray  # float32 px
    instances: list[BranchInstance]
    footprints: dict[int, np.ndarray]  # true branch pixels
    contaminated: dict[int, np.ndarray]  # pixels that received an outlier or spike

    @property
    def intrinsics(self) -> CameraIntrinsics:
        return self.spec.intrinsics


def _exact_depth(nominal: np.ndarray, fb: float) -> tuple[np.ndarray, np.ndarray]:
    """float32 disparity and the depth it converts back to."""
    disp = (fb / nominal).astype(np.float32)
    return disp, fb / disp.astype(np.float64)


def generate_scene(spec: SceneSpec, seed: int) -> SyntheticScene:
    """Render a reproducible scene: RGB, ground truth, noisy disparity and instance masks."""
    if not spec.branches:
        raise SceneSpecError("scene needs at least one branch")
    shape = (spec.height, spec.width)
    ids = [b.id for b in spec.branches]
    if len(set(ids)) != len(ids):
        raise SceneSpecError(f"branch ids must be unique: {ids}")
    footprints: dict[int, np.ndarray] = {}
    claimed = np.zeros(shape, dtype=bool)
    for b in spec.branches:
        if not 800.0 <= b.depth_mm <= 2500.0:
            raise SceneSpecError(f"branch {b.id}: depth {b.depth_mm} mm outside 800-2500 mm")
        if not b.primitives:
            raise SceneSpecError(f"branch {b.id} has no primitives")
        fp = np.zeros(shape, dtype=bool)
        for p in b.primitives:
            fp |= p.rasterize(shape)
        if not fp.any():
            raise SceneSpecError(f"branch {b.id} lies outside the image")
        if (fp & claimed).any():
            raise SceneSpecError(f"branch {b.id} overlaps another branch")
        claimed |= fp
        footprints[b.id] = fp

    rng = np.random.Generator(np.random.Philox(key=seed))
    noise = spec.noise
    nominal = np.full(shape, float(spec.background_depth_mm))
    for b in spec.branches:
        nominal[footprints[b.id]] = b.depth_mm
    noisy = nominal.copy()
    contaminated = {b.id: np.zeros(shape, dtype=bool) for b in spec.branches}
    for b in spec.branches:
        ys, xs = np.nonzero(footprints[b.id])
        n = len(ys)
        if noise.gaussian_sigma_mm > 0:
            noisy[ys, xs] += rng.normal(0.0, noise.gaussian_sigma_mm, n)
        k = int(round(noise.outlier_fraction * n))
        if k:
            pick = rng.choice(n, size=k, replace=False)
            lo, hi = noise.outlier_offset_mm
            noisy[ys[pick], xs[pick]] += rng.uniform(lo, hi, k)
            contaminated[b.id][ys[pick], xs[pick]] = True
    if noise.spike_count:
        ys, xs = np.nonzero(claimed)
        pick = rng.choice(len(ys), size=min(noise.spike_count, len(ys)), replace=False)
        lo, hi = noise.spike_offset_mm
        mag = rng.uniform(lo, hi, len(pick))
        sign = np.where(rng.random(len(pick)) < 0.5, -1.0, 1.0)
        sy, sx = ys[pick], xs[pick]
        # keep spikes in front of the camera
        sign[noisy[sy, sx] - mag < 100.0] = 1.0
        noisy[sy, sx] += sign * mag
        owner = {b.id: footprints[b.id][sy, sx] for b in spec.branches}
        for bid, hit in owner.items():
            contaminated[bid][sy[hit], sx[hit]] = True
    noisy = np.maximum(noisy, 100.0)

    fb = spec.intrinsics.fx * spec.intrinsics.baseline
    disparity, _ = _exact_depth(noisy, fb)
    _, ground_truth = _exact_depth(nominal, fb)

    rgb = np.empty(shape + (3,), dtype=np.float64)
    rgb[:] = spec.background_color
    for b in spec.branches:
        rgb[footprints[b.id]] = b.color
    if noise.color_jitter > 0:
        rgb += rng.normal(0.0, noise.color_jitter, rgb.shape)
    rgb = np.clip(np.rint(rgb), 0, 255).astype(np.uint8)

    instances = []
    for b in spec.branches:
        m = footprints[b.id]
        if noise.mask_bleed_px > 0:
            m = dilate(m, noise.mask_bleed_px)
        instances.append(BranchInstance(b.id, m, b.score))
    return SyntheticScene(spec, seed, rgb, ground_truth, disparity, instances, footprints, contaminated)


def _rect(x0, y0, x1, y1) -> Primitive:
    return Primitive("rect", rect=(x0, y0, x1, y1))


def _poly(points, width=1) -> Primitive:
    return Primitive("polyline", points=tuple(points), width=width)


CANONICAL_NOISE = NoiseSpec(
    gaussian_sigma_mm=150.0,
    outlier_fraction=0.10,
    outlier_offset_mm=(2000.0, 6000.0),
    spike_count=20,
    mask_bleed_px=1,
    color_jitter=4.0,
)


def canonical_scene_spec() -> SceneSpec:
    """640x360, six branches at 900-2200 mm with heavy depth noise."""
    branches = (
        BranchSpec(1, 1500.0, (_rect(40, 20, 110, 340),), (96, 72, 52)),
        BranchSpec(2, 900.0, (_rect(150, 60, 190, 300),), (120, 96, 70)),
        BranchSpec(3, 1200.0, (_poly([(230, 40), (330, 160), (360, 330)], width=9),), (84, 96, 60)),
        BranchSpec(4, 2200.0, (_poly([(400, 30), (470, 120), (520, 200)], width=7),), (130, 110, 80)),
        BranchSpec(5, 1800.0, (_rect(420, 260, 620, 300),), (70, 60, 50)),
        BranchSpec(6, 2000.0, (_poly([(560, 20), (620, 200)], width=5),), (100, 80, 90)),
    )
    return SceneSpec(640, 360, branches, noise=CANONICAL_NOISE)


def thin_scene_spec() -> SceneSpec:
    """Trunks joined and extended by unit-width twigs, plus a free-standing twig."""
    branches = (
        # two trunks bridged by a unit-width twig
        BranchSpec(1, 1400.0, (
            _rect(20, 20, 56, 80),
            _poly([(38, 80), (38, 160)]),
            _rect(20, 160, 56, 220),
        ), (96, 72, 52)),
        # trunk with diagonal twigs
        BranchSpec(2, 1700.0, (
            _rect(100, 150, 136, 230),
            _poly([(118, 150), (180, 40), (230, 20)]),
            _poly([(136, 190), (230, 120), (300, 110)]),
        ), (120, 96, 70)),
        BranchSpec(3, 2100.0, (_poly([(250, 30), (310, 90), (300, 220)]),), (84, 96, 60)),
    )
    return SceneSpec(320, 240, branches, CameraIntrinsics(1120.0, 1120.0, 160.0, 120.0, 63.0))


def zero_noise(spec: SceneSpec) -> SceneSpec:
    return spec.with_noise(NoiseSpec())
