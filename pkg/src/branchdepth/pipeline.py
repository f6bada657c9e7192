"""Run any pipeline version end to end and write its outputs."""
from __future__ import annotations

import csv
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

from .depth_opt import StageReport, build_guidance, optimize_v5, optimize_v6
from .evaluation import BranchStats, box_plot_data, branch_depth_stats, depth_histogram, version_comparison
from .geometry import PointCloud, backproject, disparity_to_depth
from .io import VERSIONS, LoadedScene, PipelineConfig, write_mask, write_pfm, write_ply
from .raster import BranchInstance, CameraIntrinsics, apply_mask, check_binary, gate_by_score
from .refine import RefinementTrace, refine_v2, refine_v3, refine_v4

log = logging.getLogger("branchdepth")

T = TypeVar("T")
R = TypeVar("R")


def worker_count() -> int:
    raw = os.environ.get("BRANCHDEPTH_THREADS")
    if raw is None or raw == "":
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"BRANCHDEPTH_THREADS must be an integer >= 1, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"BRANCHDEPTH_THREADS must be an integer >= 1, got {raw!r}")
    return n


def _map(fn: Callable[[T], R], items: Sequence[T], workers: int) -> list[R]:
    """Order-preserving map, optionally over a thread pool."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass(eq=False)
class PipelineOutputs:
    version: str
    instances: list[BranchInstance]
    depths: dict[int, np.ndarray]
    clouds: dict[int, PointCloud]
    stats: list[BranchStats]
    stage_reports: dict[int, list[StageReport]] = field(default_factory=dict)
    traces: dict[int, RefinementTrace] = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)
    config: PipelineConfig | None = None


def refine_masks(
    version: str,
    instances: Sequence[BranchInstance],
    rgb: np.ndarray,
    config: PipelineConfig,
    workers: int = 1,
    lab: np.ndarray | None = None,
) -> tuple[list[BranchInstance], dict[int, RefinementTrace]]:
    """Mask stage of ``version``: none for v1, erosion for v2, skeleton erosion for v3,
    the four-stage colour refinement for v4-v6."""
    if version == "v1":
        return list(instances), {}
    if version in ("v2", "v3"):
        fn = refine_v2 if version == "v2" else refine_v3
        results = _map(lambda inst: fn(inst, config.mask), list(instances), workers)
        return [r[0] for r in results], {r[1].branch_id: r[1] for r in results}
    return refine_v4(instances, rgb, config.mask, lab=lab)


def run_pipeline(
    rgb: np.ndarray,
    disparity: np.ndarray,
    intrinsics: CameraIntrinsics,
    instances: Sequence[BranchInstance],
    config: PipelineConfig = PipelineConfig(),
    refined: tuple[list[BranchInstance], dict[int, RefinementTrace]] | None = None,
    workers: int | None = None,
) -> PipelineOutputs:
    """Gate, convert, refine masks, optimise depth and back-project per branch.

    ``refined`` supplies precomputed v4 masks (and traces) so v5 and v6 can
    share them.
    """
    workers = worker_count() if workers is None else workers
    version = config.version
    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    gated = gate_by_score(instances, config.score_threshold)
    depth = disparity_to_depth(disparity, intrinsics)
    timings["depth_conversion"] = time.perf_counter() - t0
    if not gated:
        log.info("%s: no instances above score %.2f", version, config.score_threshold)
        return PipelineOutputs(version, [], {}, {}, [], flags=["no_instances"], timings=timings, config=config)

    t0 = time.perf_counter()
    if refined is not None and version in ("v4", "v5", "v6"):
        masks, traces = refined
    else:
        masks, traces = refine_masks(version, gated, rgb, config, workers)
    for inst in masks:
        check_binary(inst.mask)
    timings["mask_refinement"] = time.perf_counter() - t0
    log.info("%s: %d branches after mask refinement", version, len(masks))

    t0 = time.perf_counter()
    guidance = build_guidance(rgb, config.v6.guidance_weights) if version == "v6" else None

    def optimise(inst: BranchInstance) -> tuple[np.ndarray, list[StageReport]]:
        z = apply_mask(depth, inst.mask)
        if version == "v5":
            return optimize_v5(z, inst.mask, config.v5)
        if version == "v6":
            return optimize_v6(z, inst.mask, params=config.v6, guidance=guidance)
        return z, []

    optimised = _map(optimise, masks, workers)
    timings["depth_optimization"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    depths = {inst.id: z for inst, (z, _) in zip(masks, optimised)}
    reports = {inst.id: reps for inst, (_, reps) in zip(masks, optimised) if reps}
    clouds = {inst.id: backproject(depths[inst.id], rgb, inst.mask, intrinsics) for inst in masks}
    stats = [branch_depth_stats(depths[inst.id], inst.mask, inst.id) for inst in masks]
    timings["point_clouds"] = time.perf_counter() - t0
    return PipelineOutputs(version, masks, depths, clouds, stats, reports, traces, [], timings, config)


def run_scene(scene: LoadedScene, config: PipelineConfig = PipelineConfig(), **kw) -> PipelineOutputs:
    return run_pipeline(scene.rgb, scene.disparity, scene.intrinsics, scene.instances, config, **kw)


def run_all_versions(
    rgb: np.ndarray,
    disparity: np.ndarray,
    intrinsics: CameraIntrinsics,
    instances: Sequence[BranchInstance],
    config: PipelineConfig = PipelineConfig(),
    versions: Iterable[str] = VERSIONS,
    workers: int | None = None,
) -> dict[str, PipelineOutputs]:
    """Every requested version; v4, v5 and v6 share one v4 mask refinement."""
    workers = worker_count() if workers is None else workers
    cache = None
    out = {}
    for v in versions:
        cfg = replace(config, version=v)
        if v in ("v4", "v5", "v6") and cache is None:
            gated = gate_by_score(instances, config.score_threshold)
            cache = refine_masks("v4", gated, rgb, cfg, workers) if gated else ([], {})
        out[v] = run_pipeline(rgb, disparity, intrinsics, instances, cfg, cache if v in ("v4", "v5", "v6") else None, workers)
    return out


# --- output files ----------------------------------------------------------

STATS_COLUMNS = ["branch_id", "pixels", "valid", "mean_mm", "median_mm", "sigma_mm", "range_mm"]


def _num(v: float) -> str:
    return repr(float(v))


def write_stats_csv(path: Path, stats: Sequence[BranchStats]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STATS_COLUMNS)
        for s in stats:
            w.writerow([s.branch_id, s.pixel_count, s.valid_depth_count, _num(s.mean), _num(s.median), _num(s.sigma_z), _num(s.range)])


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, allow_nan=False) + "\n", encoding="utf-8")


def write_outputs(outputs: PipelineOutputs, out_dir: str | Path, bins: int = 50) -> list[Path]:
    """Write per-branch PLY/PNG/PFM files, ``stats.csv``, ``report.json``,
    ``histograms.json`` and ``timings.json``; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not os.access(out_dir, os.W_OK):
        raise PermissionError(f"output directory is not writable: {out_dir}")
    written = []
    hist = {}
    for inst in outputs.instances:
        bid = inst.id
        paths = (out_dir / f"branch_{bid}.ply", out_dir / f"mask_{bid}.png", out_dir / f"depth_{bid}.pfm")
        write_ply(paths[0], outputs.clouds[bid])
        write_mask(paths[1], inst.mask)
        write_pfm(paths[2], outputs.depths[bid])
        written += paths
        counts, edges = depth_histogram(outputs.depths[bid], inst.mask, bins)
        hist[str(bid)] = {
            "counts": counts.tolist(),
            "edges_mm": edges.tolist(),
            "box": box_plot_data(outputs.depths[bid], inst.mask),
        }
    stats_path = out_dir / "stats.csv"
    write_stats_csv(stats_path, outputs.stats)
    report = {
        "version": outputs.version,
        "config": outputs.config.to_dict() if outputs.config else None,
        "flags": outputs.flags,
        "branches": [
            {
                "id": s.branch_id,
                "stats": s.to_dict(),
                "points": len(outputs.clouds[s.branch_id]),
                "stages": [r.to_dict() for r in outputs.stage_reports.get(s.branch_id, [])],
                "refinement": outputs.traces[s.branch_id].to_dict() if s.branch_id in outputs.traces else None,
            }
            for s in outputs.stats
        ],
        "dropped": [t.to_dict() for bid, t in sorted(outputs.traces.items()) if "dropped_empty" in t.flags],
        "open_question_flags": {"total_mask_pixels": "mask area, including pixels without valid depth"},
    }
    for name, obj in (("report.json", report), ("histograms.json", hist), ("timings.json", outputs.timings)):
        _dump_json(out_dir / name, obj)
        written.append(out_dir / name)
    written.append(stats_path)
    return written


COMPARISON_COLUMNS = ["version", "branches", "avg_sigma_mm", "avg_range_mm", "pixels", "valid_pixels"]


def write_comparison(results: dict[str, PipelineOutputs], out_dir: str | Path) -> list[Path]:
    """Per-version output folders plus a ``comparison.csv`` / ``comparison.json`` table."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for v, res in results.items():
        written += write_outputs(res, out_dir / v)
    rows = version_comparison({v: r.stats for v, r in results.items()})
    csv_path = out_dir / "comparison.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COMPARISON_COLUMNS)
        for r in rows:
            w.writerow([r.version, r.branches, _num(r.avg_sigma_mm), _num(r.avg_range_mm), r.pixels, r.valid_pixels])
    json_path = out_dir / "comparison.json"
    _dump_json(json_path, [r.__dict__ for r in rows])
    return written + [csv_path, json_path]
