"""Command-line entry point: ``run``, ``compare``, ``synth`` and ``eval``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .evaluation import (
    SceneSpec,
    SyntheticScene,
    canonical_scene_spec,
    compare_to_ground_truth,
    generate_scene,
    thin_scene_spec,
)
from .io import (
    VERSIONS,
    PipelineConfig,
    read_config,
    read_manifest,
    read_mask,
    read_pfm,
    write_intrinsics,
    write_mask,
    write_pfm,
    write_rgb,
)
from .pipeline import run_all_versions, run_scene, write_comparison, write_outputs

log = logging.getLogger("branchdepth")

BUILTIN_SPECS = {"canonical": canonical_scene_spec, "thin": thin_scene_spec}


def write_synthetic_scene(scene: SyntheticScene, out_dir: str | Path) -> Path:
    """Write a scene as a manifest-compatible file set; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_rgb(out / "left.png", scene.rgb)
    write_pfm(out / "disparity.pfm", scene.disparity)
    write_pfm(out / "ground_truth.pfm", scene.ground_truth)
    write_intrinsics(out / "intrinsics.txt", scene.intrinsics)
    lines = [
        "rgb = left.png",
        "disparity = disparity.pfm",
        "intrinsics = intrinsics.txt",
        "ground_truth = ground_truth.pfm",
    ]
    for inst in scene.instances:
        write_mask(out / f"instance_{inst.id}.png", inst.mask)
        lines.append(f"mask.{inst.id} = instance_{inst.id}.png {inst.score!r}")
    for bid, fp in scene.footprints.items():
        write_mask(out / f"footprint_{bid}.png", fp)
    manifest = out / "manifest.txt"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    (out / "scene.json").write_text(
        json.dumps({"seed": scene.seed, "spec": scene.spec.to_dict()}, indent=2) + "\n", encoding="utf-8"
    )
    return manifest


def _load_config(args) -> PipelineConfig:
    cfg = read_config(args.config) if getattr(args, "config", None) else PipelineConfig()
    if getattr(args, "version", None):
        cfg = replace(cfg, version=args.version)
    return cfg


def cmd_run(args) -> int:
    scene = read_manifest(args.manifest)
    cfg = _load_config(args)
    log.info("running %s on %s", cfg.version, args.manifest)
    outputs = run_scene(scene, cfg)
    write_outputs(outputs, args.out)
    log.info("wrote %d branches to %s", len(outputs.instances), args.out)
    return 0


def cmd_compare(args) -> int:
    scene = read_manifest(args.manifest)
    cfg = _load_config(args)
    results = run_all_versions(scene.rgb, scene.disparity, scene.intrinsics, scene.instances, cfg)
    write_comparison(results, args.out)
    for v, res in results.items():
        sig = [s.sigma_z for s in res.stats]
        log.info("%s: %d branches, avg sigma %.1f mm", v, len(sig), float(np.mean(sig)) if sig else 0.0)
    return 0


def cmd_synth(args) -> int:
    spec = BUILTIN_SPECS[args.spec]() if args.spec in BUILTIN_SPECS else SceneSpec.load(args.spec)
    scene = generate_scene(spec, args.seed)
    manifest = write_synthetic_scene(scene, args.out)
    log.info("wrote synthetic scene to %s", manifest)
    return 0


def _evaluate_dir(run_dir: Path, ground_truth: np.ndarray) -> dict:
    depths, masks = {}, {}
    for p in sorted(run_dir.glob("depth_*.pfm")):
        bid = int(p.stem.split("_", 1)[1])
        depths[bid] = read_pfm(p).astype(np.float64)
        mpath = run_dir / f"mask_{bid}.png"
        masks[bid] = read_mask(mpath) if mpath.exists() else np.ones(ground_truth.shape, bool)
    if any(d.shape != ground_truth.shape for d in depths.values()):
        raise ValueError(f"{run_dir}: depth maps do not match the ground-truth dimensions")
    return compare_to_ground_truth(depths, ground_truth, masks)


def cmd_eval(args) -> int:
    scene = read_manifest(Path(args.scene) / "manifest.txt")
    if scene.ground_truth is None:
        raise ValueError(f"{args.scene}: manifest has no ground_truth entry")
    out_dir = Path(args.out_dir)
    if not out_dir.is_dir():
        raise FileNotFoundError(f"output directory not found: {out_dir}")
    runs = {v: out_dir / v for v in VERSIONS if (out_dir / v).is_dir()} or {"run": out_dir}
    rows = []
    for label, run_dir in runs.items():
        for bid, err in sorted(_evaluate_dir(run_dir, scene.ground_truth).items()):
            rows.append({"version": label, "branch_id": bid, "count": err.count, "mae_mm": err.mae, "rmse_mm": err.rmse})
    with open(out_dir / "eval.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=["version", "branch_id", "count", "mae_mm", "rmse_mm"], lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    (out_dir / "eval.json").write_text(json.dumps(rows, indent=2) + "\n", encoding="utf-8")
    for label in runs:
        sel = [r for r in rows if r["version"] == label]
        if sel:
            log.info("%s: mean MAE %.2f mm over %d branches", label, np.mean([r["mae_mm"] for r in sel]), len(sel))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="branchdepth", description=__doc__)
    parser.add_argument("--quiet", action="store_true", help="suppress progress lines on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one pipeline version on a scene manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--version", choices=VERSIONS, required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="run all six versions and write a comparison table")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("synth", help="write a synthetic scene with ground truth")
    p.add_argument("--spec", required=True, help=f"scene JSON file or one of {sorted(BUILTIN_SPECS)}")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="ground-truth error report for run outputs")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--scene", required=True)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="branchdepth: %(message)s",
        stream=sys.stderr,
        force=True,
    )
    try:
        return args.func(args)
    except (OSError, ValueError) as e:
        print(f"branchdepth: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
