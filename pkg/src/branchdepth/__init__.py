"""Per-branch depth from stereo disparity and instance masks.

Progressive pipeline versions v1-v6: mask refinement (erosion, skeleton
preservation, colour validation) followed by robust per-branch depth
optimization and coloured point-cloud export.
"""
from .raster import BranchInstance, CameraIntrinsics, apply_mask, gate_by_score, mask_pixel_count
from .geometry import PointCloud, backproject, disparity_to_depth
from .refine import MaskRefineParams, refine_v2, refine_v3, refine_v4
from .depth_opt import V5Params, V6Params, optimize_v5, optimize_v6
from .evaluation import branch_depth_stats, generate_scene, version_comparison
from .io import PipelineConfig, read_manifest
from .pipeline import run_pipeline, write_outputs

__all__ = [
    "BranchInstance",
    "CameraIntrinsics",
    "MaskRefineParams",
    "PipelineConfig",
    "PointCloud",
    "V5Params",
    "V6Params",
    "apply_mask",
    "backproject",
    "branch_depth_stats",
    "disparity_to_depth",
    "gate_by_score",
    "generate_scene",
    "mask_pixel_count",
    "optimize_v5",
    "optimize_v6",
    "read_manifest",
    "refine_v2",
    "refine_v3",
    "refine_v4",
    "run_pipeline",
    "version_comparison",
    "write_outputs",
]
