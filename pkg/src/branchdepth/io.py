"""File formats: PFM depth/disparity, ASCII PLY clouds, PNG images and masks,
plus the plain-text scene manifest, intrinsics and config files."""
from __future__ import annotations

import re
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any

import numpy as np
from PIL import Image

from .depth_opt import V5Params, V6Params
from .geometry import PointCloud
from .raster import BranchInstance, CameraIntrinsics, RasterError
from .refine import MaskRefineParams


class FormatError(ValueError):
    pass


# --- PFM -------------------------------------------------------------------

def write_pfm(path: str | Path, data: np.ndarray) -> None:
    """Single-channel little-endian PFM (scale -1.0), rows stored bottom-up."""
    data = np.asarray(data)
    if data.ndim != 2:
        raise FormatError(f"PFM writer expects a 2-D plane, got shape {data.shape}")
    h, w = data.shape
    header = f"Pf\n{w} {h}\n-1.0\n".encode("ascii")
    body = np.flipud(data).astype("<f4").tobytes()
    Path(path).write_bytes(header + body)


def read_pfm(path: str | Path) -> np.ndarray:
    """Read a PFM file into a float32 array (``(H, W)`` or ``(H, W, 3)``), top row first."""
    raw = Path(path).read_bytes()
    lines = []
    pos = 0
    while len(lines) < 3:
        end = raw.find(b"\n", pos)
        if end < 0:
            raise FormatError(f"{path}: truncated PFM header")
        line = raw[pos:end].strip()
        pos = end + 1
        if line:
            lines.append(line.decode("ascii", errors="replace"))
    ident, dims, scale_s = lines
    if ident not in ("Pf", "PF"):
        raise FormatError(f"{path}: bad PFM identifier {ident!r}")
    channels = 1 if ident == "Pf" else 3
    m = re.fullmatch(r"\s*(\d+)\s+(\d+)\s*", dims)
    if not m:
        raise FormatError(f"{path}: bad PFM dimensions line {dims!r}")
    w, h = int(m.group(1)), int(m.group(2))
    try:
        scale = float(scale_s)
    except ValueError:
        raise FormatError(f"{path}: bad PFM scale {scale_s!r}") from None
    if scale == 0:
        raise FormatError(f"{path}: PFM scale must be nonzero")
    dtype = "<f4" if scale < 0 else ">f4"
    count = w * h * channels
    if len(raw) - pos < 4 * count:
        raise FormatError(f"{path}: PFM payload too short for {w}x{h}x{channels}")
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=pos).astype(np.float32)
    shape = (h, w) if channels == 1 else (h, w, 3)
    return np.flipud(data.reshape(shape)).copy()


# --- PLY -------------------------------------------------------------------

_PLY_PROPS = ["float x", "float y", "float z", "uchar red", "uchar green", "uchar blue"]


def write_ply(path: str | Path, cloud: PointCloud) -> None:
    """ASCII PLY with float xyz (mm) and uchar colour; floats written to round-trip float32."""
    xyz = np.asarray(cloud.xyz, dtype=np.float32)
    rgb = np.asarray(cloud.rgb, dtype=np.uint8)
    header = ["ply", "format ascii 1.0", f"element vertex {len(xyz)}"]
    header += [f"property {p}" for p in _PLY_PROPS]
    header.append("end_header")
    rows = [
        f"{_f32(x)} {_f32(y)} {_f32(z)} {r} {g} {b}"
        for (x, y, z), (r, g, b) in zip(xyz, rgb.tolist())
    ]
    Path(path).write_text("\n".join(header + rows) + "\n", encoding="ascii")


def _f32(v: np.float32) -> str:
    # shortest text that parses back to the same float32
    return np.format_float_positional(v, unique=True, trim="-")


def read_ply(path: str | Path) -> PointCloud:
    text = Path(path).read_text(encoding="ascii")
    head, sep, body = text.partition("end_header\n")
    if not sep:
        raise FormatError(f"{path}: missing end_header")
    lines = head.splitlines()
    if not lines or lines[0] != "ply" or "format ascii 1.0" not in lines:
        raise FormatError(f"{path}: not an ASCII PLY file")
    n = None
    props = []
    for line in lines:
        if line.startswith("element vertex"):
            n = int(line.split()[2])
        elif line.startswith("property"):
            props.append(line[len("property ") :])
    if n is None or props != _PLY_PROPS:
        raise FormatError(f"{path}: unexpected PLY layout {props}")
    if n == 0:
        return PointCloud.empty()
    rows = [r.split() for r in body.splitlines() if r.strip()]
    if len(rows) != n:
        raise FormatError(f"{path}: expected {n} vertices, found {len(rows)}")
    xyz = np.array([[float(v) for v in r[:3]] for r in rows], dtype=np.float32)
    rgb = np.array([[int(v) for v in r[3:6]] for r in rows], dtype=np.uint8)
    return PointCloud(xyz, rgb)


# --- PNG -------------------------------------------------------------------

def read_rgb(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode != "RGB":
            raise FormatError(f"{path}: expected an 8-bit RGB PNG, got mode {im.mode}")
        return np.asarray(im, dtype=np.uint8).copy()


def write_rgb(path: str | Path, rgb: np.ndarray) -> None:
    Image.fromarray(np.asarray(rgb, dtype=np.uint8), mode="RGB").save(path, format="PNG")


def read_mask(path: str | Path) -> np.ndarray:
    """Single-channel 8-bit PNG; any nonzero value is foreground."""
    with Image.open(path) as im:
        if im.mode not in ("L", "1"):
            raise FormatError(f"{path}: expected a single-channel mask PNG, got mode {im.mode}")
        return np.asarray(im).astype(bool)


def write_mask(path: str | Path, mask: np.ndarray) -> None:
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8), mode="L").save(path, format="PNG")


# --- key = value text files ------------------------------------------------

def parse_key_values(text: str, source: str = "<text>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise FormatError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key = key.strip()
        if key in out:
            raise FormatError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def read_intrinsics(path: str | Path) -> CameraIntrinsics:
    kv = parse_key_values(Path(path).read_text(encoding="utf-8"), str(path))
    try:
        return CameraIntrinsics(
            fx=float(kv["fx"]),
            fy=float(kv["fy"]),
            cx=float(kv["cx"]),
            cy=float(kv["cy"]),
            baseline=float(kv["baseline_mm"]),
        )
    except KeyError as e:
        raise FormatError(f"{path}: missing intrinsics key {e.args[0]!r}") from None


def write_intrinsics(path: str | Path, k: CameraIntrinsics) -> None:
    Path(path).write_text(
        f"fx = {k.fx!r}\nfy = {k.fy!r}\ncx = {k.cx!r}\ncy = {k.cy!r}\nbaseline_mm = {k.baseline!r}\n",
        encoding="utf-8",
    )


@dataclass(frozen=True)
class SceneInputManifest:
    path: Path
    rgb_path: Path
    disparity_path: Path
    intrinsics_path: Path
    mask_paths: dict[int, tuple[Path, float]]
    ground_truth_path: Path | None = None


@dataclass(frozen=True, eq=False)
class LoadedScene:
    manifest: SceneInputManifest
    rgb: np.ndarray
    disparity: np.ndarray
    intrinsics: CameraIntrinsics
    instances: list[BranchInstance]
    ground_truth: np.ndarray | None = None


def parse_manifest(path: str | Path) -> SceneInputManifest:
    """Manifest lines: ``rgb``, ``disparity``, ``intrinsics``, optional
    ``ground_truth`` and one ``mask.<id> = <path> <score>`` per instance.
    Relative paths resolve against the manifest's directory."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"manifest not found: {path}")
    kv = parse_key_values(path.read_text(encoding="utf-8"), str(path))
    base = path.parent

    def resolve(key: str) -> Path:
        if key not in kv:
            raise FormatError(f"{path}: missing key {key!r}")
        return base / kv[key]

    masks: dict[int, tuple[Path, float]] = {}
    for key, value in kv.items():
        if not key.startswith("mask."):
            continue
        try:
            bid = int(key[len("mask.") :])
            file_s, score_s = value.rsplit(None, 1)
            masks[bid] = (base / file_s, float(score_s))
        except ValueError:
            raise FormatError(f"{path}: bad mask entry {key} = {value!r}") from None
    unknown = set(kv) - {"rgb", "disparity", "intrinsics", "ground_truth"} - {k for k in kv if k.startswith("mask.")}
    if unknown:
        raise FormatError(f"{path}: unknown manifest keys {sorted(unknown)}")
    gt = resolve("ground_truth") if "ground_truth" in kv else None
    return SceneInputManifest(path, resolve("rgb"), resolve("disparity"), resolve("intrinsics"), dict(sorted(masks.items())), gt)


def read_manifest(path: str | Path) -> LoadedScene:
    """Parse a manifest and load every file it references, checking dimensions."""
    man = parse_manifest(path)
    for p in [man.rgb_path, man.disparity_path, man.intrinsics_path] + [p for p, _ in man.mask_paths.values()]:
        if not p.is_file():
            raise FileNotFoundError(f"{man.path}: referenced file not found: {p}")
    rgb = read_rgb(man.rgb_path)
    disparity = read_pfm(man.disparity_path)
    if disparity.ndim != 2:
        raise FormatError(f"{man.disparity_path}: disparity must be single-channel")
    h, w = rgb.shape[:2]
    if disparity.shape != (h, w):
        raise RasterError(f"disparity {disparity.shape[1]}x{disparity.shape[0]} does not match RGB {w}x{h}")
    intrinsics = read_intrinsics(man.intrinsics_path)
    intrinsics.check_image(w, h)
    instances = []
    for bid, (mpath, score) in man.mask_paths.items():
        mask = read_mask(mpath)
        if mask.shape != (h, w):
            raise RasterError(f"mask {mpath} is {mask.shape[1]}x{mask.shape[0]}, expected {w}x{h}")
        instances.append(BranchInstance(bid, mask, score))
    gt = None
    if man.ground_truth_path is not None:
        gt = read_pfm(man.ground_truth_path).astype(np.float64)
        if gt.shape != (h, w):
            raise RasterError("ground truth does not match RGB dimensions")
    return LoadedScene(man, rgb, disparity, intrinsics, instances, gt)


# --- pipeline config -------------------------------------------------------

VERSIONS = ("v1", "v2", "v3", "v4", "v5", "v6")


@dataclass(frozen=True)
class PipelineConfig:
    version: str = "v6"
    mask: MaskRefineParams = MaskRefineParams()
    v5: V5Params = V5Params()
    v6: V6Params = V6Params()
    score_threshold: float = 0.7
    output_dir: str | None = None

    def __post_init__(self):
        if self.version not in VERSIONS:
            raise ValueError(f"unknown pipeline version {self.version!r} (expected one of {', '.join(VERSIONS)})")
        if not 0.0 <= self.score_threshold <= 1.0:
            raise ValueError("score_threshold must lie in [0, 1]")

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"version": self.version, "score_threshold": self.score_threshold}
        for section in ("mask", "v5", "v6"):
            params = getattr(self, section)
            for f in fields(params):
                v = getattr(params, f.name)
                out[f"{section}.{f.name}"] = list(v) if isinstance(v, tuple) else v
        return out


def _convert(value: str, like: Any, key: str) -> Any:
    try:
        if isinstance(like, bool):
            if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(value)
            return value.lower() in ("true", "1", "yes")
        if isinstance(like, int):
            return int(value)
        if isinstance(like, float):
            return float(value)
        if isinstance(like, tuple):
            return tuple(float(v) for v in value.replace(",", " ").split())
        return value
    except ValueError:
        raise FormatError(f"config key {key!r}: cannot parse {value!r}") from None


def config_from_mapping(kv: dict[str, str], base: PipelineConfig = PipelineConfig()) -> PipelineConfig:
    """Override ``base`` field-wise from flat dotted keys (``v6.mad_threshold = 3.5``)."""
    top: dict[str, Any] = {}
    sections: dict[str, dict[str, Any]] = {"mask": {}, "v5": {}, "v6": {}}
    for key, value in kv.items():
        section, dot, name = key.partition(".")
        if dot:
            if section not in sections:
                raise FormatError(f"unknown config section {section!r} in {key!r}")
            params = getattr(base, section)
            if name not in {f.name for f in fields(params)}:
                raise FormatError(f"unknown config key {key!r}")
            sections[section][name] = _convert(value, getattr(params, name), key)
        elif key in ("version", "score_threshold", "output_dir"):
            top[key] = _convert(value, getattr(base, key), key) if key == "score_threshold" else value
        else:
            raise FormatError(f"unknown config key {key!r}")
    for section, overrides in sections.items():
        if overrides:
            top[section] = replace(getattr(base, section), **overrides)
    return replace(base, **top)


def read_config(path: str | Path, base: PipelineConfig = PipelineConfig()) -> PipelineConfig:
    return config_from_mapping(parse_key_values(Path(path).read_text(encoding="utf-8"), str(path)), base)
