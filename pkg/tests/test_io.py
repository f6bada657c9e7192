import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from branchdepth.geometry import PointCloud
from branchdepth.io import (
    FormatError,
    PipelineConfig,
    config_from_mapping,
    parse_key_values,
    read_config,
    read_intrinsics,
    read_manifest,
    read_mask,
    read_pfm,
    read_ply,
    read_rgb,
    write_intrinsics,
    write_mask,
    write_pfm,
    write_ply,
    write_rgb,
)
from branchdepth.raster import CameraIntrinsics, RasterError

f32 = st.floats(width=32, allow_nan=False, allow_infinity=False)


@given(arrays(np.float32, st.tuples(st.integers(1, 8), st.integers(1, 8)), elements=st.floats(width=32)))
def test_pfm_round_trip(tmp_path_factory, data):
    p = tmp_path_factory.mktemp("pfm") / "a.pfm"
    write_pfm(p, data)
    back = read_pfm(p)
    assert back.dtype == np.float32 and back.shape == data.shape
    np.testing.assert_array_equal(back, data)
    q = p.with_name("b.pfm")
    write_pfm(q, back)
    assert q.read_bytes() == p.read_bytes()


def test_pfm_layout(tmp_path):
    p = tmp_path / "a.pfm"
    write_pfm(p, np.array([[1.0, 2.0], [3.0, 4.0]]))
    raw = p.read_bytes()
    assert raw.startswith(b"Pf\n2 2\n-1.0\n")
    # bottom row first
    np.testing.assert_array_equal(np.frombuffer(raw[-16:], "<f4"), [3, 4, 1, 2])


def test_pfm_big_endian_and_errors(tmp_path):
    p = tmp_path / "be.pfm"
    p.write_bytes(b"Pf\n2 1\n1.0\n" + np.array([5.0, 6.0], ">f4").tobytes())
    np.testing.assert_array_equal(read_pfm(p), [[5.0, 6.0]])
    for bad in (b"P6\n2 1\n-1.0\n", b"Pf\n2 x\n-1.0\n", b"Pf\n2 1\n-1.0\n\x00\x00"):
        p.write_bytes(bad)
        with pytest.raises(FormatError):
            read_pfm(p)


@given(
    st.integers(0, 20).flatmap(
        lambda n: st.tuples(
            arrays(np.float32, (n, 3), elements=f32),
            arrays(np.uint8, (n, 3)),
        )
    )
)
def test_ply_round_trip(tmp_path_factory, parts):
    xyz, rgb = parts
    d = tmp_path_factory.mktemp("ply")
    write_ply(d / "a.ply", PointCloud(xyz, rgb))
    back = read_ply(d / "a.ply")
    assert len(back) == len(xyz)
    np.testing.assert_array_equal(np.asarray(back.xyz, np.float32), xyz)
    np.testing.assert_array_equal(back.rgb, rgb)
    write_ply(d / "b.ply", back)
    assert (d / "b.ply").read_bytes() == (d / "a.ply").read_bytes()


def test_ply_header_and_errors(tmp_path):
    p = tmp_path / "a.ply"
    write_ply(p, PointCloud.empty())
    assert "element vertex 0" in p.read_text()
    assert len(read_ply(p)) == 0
    p.write_text("ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nend_header\n1\n2\n")
    with pytest.raises(FormatError):
        read_ply(p)


def test_png_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    rgb = rng.integers(0, 256, (7, 9, 3), dtype=np.uint8)
    write_rgb(tmp_path / "a.png", rgb)
    np.testing.assert_array_equal(read_rgb(tmp_path / "a.png"), rgb)
    m = rng.random((7, 9)) < 0.5
    write_mask(tmp_path / "m.png", m)
    np.testing.assert_array_equal(read_mask(tmp_path / "m.png"), m)
    Image.fromarray(np.array([[0, 128, 255]], np.uint8), mode="L").save(tmp_path / "g.png")
    np.testing.assert_array_equal(read_mask(tmp_path / "g.png"), [[False, True, True]])
    with pytest.raises(FormatError):
        read_mask(tmp_path / "a.png")
    with pytest.raises(FormatError):
        read_rgb(tmp_path / "g.png")


def test_key_values():
    kv = parse_key_values("a = 1  # note\n\n# c\nb=two words\n")
    assert kv == {"a": "1", "b": "two words"}
    with pytest.raises(FormatError):
        parse_key_values("a = 1\na = 2")
    with pytest.raises(FormatError):
        parse_key_values("no separator")


def test_intrinsics_round_trip(tmp_path):
    k = CameraIntrinsics(1120.0, 1119.5, 320.25, 180.0, 63.0)
    write_intrinsics(tmp_path / "k.txt", k)
    assert read_intrinsics(tmp_path / "k.txt") == k
    (tmp_path / "bad.txt").write_text("fx = 1\n")
    with pytest.raises(FormatError):
        read_intrinsics(tmp_path / "bad.txt")


def _scene_files(d, h=6, w=8, mask_shape=None):
    write_rgb(d / "left.png", np.zeros((h, w, 3), np.uint8))
    write_pfm(d / "disp.pfm", np.full((h, w), 70.56))
    write_intrinsics(d / "k.txt", CameraIntrinsics(1120.0, 1120.0, w / 2, h / 2, 63.0))
    m = np.zeros(mask_shape or (h, w), bool)
    m[1:3, 1:4] = True
    write_mask(d / "m1.png", m)
    (d / "manifest.txt").write_text("rgb = left.png\ndisparity = disp.pfm\nintrinsics = k.txt\nmask.1 = m1.png 0.9\n")
    return d / "manifest.txt"


def test_manifest_loads(tmp_path):
    scene = read_manifest(_scene_files(tmp_path))
    assert scene.rgb.shape == (6, 8, 3) and scene.disparity.shape == (6, 8)
    assert [(i.id, i.score, i.pixel_count) for i in scene.instances] == [(1, 0.9, 6)]
    assert scene.ground_truth is None


def test_manifest_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_manifest(tmp_path / "missing.txt")
    man = _scene_files(tmp_path)
    (tmp_path / "m1.png").unlink()
    with pytest.raises(FileNotFoundError):
        read_manifest(man)
    man = _scene_files(tmp_path, mask_shape=(5, 8))
    with pytest.raises(RasterError):
        read_manifest(man)
    man = _scene_files(tmp_path)
    write_pfm(tmp_path / "disp.pfm", np.zeros((6, 7)))
    with pytest.raises(RasterError):
        read_manifest(man)
    man = _scene_files(tmp_path)
    (tmp_path / "disp.pfm").write_bytes(b"XX\n")
    with pytest.raises(FormatError):
        read_manifest(man)
    man.write_text(man.read_text() + "colour = x\n")
    with pytest.raises(FormatError):
        read_manifest(man)


def test_config_overrides(tmp_path):
    cfg = config_from_mapping({"version": "v5", "v6.mad_threshold": "4.0", "mask.erosion_radius": "10"})
    assert cfg.version == "v5" and cfg.v6.mad_threshold == 4.0
    assert cfg.mask.erosion_radius == 10 and cfg.mask.core_radius == 25
    assert cfg.v6.consensus_window == PipelineConfig().v6.consensus_window
    cfg = config_from_mapping({"v6.guidance_weights": "0.25, 0.25, 0.25, 0.25"})
    assert cfg.v6.guidance_weights == (0.25,) * 4
    for bad in ({"v6.nope": "1"}, {"v9.mad_threshold": "1"}, {"v6.mad_rounds": "x"}, {"colour": "1"}):
        with pytest.raises(FormatError):
            config_from_mapping(bad)
    with pytest.raises(ValueError):
        config_from_mapping({"version": "v7"})
    with pytest.raises(ValueError):
        config_from_mapping({"v6.consensus_window": "4"})
    (tmp_path / "c.txt").write_text("score_threshold = 0.5\n")
    assert read_config(tmp_path / "c.txt").score_threshold == 0.5
