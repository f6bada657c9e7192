import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from branchdepth.geometry import backproject, depth_to_disparity, disparity_to_depth, project
from branchdepth.raster import CameraIntrinsics

K = CameraIntrinsics(1120.0, 1120.0, 320.0, 180.0, 63.0)


def test_disparity_examples():
    d = np.array([[70.56, 0.0, 35.28, -1.0, np.nan]])
    z = disparity_to_depth(d, K)
    assert z[0, 0] == pytest.approx(1000.0, rel=1e-12)
    assert z[0, 2] == pytest.approx(2000.0, rel=1e-12)
    assert np.isnan(z[0, [1, 3, 4]]).all()


@given(st.lists(st.floats(0.5, 300), min_size=2, max_size=30, unique=True))
def test_depth_monotone_in_disparity(ds):
    ds = np.sort(np.array(ds))[None, :]
    z = disparity_to_depth(ds, K)[0]
    assert (np.diff(z) < 0).all()


def test_depth_disparity_inverse():
    z = np.array([[900.0, 1500.0, np.nan]])
    d = depth_to_disparity(z, K)
    assert d[0, 2] == 0.0
    np.testing.assert_allclose(disparity_to_depth(d, K)[0, :2], z[0, :2], rtol=1e-14)


def test_backproject_examples():
    h, w = 360, 640
    z = np.full((h, w), np.nan)
    rgb = np.zeros((h, w, 3), np.uint8)
    mask = np.zeros((h, w), bool)
    z[180, 320] = 1000.0
    z[180, 600] = 1000.0
    rgb[180, 600] = (9, 8, 7)
    mask[180, 320] = mask[180, 600] = True
    k = CameraIntrinsics(280.0, 280.0, 320.0, 180.0, 63.0)
    cloud = backproject(z, rgb, mask, k)
    np.testing.assert_allclose(cloud.xyz[0], (0, 0, 1000))
    np.testing.assert_allclose(cloud.xyz[1], (1000, 0, 1000))
    np.testing.assert_array_equal(cloud.rgb[1], (9, 8, 7))
    empty = backproject(z, rgb, np.zeros((h, w), bool), k)
    assert len(empty) == 0


def test_backproject_raster_order_and_size():
    rng = np.random.default_rng(0)
    z = rng.uniform(800, 2500, (20, 30))
    z[rng.random(z.shape) < 0.2] = np.nan
    mask = rng.random(z.shape) < 0.5
    rgb = rng.integers(0, 256, (20, 30, 3), dtype=np.uint8)
    k = CameraIntrinsics(500.0, 480.0, 15.0, 10.0, 63.0)
    cloud = backproject(z, rgb, mask, k)
    valid = mask & np.isfinite(z)
    assert len(cloud) == valid.sum()
    vs, us = np.nonzero(valid)
    np.testing.assert_allclose(cloud.xyz[:, 2], z[vs, us])
    uv = project(cloud.xyz, k)
    np.testing.assert_allclose(uv[:, 0], us, atol=1e-6)
    np.testing.assert_allclose(uv[:, 1], vs, atol=1e-6)
    assert np.isfinite(cloud.xyz).all() and (cloud.xyz[:, 2] > 0).all()
