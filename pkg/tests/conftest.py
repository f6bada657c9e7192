from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")


def masks(min_side=1, max_side=24):
    """Hypothesis strategy for boolean planes."""
    shapes = st.tuples(st.integers(min_side, max_side), st.integers(min_side, max_side))
    return shapes.flatmap(lambda s: arrays(np.bool_, s))


def blobby_mask(rng: np.random.Generator, shape=(32, 32), density=0.5, smooth=1) -> np.ndarray:
    """Random mask with some spatial coherence (box-smoothed noise, thresholded)."""
    from scipy import ndimage

    noise = rng.random(shape)
    if smooth:
        noise = ndimage.uniform_filter(noise, size=2 * smooth + 1, mode="constant")
    return noise > np.quantile(noise, 1.0 - density)


def random_masks(n: int, seed: int, shape=(32, 32)) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        out.append(blobby_mask(rng, shape, density=rng.uniform(0.2, 0.8), smooth=i % 3))
    return out


@pytest.fixture(scope="session")
def canonical_scene():
    from branchdepth.evaluation import canonical_scene_spec, generate_scene

    return generate_scene(canonical_scene_spec(), 42)


@pytest.fixture(scope="session")
def thin_scene():
    from branchdepth.evaluation import generate_scene, thin_scene_spec

    return generate_scene(thin_scene_spec(), 0)


def tree_bytes(root) -> dict[str, bytes]:
    """Every output file under ``root`` except the wall-clock timings."""
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(Path(root).rglob("*"))
        if p.is_file() and p.name != "timings.json"
    }
