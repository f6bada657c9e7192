"""Binary morphology on boolean planes.

Everything outside the plane is background: masks touching the frame edge
erode there and distances are measured to the virtual border as well.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import ndimage

from .raster import as_binary, bounding_box

EIGHT = np.ones((3, 3), dtype=bool)

# Clockwise from north: N, NE, E, SE, S, SW, W, NW
NEIGHBOUR_OFFSETS = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))


@lru_cache(maxsize=None)
def disc(radius: int) -> np.ndarray:
    """Discrete disc ``{(dy, dx): dx**2 + dy**2 <= radius**2}``."""
    if radius < 1:
        raise ValueError(f"structuring element radius must be >= 1, got {radius}")
    yy, xx = np.mgrid[-radius : radius + 1, -radius : radius + 1]
    el = (xx * xx + yy * yy) <= radius * radius
    el.setflags(write=False)
    return el


def erode(mask: np.ndarray, radius: int) -> np.ndarray:
    """Pixels where the radius-``radius`` disc fits entirely inside ``mask``."""
    mask = as_binary(mask)
    el = disc(radius)
    out = np.zeros_like(mask)
    rows, cols = bounding_box(mask)
    if rows.stop > rows.start:
        out[rows, cols] = ndimage.binary_erosion(mask[rows, cols], structure=el, border_value=0)
    return out


def dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    """Pixels where the radius-``radius`` disc intersects ``mask``."""
    mask = as_binary(mask)
    el = disc(radius)
    out = np.zeros_like(mask)
    rows, cols = bounding_box(mask, pad=radius)
    if rows.stop > rows.start:
        out[rows, cols] = ndimage.binary_dilation(mask[rows, cols], structure=el)
    return out


def distance_transform(mask: np.ndarray) -> np.ndarray:
    """Exact Euclidean distance from each foreground pixel to the nearest background pixel."""
    mask = as_binary(mask)
    if not mask.any():
        return np.zeros(mask.shape, dtype=np.float64)
    padded = np.pad(mask, 1, constant_values=False)
    return ndimage.distance_transform_edt(padded)[1:-1, 1:-1]


@dataclass(frozen=True)
class ComponentLabeling:
    labels: np.ndarray  # int32, 0 = background
    sizes: np.ndarray  # sizes[l] = pixel count of label l, sizes[0] = 0

    @property
    def count(self) -> int:
        return len(self.sizes) - 1


def connected_components(mask: np.ndarray) -> ComponentLabeling:
    """8-connected labeling, labels numbered by raster-scan first encounter."""
    mask = as_binary(mask)
    raw, n = ndimage.label(mask, structure=EIGHT)
    if n == 0:
        return ComponentLabeling(raw.astype(np.int32), np.zeros(1, dtype=np.int64))
    flat = raw.ravel()
    fg = np.flatnonzero(flat)
    labels_seen, first = np.unique(flat[fg], return_index=True)
    order = labels_seen[np.argsort(first)]
    remap = np.zeros(n + 1, dtype=np.int32)
    remap[order] = np.arange(1, n + 1, dtype=np.int32)
    labels = remap[raw]
    sizes = np.bincount(labels.ravel(), minlength=n + 1)
    sizes[0] = 0
    return ComponentLabeling(labels, sizes)


def count_components(mask: np.ndarray) -> int:
    return int(ndimage.label(as_binary(mask), structure=EIGHT)[1])


def remove_small_components(mask: np.ndarray, ratio: float) -> np.ndarray:
    """Drop components smaller than ``ratio`` times the largest one."""
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"ratio must lie in (0, 1], got {ratio}")
    mask = as_binary(mask)
    cc = connected_components(mask)
    if cc.count == 0:
        return mask.copy()
    keep = cc.sizes >= ratio * cc.sizes[1:].max()
    keep[0] = False
    return keep[cc.labels]


# --- thinning --------------------------------------------------------------

def _neighbour_bits(code: int) -> list[int]:
    return [(code >> k) & 1 for k in range(8)]


def _crossings(bits: list[int]) -> int:
    """Number of 0 -> 1 transitions around the ring N, NE, ..., NW, N."""
    return sum(1 for k in range(8) if bits[k] == 0 and bits[(k + 1) % 8] == 1)


def _is_simple(bits: list[int]) -> bool:
    """8-connected foreground / 4-connected background simple-point test."""
    fg = {NEIGHBOUR_OFFSETS[k] for k in range(8) if bits[k]}
    bg = {NEIGHBOUR_OFFSETS[k] for k in range(8) if not bits[k]}

    def components(cells: set, steps) -> list[set]:
        seen, comps = set(), []
        for start in cells:
            if start in seen:
                continue
            comp, stack = set(), [start]
            while stack:
                c = stack.pop()
                if c in seen:
                    continue
                seen.add(c)
                comp.add(c)
                for dy, dx in steps:
                    n = (c[0] + dy, c[1] + dx)
                    if n in cells and n not in seen:
                        stack.append(n)
            comps.append(comp)
        return comps

    four = ((-1, 0), (1, 0), (0, -1), (0, 1))
    fg_comps = components(fg, NEIGHBOUR_OFFSETS)
    bg_comps = [c for c in components(bg, four) if c & set(four)]
    return len(fg_comps) == 1 and len(bg_comps) == 1


@lru_cache(maxsize=None)
def _tables() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    simple = np.zeros(256, dtype=bool)
    crossings = np.zeros(256, dtype=np.int8)
    count = np.zeros(256, dtype=np.int8)
    for code in range(256):
        bits = _neighbour_bits(code)
        simple[code] = _is_simple(bits)
        crossings[code] = _crossings(bits)
        count[code] = sum(bits)
    return simple, crossings, count


def _codes(img: np.ndarray) -> np.ndarray:
    """Neighbourhood code of every interior pixel of a padded image."""
    h, w = img.shape
    code = np.zeros((h - 2, w - 2), dtype=np.int32)
    for k, (dy, dx) in enumerate(NEIGHBOUR_OFFSETS):
        code |= img[1 + dy : h - 1 + dy, 1 + dx : w - 1 + dx].astype(np.int32) << k
    return code


def skeletonize(mask: np.ndarray) -> np.ndarray:
    """Topology-preserving thinning to a unit-width centreline.

    Each pass selects deletion candidates in parallel with Hilditch's
    conditions, then deletes them in raster order, re-checking that each one
    is still a simple point. Sequential simple-point deletion keeps the number
    of 8-connected components (and background holes) unchanged. On return no
    pixel with two or more neighbours is simple.
    """
    mask = as_binary(mask)
    out = np.zeros_like(mask)
    rows, cols = bounding_box(mask)
    if rows.stop == rows.start:
        return out
    simple, crossings, count = _tables()
    # two pixels of padding: A(P2) and A(P4) need the 5x5 neighbourhood
    img = np.pad(mask[rows, cols], 2, constant_values=False).astype(np.uint8)
    while True:
        code = _codes(img)  # for rows/cols 1..-2 of img
        a = crossings[code]
        b = count[code]
        inner = (slice(1, -1), slice(1, -1))
        c = code[inner]
        p = img[2:-2, 2:-2].astype(bool)
        n = lambda k: (c >> k) & 1  # noqa: E731
        a_north = a[:-2, 1:-1]
        a_east = a[1:-1, 2:]
        cand = (
            p
            & (b[inner] >= 2)
            & (b[inner] <= 6)
            & (a[inner] == 1)
            & (((n(0) & n(2) & n(6)) == 0) | (a_north != 1))
            & (((n(0) & n(2) & n(4)) == 0) | (a_east != 1))
        )
        if _delete_sequentially(img, cand, simple, count, min_neighbours=0) == 0:
            break
    # staircase corners left by the parallel conditions: drop any remaining
    # simple pixel that is not an end point
    while True:
        c = _codes(img)[1:-1, 1:-1]
        cand = img[2:-2, 2:-2].astype(bool) & simple[c] & (count[c] >= 2)
        if _delete_sequentially(img, cand, simple, count, min_neighbours=2) == 0:
            break
    out[rows, cols] = img[2:-2, 2:-2].astype(bool)
    return out


def _delete_sequentially(img, cand, simple, count, min_neighbours) -> int:
    removed = 0
    ys, xs = np.nonzero(cand)
    for y, x in zip(ys + 2, xs + 2):
        win = img[y - 1 : y + 2, x - 1 : x + 2]
        k = (
            int(win[0, 1])
            | int(win[0, 2]) << 1
            | int(win[1, 2]) << 2
            | int(win[2, 2]) << 3
            | int(win[2, 1]) << 4
            | int(win[2, 0]) << 5
            | int(win[1, 0]) << 6
            | int(win[0, 0]) << 7
        )
        if simple[k] and count[k] >= min_neighbours:
            img[y, x] = 0
            removed += 1
    return removed
