"""Slow, direct reference implementations used as test oracles."""
from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

EIGHT = np.ones((3, 3), bool)
FOUR = ndimage.generate_binary_structure(2, 1)


def disc_offsets(r: int) -> list[tuple[int, int]]:
    return [(dy, dx) for dy in range(-r, r + 1) for dx in range(-r, r + 1) if dy * dy + dx * dx <= r * r]


def erode(mask: np.ndarray, r: int) -> np.ndarray:
    h, w = mask.shape
    out = np.zeros_like(mask, dtype=bool)
    offs = disc_offsets(r)
    for y in range(h):
        for x in range(w):
            out[y, x] = all(
                0 <= y + dy < h and 0 <= x + dx < w and mask[y + dy, x + dx] for dy, dx in offs
            )
    return out


def dilate(mask: np.ndarray, r: int) -> np.ndarray:
    h, w = mask.shape
    out = np.zeros_like(mask, dtype=bool)
    offs = disc_offsets(r)
    for y in range(h):
        for x in range(w):
            out[y, x] = any(
                0 <= y + dy < h and 0 <= x + dx < w and mask[y + dy, x + dx] for dy, dx in offs
            )
    return out


def distance_transform(mask: np.ndarray) -> np.ndarray:
    """Distance to the nearest background pixel, the 1-px frame around the plane included."""
    padded = np.pad(mask.astype(bool), 1)
    by, bx = np.nonzero(~padded)
    out = np.zeros(mask.shape)
    for y, x in zip(*np.nonzero(mask)):
        out[y, x] = math.sqrt(((by - (y + 1)) ** 2 + (bx - (x + 1)) ** 2).min())
    return out


def topology(mask: np.ndarray) -> tuple[int, int]:
    """(8-connected foreground components, 4-connected background components incl. outside)."""
    padded = np.pad(mask.astype(bool), 1)
    fg = ndimage.label(padded, structure=EIGHT)[1]
    bg = ndimage.label(~padded, structure=FOUR)[1]
    return fg, bg


def removable(mask: np.ndarray, y: int, x: int) -> bool:
    """Deleting (y, x) keeps both component counts: a global simple-point test."""
    trial = mask.copy()
    trial[y, x] = False
    return topology(trial) == topology(mask)


def neighbours(mask: np.ndarray, y: int, x: int) -> int:
    win = np.pad(mask, 1)[y : y + 3, x : x + 3]
    return int(win.sum()) - 1


def thin_reference(mask: np.ndarray) -> np.ndarray:
    """Exhaustive sequential thinning: delete removable non-end pixels until none is left."""
    m = mask.astype(bool).copy()
    changed = True
    while changed:
        changed = False
        for y, x in zip(*np.nonzero(m)):
            if neighbours(m, y, x) >= 2 and removable(m, y, x):
                m[y, x] = False
                changed = True
    return m


def is_thin(skel: np.ndarray) -> bool:
    """No pixel with two or more neighbours can be deleted without changing topology."""
    return not any(
        neighbours(skel, y, x) >= 2 and removable(skel, y, x) for y, x in zip(*np.nonzero(skel))
    )


def transition_width(z: np.ndarray, lo: float = 0.1, hi: float = 0.9, plateau: int = 5) -> float:
    """10-90 % rise distance (px) of the column-averaged profile of a left-to-right step."""
    prof = np.nanmean(z, axis=0)
    a, b = prof[:plateau].mean(), prof[-plateau:].mean()

    def cross(level):
        t = a + level * (b - a)
        i = int(np.flatnonzero(prof >= t)[0])
        return i - 1 + (t - prof[i - 1]) / (prof[i] - prof[i - 1])

    return cross(hi) - cross(lo)


def srgb_to_lab_scalar(r: int, g: int, b: int) -> tuple[float, float, float]:
    """sRGB (8 bit) -> XYZ (D65) -> CIELAB, one pixel at a time."""

    def lin(c):
        c = c / 255.0
        return c / 12.92 if c <= 0.04045 else ((c + 0.055) / 1.055) ** 2.4

    rl, gl, bl = lin(r), lin(g), lin(b)
    x = 0.412453 * rl + 0.357580 * gl + 0.180423 * bl
    y = 0.212671 * rl + 0.715160 * gl + 0.072169 * bl
    z = 0.019334 * rl + 0.119193 * gl + 0.950227 * bl
    xn, yn, zn = 0.95047, 1.0, 1.08883

    def f(t):
        d = 6.0 / 29.0
        return t ** (1.0 / 3.0) if t > d**3 else t / (3 * d * d) + 4.0 / 29.0

    fx, fy, fz = f(x / xn), f(y / yn), f(z / zn)
    return 116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)


# --- depth filters ---------------------------------------------------------

def _window(depth, valid, y, x, half):
    h, w = depth.shape
    out = []
    for yy in range(max(0, y - half), min(h, y + half + 1)):
        for xx in range(max(0, x - half), min(w, x + half + 1)):
            if valid[yy, xx]:
                out.append(depth[yy, xx])
    return np.array(out)


def _valid(depth, mask):
    return mask & np.isfinite(depth)


def masked_median(depth, mask, window):
    valid = _valid(depth, mask)
    out = depth.astype(float).copy()
    for y, x in zip(*np.nonzero(valid)):
        out[y, x] = np.median(_window(depth, valid, y, x, window // 2))
    return out


def local_spatial(depth, mask, window, beta, center="mean"):
    valid = _valid(depth, mask)
    out = depth.astype(float).copy()
    for y, x in zip(*np.nonzero(valid)):
        win = _window(depth, valid, y, x, window // 2)
        if len(win) - 1 < 3:
            continue
        med = np.median(win)
        c = win.mean() if center == "mean" else med
        sigma = math.sqrt(((win - c) ** 2).mean())
        if abs(depth[y, x] - med) > beta * sigma:
            out[y, x] = med
    return out


def _consistency(depth, valid, half, gamma):
    cons = {}
    stats = {}
    for y, x in zip(*np.nonzero(valid)):
        win = _window(depth, valid, y, x, half)
        med = np.median(win)
        mad = np.median(np.abs(win - med))
        stats[y, x] = (med, mad, len(win))
        cons[y, x] = abs(depth[y, x] - med) <= gamma * 1.4826 * mad
    return cons, stats


def density_consensus(depth, mask, window, gamma, rho_min):
    valid = _valid(depth, mask)
    half = window // 2
    cons, stats = _consistency(depth, valid, half, gamma)
    out = depth.astype(float).copy()
    h, w = depth.shape
    for (y, x), ok in cons.items():
        med, _, n = stats[y, x]
        if ok or n - 1 < 3:
            continue
        agree = sum(
            cons[yy, xx]
            for yy in range(max(0, y - half), min(h, y + half + 1))
            for xx in range(max(0, x - half), min(w, x + half + 1))
            if valid[yy, xx] and (yy, xx) != (y, x)
        )
        if agree / (n - 1) >= rho_min:
            out[y, x] = med
    return out


def local_mad(depth, mask, window, tau):
    valid = _valid(depth, mask)
    out = depth.astype(float).copy()
    for y, x in zip(*np.nonzero(valid)):
        win = _window(depth, valid, y, x, window // 2)
        med = np.median(win)
        mad = np.median(np.abs(win - med))
        if len(win) - 1 >= 3 and mad > 0 and abs(depth[y, x] - med) > tau * 1.4826 * mad:
            out[y, x] = med
    return out


def guided(depth, guide, mask, r, eps):
    """Guided filter with every window statistic taken over valid pixels only."""
    valid = _valid(depth, mask)
    h, w = depth.shape
    coef = {}
    for y, x in zip(*np.nonzero(valid)):
        ps, gs = [], []
        for yy in range(max(0, y - r), min(h, y + r + 1)):
            for xx in range(max(0, x - r), min(w, x + r + 1)):
                if valid[yy, xx]:
                    ps.append(depth[yy, xx])
                    gs.append(guide[yy, xx])
        ps, gs = np.array(ps), np.array(gs)
        a = ((gs * ps).mean() - gs.mean() * ps.mean()) / (gs.var() + eps)
        coef[y, x] = (a, ps.mean() - a * gs.mean())
    out = depth.astype(float).copy()
    for y, x in coef:
        near = [
            coef[yy, xx]
            for yy in range(max(0, y - r), min(h, y + r + 1))
            for xx in range(max(0, x - r), min(w, x + r + 1))
            if (yy, xx) in coef
        ]
        a = np.mean([c[0] for c in near])
        b = np.mean([c[1] for c in near])
        out[y, x] = a * guide[y, x] + b
    return out


def bilateral(depth, mask, sigma_s, sigma_d):
    valid = _valid(depth, mask)
    half = math.ceil(2 * sigma_s)
    h, w = depth.shape
    out = depth.astype(float).copy()
    for y, x in zip(*np.nonzero(valid)):
        num = den = 0.0
        for yy in range(max(0, y - half), min(h, y + half + 1)):
            for xx in range(max(0, x - half), min(w, x + half + 1)):
                d2 = (yy - y) ** 2 + (xx - x) ** 2
                if not valid[yy, xx] or d2 > half * half:
                    continue
                wgt = math.exp(-d2 / (2 * sigma_s**2)) * math.exp(
                    -((depth[y, x] - depth[yy, xx]) ** 2) / (2 * sigma_d**2)
                )
                num += wgt * depth[yy, xx]
                den += wgt
        out[y, x] = num / den
    return out
