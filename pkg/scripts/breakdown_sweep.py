"""Fraction of contaminated samples caught by the MAD and IQR filters as contamination grows.

    python3 scripts/breakdown_sweep.py --n 1000 --offset 8000
"""
from __future__ import annotations

import argparse
from dataclasses import dataclass

import numpy as np

from branchdepth.depth_opt import iqr_filter, mad_global_filter


@dataclass
class Config:
    n: int = 1000
    offset_mm: float = 8000.0
    noise_mm: float = 20.0
    trials: int = 20
    seed: int = 7


def caught(cfg: Config, fraction: float, rng: np.random.Generator) -> tuple[float, float]:
    z = 1000.0 + rng.normal(0.0, cfg.noise_mm, cfg.n)
    k = int(round(fraction * cfg.n))
    bad = rng.choice(cfg.n, size=k, replace=False)
    z[bad] += cfg.offset_mm
    z = z[None, :]
    m = np.ones_like(z, bool)
    if k == 0:
        return 1.0, 1.0
    mad = (mad_global_filter(z, m)[0][0, bad] != z[0, bad]).mean()
    iqr = (iqr_filter(z, m)[0][0, bad] != z[0, bad]).mean()
    return float(mad), float(iqr)


def run(cfg: Config) -> None:
    rng = np.random.Generator(np.random.Philox(key=cfg.seed))
    print(f"{'contam':>7} {'mad':>6} {'iqr':>6}")
    for frac in np.arange(0.0, 0.55, 0.05):
        res = np.array([caught(cfg, frac, rng) for _ in range(cfg.trials)])
        print(f"{frac:7.2f} {res[:, 0].mean():6.3f} {res[:, 1].mean():6.3f}")


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--n", type=int, default=Config.n)
    p.add_argument("--offset", type=float, default=Config.offset_mm)
    p.add_argument("--trials", type=int, default=Config.trials)
    p.add_argument("--seed", type=int, default=Config.seed)
    a = p.parse_args()
    run(Config(n=a.n, offset_mm=a.offset, trials=a.trials, seed=a.seed))


if __name__ == "__main__":
    main()
