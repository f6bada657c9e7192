"""CIELAB conversion and per-branch Gaussian colour models."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from skimage.color import rgb2lab

from .raster import as_binary, check_same_shape, invalid_plane


def srgb_to_lab(rgb: np.ndarray) -> np.ndarray:
    """8-bit sRGB ``(H, W, 3)`` to CIELAB (D65, 2 degree observer)."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) RGB image, got {rgb.shape}")
    return rgb2lab(rgb.astype(np.float64) / 255.0, illuminant="D65", observer="2")


@dataclass(frozen=True)
class ColorModel:
    mean: np.ndarray  # (3,)
    covariance: np.ndarray  # (3, 3), already includes eps * I
    eps: float

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"regularisation must be positive, got {self.eps}")
        # raises LinAlgError unless positive definite
        object.__setattr__(self, "_chol", cho_factor(self.covariance, lower=True))

    def distance(self, lab: np.ndarray) -> np.ndarray:
        """Mahalanobis distance of Lab vectors ``(..., 3)`` to the model."""
        diff = np.asarray(lab, dtype=np.float64).reshape(-1, 3) - self.mean
        sol = cho_solve(self._chol, diff.T)
        d2 = np.einsum("ij,ji->i", diff, sol)
        return np.sqrt(np.maximum(d2, 0.0)).reshape(np.shape(lab)[:-1])


def fit_color_model(lab: np.ndarray, region: np.ndarray, eps: float = 1e-3) -> ColorModel:
    """Mean and sample covariance (n - 1) of the region's Lab values, plus ``eps * I``."""
    region = as_binary(region)
    check_same_shape(lab, region)
    samples = lab[region]
    if len(samples) < 2:
        raise ValueError(f"colour model needs at least 2 pixels, got {len(samples)}")
    mean = samples.mean(axis=0)
    cov = np.cov(samples, rowvar=False, ddof=1) + eps * np.eye(3)
    return ColorModel(mean, cov, eps)


def mahalanobis_map(lab: np.ndarray, model: ColorModel, mask: np.ndarray) -> np.ndarray:
    """Distance to ``model`` at every mask pixel, NaN elsewhere."""
    mask = as_binary(mask)
    check_same_shape(lab, mask)
    out = invalid_plane(mask.shape)
    out[mask] = model.distance(lab[mask])
    return out
