"""Assign 2D masks a physical 3D size and normalize sizes to [0, 1].

A mask's size is taken from the spatial spread of its pixels deprojected
through the depth map: twice the Euclidean norm of the per-axis standard
deviations, clamped to [1e-4, 2] x camera extent.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset, MaskRecord
from .geometry import Camera

MAX_DEPROJECT_PIXELS = 10_000
SCALE_FLOOR_FACTOR = 1e-4
SCALE_CAP_FACTOR = 2.0


class ScaleError(Exception):
    pass


def assign_scale(mask: np.ndarray, depth: np.ndarray, cam: Camera,
                 camera_extent: float, rng=None) -> float:
    """3D size of a 2D boolean mask given per-pixel depth.

    Deprojects (subsampled) mask pixels with finite depth and returns
    2 * ||(sigma_x, sigma_y, sigma_z)||_2 clamped to the scale range.
    """
    v, u = np.nonzero(mask & np.isfinite(depth))
    if v.size == 0:
        raise ScaleError("mask has no geometry (all depth missing)")
    if v.size > MAX_DEPROJECT_PIXELS:
        rng = rng or np.random.default_rng(0)
        sel = rng.choice(v.size, MAX_DEPROJECT_PIXELS, replace=False)
        v, u = v[sel], u[sel]
    pts = cam.deproject(u.astype(np.float64), v.astype(np.float64), depth[v, u])
    sigma = pts.std(axis=0)
    raw = 2.0 * float(np.linalg.norm(sigma))
    lo = SCALE_FLOOR_FACTOR * camera_extent
    hi = SCALE_CAP_FACTOR * camera_extent
    return float(np.clip(raw, lo, hi))


def assign_dataset_scales(dataset: Dataset, rng=None) -> None:
    """Fill scale3d on every mask record in place."""
    for view in range(dataset.n_views):
        ms = dataset.masksets[view]
        for k, rec in enumerate(ms.records):
            rec.scale3d = assign_scale(ms.planes[k], dataset.depths[view],
                                       dataset.cameras[view],
                                       dataset.camera_extent, rng=rng)


@dataclass
class ScaleNormalizer:
    """Monotone empirical-CDF map from world-unit sizes to [0, 1].

    Stores evenly spaced quantiles of the fitted size distribution and
    linearly interpolates between them; values outside the observed range
    clamp to 0 or 1.
    """

    quantiles: np.ndarray
    s_cap: float

    def __post_init__(self):
        self.quantiles = np.asarray(self.quantiles, dtype=np.float64)
        if np.any(np.diff(self.quantiles) < 0):
            raise ScaleError("reference quantiles must be nondecreasing")

    @property
    def n_quantiles(self) -> int:
        return self.quantiles.size

    def transform(self, s):
        s = np.minimum(np.asarray(s, dtype=np.float64), self.s_cap)
        cdf = np.linspace(0.0, 1.0, self.n_quantiles)
        return np.interp(s, self.quantiles, cdf)

    def to_dict(self) -> dict:
        return {"quantiles": self.quantiles.tolist(), "s_cap": self.s_cap}

    @classmethod
    def from_dict(cls, d: dict) -> "ScaleNormalizer":
        return cls(quantiles=np.array(d["quantiles"]), s_cap=float(d["s_cap"]))


def fit_normalizer(all_scales, s_cap: float,
                   n_quantiles: int = 1000) -> ScaleNormalizer:
    scales = np.asarray(all_scales, dtype=np.float64)
    if scales.size < 2 or np.unique(scales).size < 2:
        raise ScaleError("need >= 2 distinct scales to fit a normalizer")
    probs = np.linspace(0.0, 1.0, n_quantiles)
    refs = np.quantile(scales, probs)
    return ScaleNormalizer(quantiles=refs, s_cap=s_cap)
