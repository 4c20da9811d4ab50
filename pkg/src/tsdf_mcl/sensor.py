"""Endpoint sensor model: per-point hit likelihoods over TSDF distances.

The likelihood of a scan point is a zero-mean Gaussian density evaluated at
the signed distance the map stores for the point's world position. Because
distances are clamped to the truncation band, the density can be tabulated
once over that band and reused for every lookup, avoiding per-point
exponentials during filtering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def point_likelihood(distance, sigma: float):
    """Gaussian density (1/sqrt(2 pi sigma^2)) exp(-d^2 / (2 sigma^2)).

    Accepts a scalar or array distance; sigma must be positive.
    """
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    d = np.asarray(distance, dtype=float)
    out = np.exp(-0.5 * d * d / (sigma * sigma)) / math.sqrt(2.0 * math.pi * sigma * sigma)
    return out.item() if out.ndim == 0 else out


@dataclass(frozen=True)
class LikelihoodTable:
    """Precomputed hit likelihoods over quantized distances in [-d_max, d_max].

    Entry k corresponds to distance (k - center) * resolution; queries are
    rounded to the nearest entry, so the absolute error of a lookup is at
    most lipschitz_bound() * resolution / 2.
    """

    sigma: float
    resolution: float
    values: np.ndarray
    log_values: np.ndarray

    @property
    def center(self) -> int:
        return (self.values.size - 1) // 2

    @property
    def d_max(self) -> float:
        return self.center * self.resolution

    def _indices(self, distance) -> np.ndarray:
        idx = np.rint(np.asarray(distance, dtype=float) / self.resolution).astype(np.int64)
        return np.clip(idx + self.center, 0, self.values.size - 1)

    def lookup(self, distance):
        out = self.values.take(self._indices(distance))
        return out.item() if out.ndim == 0 else out

    def lookup_log(self, distance):
        out = self.log_values.take(self._indices(distance))
        return out.item() if out.ndim == 0 else out

    def lipschitz_bound(self) -> float:
        """Largest |d/dd likelihood|, attained at d = sigma."""
        return point_likelihood(0.0, self.sigma) * math.exp(-0.5) / self.sigma


def build_likelihood_lut(sigma: float, truncation: float, lut_resolution: float) -> LikelihoodTable:
    """Tabulate the endpoint likelihood over [-truncation, +truncation].

    The grid is symmetric about zero and extends to the first multiple of
    lut_resolution at or beyond the truncation, so every clamped distance is
    covered.
    """
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    if lut_resolution <= 0.0:
        raise ValueError("lut_resolution must be positive")
    if truncation <= 0.0:
        raise ValueError("truncation must be positive")
    half = int(math.ceil(truncation / lut_resolution - 1e-12))
    grid = (np.arange(2 * half + 1) - half) * lut_resolution
    values = point_likelihood(grid, sigma)
    return LikelihoodTable(sigma=float(sigma), resolution=float(lut_resolution),
                           values=values, log_values=np.log(values))


@dataclass(frozen=True)
class SensorModelParams:
    """Configuration of the endpoint model for one sensor-update pass.

    subsample_stride keeps every stride-th scan point; lut switches the
    likelihood evaluation to the precomputed table; interpolate switches the
    map read from nearest-cell to trilinear.
    """

    sigma: float
    subsample_stride: int = 4
    lut: LikelihoodTable | None = None
    interpolate: bool = False

    def __post_init__(self):
        if self.sigma <= 0.0:
            raise ValueError("sigma must be positive")
        if self.subsample_stride < 1:
            raise ValueError("subsample_stride must be >= 1")
