"""Synthetic cloud generators."""

from typing import Sequence

import numpy as np

from wow_flow.errors import ShapeError
from wow_flow.measures import PointCloud
from wow_flow.utils.seeding import SeedLike, as_generator

__all__ = ["gen_circle_cloud", "gen_uniform_cloud", "gen_gaussian_cloud"]


def gen_circle_cloud(center: Sequence[float], radius: float, count: int, seed: SeedLike = None) -> PointCloud:
    """
    ``count`` i.i.d. points on the circle (sphere in higher dimension) of ``radius`` around ``center``.

    Gaussian vectors are normalized, scaled and shifted.

    Raises:
        ShapeError: If ``radius`` is not positive or ``count`` < 1.
    """
    if not radius > 0:
        raise ShapeError(f"radius must be > 0, got {radius}")
    if count < 1:
        raise ShapeError(f"count must be >= 1, got {count}")
    rng = as_generator(seed)
    center = np.asarray(center, dtype=np.float64).reshape(-1, 1)
    noise = rng.standard_normal((center.shape[0], count))
    norms = np.linalg.norm(noise, axis=0)
    while np.any(norms == 0.0):
        zero = norms == 0.0
        noise[:, zero] = rng.standard_normal((center.shape[0], int(zero.sum())))
        norms = np.linalg.norm(noise, axis=0)
    return PointCloud(center + radius * noise / norms)


def gen_uniform_cloud(dim: int, count: int, seed: SeedLike = None) -> PointCloud:
    """``count`` i.i.d. uniform points in [0, 1]^dim."""
    return PointCloud(as_generator(seed).random((dim, count)))


def gen_gaussian_cloud(mean: np.ndarray, sigma: float, seed: SeedLike = None) -> PointCloud:
    """Entries drawn i.i.d. from N(mean_ij, sigma^2); ``mean`` is a d x N matrix."""
    mean = np.asarray(mean, dtype=np.float64)
    return PointCloud(mean + sigma * as_generator(seed).standard_normal(mean.shape))
