"""Grayscale images as 2D histograms on the unit square, sampled into point clouds."""

from typing import List, Optional

import numpy as np

from wow_flow.errors import DataFormatError, ShapeError
from wow_flow.measures import PointCloud
from wow_flow.utils.seeding import SeedLike, as_generator, child_rng

__all__ = ["image_to_cloud", "images_to_clouds"]


def image_to_cloud(image: np.ndarray, count: int, seed: SeedLike = None) -> PointCloud:
    """
    Draw ``count`` points from the normalized intensity histogram of ``image``.

    Pixel (row, col) of an H x W image covers the cell [col/W, (col+1)/W] x [1-(row+1)/H, 1-row/H],
    so the first row is at the top. Each draw lands uniformly inside its pixel's cell.

    Args:
        image: H x W array of non-negative intensities.
        count: Number of points N.
        seed: Seed or generator.

    Returns:
        PointCloud: 2 x N cloud inside [0, 1]^2.

    Raises:
        ShapeError: If the image is not 2D or ``count`` is not positive.
        DataFormatError: If the intensities are negative or non-finite, or the image is blank.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ShapeError(f"image must be H x W, got shape {image.shape}")
    if np.any(image < 0) or not np.all(np.isfinite(image)):
        raise DataFormatError("image intensities must be finite and non-negative", offset=None)
    total = image.sum()
    if not total > 0:
        raise DataFormatError("image has zero total mass", offset=None)
    if count < 1:
        raise ShapeError(f"count must be >= 1, got {count}")

    rng = as_generator(seed)
    height, width = image.shape
    cells = rng.choice(height * width, size=count, p=(image / total).ravel())
    rows, cols = np.divmod(cells, width)
    jitter = rng.random((2, count))
    x = (cols + jitter[0]) / width
    y = 1.0 - (rows + jitter[1]) / height
    return PointCloud(np.vstack([x, y]))


def images_to_clouds(images: np.ndarray, count: int, seed: int = 0, limit: Optional[int] = None) -> List[PointCloud]:
    """Convert a stack of images, each with its own child stream so any image can be redrawn alone."""
    images = np.asarray(images)
    if limit is not None:
        images = images[:limit]
    return [image_to_cloud(image, count, child_rng(seed, "image", index)) for index, image in enumerate(images)]
