"""
Monte Carlo sliced Wasserstein distance and sliced inner plans.

Both clouds are projected on L unit directions; each 1D problem is solved by sorting. Sorting is
stable, so tied projections are matched in order of their original column index.
"""

from dataclasses import dataclass

import numpy as np

from wow_flow.errors import ShapeError
from wow_flow.measures import Permutation, PointCloud
from wow_flow.ot import InnerPlan
from wow_flow.utils.seeding import SeedLike, as_generator

__all__ = [
    "DEFAULT_SLICES",
    "DirectionSet",
    "sample_directions",
    "sliced_w2_samples",
    "sliced_w2",
    "sliced_plan",
]

DEFAULT_SLICES = 8
# projections are evaluated in chunks of this many directions to bound memory
_CHUNK = 16_384


@dataclass(frozen=True, eq=False)
class DirectionSet:
    """L unit vectors in R^d, stored as an (L, d) array."""

    vectors: np.ndarray

    def __post_init__(self):
        vectors = np.array(self.vectors, dtype=np.float64, copy=True)
        if vectors.ndim != 2 or vectors.shape[0] < 1 or vectors.shape[1] < 1:
            raise ShapeError(f"directions must be an (L, d) array with L, d >= 1, got {vectors.shape}")
        norms = np.linalg.norm(vectors, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ShapeError("directions must have unit norm")
        vectors.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)

    @classmethod
    def from_angles(cls, angles: np.ndarray) -> "DirectionSet":
        """Planar directions (cos a, sin a)."""
        angles = np.asarray(angles, dtype=np.float64).ravel()
        return cls(np.stack([np.cos(angles), np.sin(angles)], axis=1))

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def count(self) -> int:
        return self.vectors.shape[0]


def sample_directions(dim: int, count: int, seed: SeedLike = None) -> DirectionSet:
    """
    Draw ``count`` i.i.d. directions uniformly on the unit sphere of R^``dim``.

    Gaussian vectors are normalized; the (measure-zero) zero vector is redrawn.

    Raises:
        ValueError: If ``dim`` or ``count`` is below 1.
    """
    if dim < 1 or count < 1:
        raise ValueError(f"dim and count must be >= 1, got dim={dim}, count={count}")
    rng = as_generator(seed)
    vectors = rng.standard_normal((count, dim))
    norms = np.linalg.norm(vectors, axis=1)
    while np.any(norms == 0.0):
        zero = norms == 0.0
        vectors[zero] = rng.standard_normal((int(zero.sum()), dim))
        norms = np.linalg.norm(vectors, axis=1)
    return DirectionSet(vectors / norms[:, None])


def _check(a: PointCloud, b: PointCloud, dirs: DirectionSet) -> None:
    if a.dim != b.dim or a.count != b.count:
        raise ShapeError(f"clouds must share shape, got {a.coords.shape} and {b.coords.shape}")
    if dirs.dim != a.dim:
        raise ShapeError(f"direction dim {dirs.dim} != cloud dim {a.dim}")


def sliced_w2_samples(a: PointCloud, b: PointCloud, dirs: DirectionSet) -> np.ndarray:
    """Per-direction 1D squared Wasserstein distances, shape (L,)."""
    _check(a, b, dirs)
    values = np.empty(dirs.count)
    for start in range(0, dirs.count, _CHUNK):
        theta = dirs.vectors[start:start + _CHUNK]
        proj_a = np.sort(theta @ a.coords, axis=1)
        proj_b = np.sort(theta @ b.coords, axis=1)
        values[start:start + theta.shape[0]] = np.mean((proj_a - proj_b) ** 2, axis=1)
    return values


def sliced_w2(a: PointCloud, b: PointCloud, dirs: DirectionSet) -> float:
    """
    Monte Carlo sliced squared Wasserstein distance.

    Returns:
        float: (1/L) sum_l W2^2 of the projections of ``a`` and ``b`` on direction l.

    Raises:
        ShapeError: If the clouds or directions disagree in shape.
    """
    return float(sliced_w2_samples(a, b, dirs).mean())


def sliced_plan(a: PointCloud, b: PointCloud, dirs: DirectionSet) -> InnerPlan:
    """
    Average of the per-direction sort matchings.

    The result is returned as a permutation plan when every direction yields the same matching,
    otherwise as a dense plan.
    """
    _check(a, b, dirs)
    size = a.count
    proj_a = dirs.vectors @ a.coords
    proj_b = dirs.vectors @ b.coords
    order_a = np.argsort(proj_a, axis=1, kind="stable")
    order_b = np.argsort(proj_b, axis=1, kind="stable")

    matchings = np.empty_like(order_a)
    rows = np.arange(dirs.count)[:, None]
    matchings[rows, order_a] = order_b

    if np.all(matchings == matchings[0]):
        return InnerPlan.from_permutation(Permutation(matchings[0]))

    counts = np.zeros((size, size))
    np.add.at(counts, (np.broadcast_to(np.arange(size), matchings.shape), matchings), 1.0)
    return InnerPlan.from_dense(counts / (dirs.count * size))
