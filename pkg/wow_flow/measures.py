"""
Empirical measures and their vector representations.

A ``PointCloud`` stores the uniform empirical measure (1/N) sum_j delta_{x_j} as a d x N
float64 matrix whose column j is the point x_j. Column order is a representation detail:
two clouds describe the same measure when they agree up to a column permutation, which is
what ``canonical_form`` and ``same_measure`` compare.
"""

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from wow_flow.errors import ShapeError

__all__ = [
    "PointCloud",
    "Permutation",
    "MetaBatch",
    "interpolate",
    "apply_permutation",
    "squared_euclidean_cost",
]


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Uniform empirical measure on ``count`` points in R^``dim``.

    Attributes:
        coords: float64 matrix of shape (dim, count); column j is point x_j.
    """

    coords: np.ndarray

    def __post_init__(self):
        coords = np.array(self.coords, dtype=np.float64, copy=True)
        if coords.ndim == 1:
            coords = coords.reshape(1, -1)
        if coords.ndim != 2:
            raise ShapeError(f"cloud coordinates must be a d x N matrix, got ndim={coords.ndim}")
        if coords.shape[0] < 1 or coords.shape[1] < 1:
            raise ShapeError(f"cloud must have d >= 1 and N >= 1, got shape {coords.shape}")
        if not np.all(np.isfinite(coords)):
            raise ShapeError("cloud coordinates must be finite")
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)

    @classmethod
    def from_points(cls, points: Sequence[Sequence[float]]) -> "PointCloud":
        """Build a cloud from a sequence of points (N x d, the transposed layout)."""
        return cls(np.asarray(points, dtype=np.float64).reshape(len(points), -1).T)

    @property
    def dim(self) -> int:
        return self.coords.shape[0]

    @property
    def count(self) -> int:
        return self.coords.shape[1]

    @property
    def points(self) -> np.ndarray:
        """N x d view (one row per point)."""
        return self.coords.T

    def canonical_form(self) -> np.ndarray:
        """Columns sorted lexicographically (first coordinate most significant)."""
        order = np.lexsort(self.coords[::-1])
        return self.coords[:, order]

    def same_measure(self, other: "PointCloud", atol: float = 1e-12) -> bool:
        """True when both clouds hold the same multiset of points up to ``atol``."""
        if self.coords.shape != other.coords.shape:
            return False
        return bool(np.allclose(self.canonical_form(), other.canonical_form(), rtol=0.0, atol=atol))

    def mean(self) -> np.ndarray:
        return self.coords.mean(axis=1)

    def min_pairwise_gap(self) -> float:
        """Smallest distance between two distinct columns (inf for a single point)."""
        if self.count < 2:
            return float("inf")
        dist = cdist(self.points, self.points)
        np.fill_diagonal(dist, np.inf)
        return float(dist.min())


@dataclass(frozen=True, eq=False)
class Permutation:
    """Bijection of {0, ..., N-1}; ``map[i]`` is the source column placed at position i."""

    map: np.ndarray

    def __post_init__(self):
        indices = np.array(self.map, dtype=np.int64, copy=True).ravel()
        if not np.array_equal(np.sort(indices), np.arange(indices.size)):
            raise ShapeError(f"not a permutation of 0..{indices.size - 1}")
        indices.setflags(write=False)
        object.__setattr__(self, "map", indices)

    @classmethod
    def identity(cls, size: int) -> "Permutation":
        return cls(np.arange(size))

    @property
    def size(self) -> int:
        return self.map.size

    def inverse(self) -> "Permutation":
        inv = np.empty_like(self.map)
        inv[self.map] = np.arange(self.size)
        return Permutation(inv)

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.map, np.arange(self.size)))

    def __eq__(self, other) -> bool:
        return isinstance(other, Permutation) and np.array_equal(self.map, other.map)

    def __hash__(self) -> int:
        return hash(self.map.tobytes())


@dataclass(frozen=True)
class MetaBatch:
    """A batch of B clouds sharing one ambient dimension (a discretized metameasure)."""

    clouds: Tuple[PointCloud, ...] = field(default_factory=tuple)

    def __post_init__(self):
        clouds = tuple(self.clouds)
        if not clouds:
            raise ShapeError("a MetaBatch needs at least one cloud")
        dims = {cloud.dim for cloud in clouds}
        if len(dims) != 1:
            raise ShapeError(f"all clouds in a batch must share dim, got {sorted(dims)}")
        object.__setattr__(self, "clouds", clouds)

    @classmethod
    def of(cls, clouds: Iterable[PointCloud]) -> "MetaBatch":
        return cls(tuple(clouds))

    @property
    def dim(self) -> int:
        return self.clouds[0].dim

    @property
    def counts(self) -> Tuple[int, ...]:
        return tuple(cloud.count for cloud in self.clouds)

    @property
    def uniform_count(self) -> int:
        """The shared point count; raises when the batch mixes counts."""
        counts = set(self.counts)
        if len(counts) != 1:
            raise ShapeError(f"batch mixes point counts {sorted(counts)}")
        return counts.pop()

    def stacked(self) -> np.ndarray:
        """B x d x N array (requires a uniform count)."""
        self.uniform_count
        return np.stack([cloud.coords for cloud in self.clouds])

    def __len__(self) -> int:
        return len(self.clouds)

    def __iter__(self) -> Iterator[PointCloud]:
        return iter(self.clouds)

    def __getitem__(self, index: int) -> PointCloud:
        return self.clouds[index]


def _check_same_shape(a: PointCloud, b: PointCloud) -> None:
    if a.dim != b.dim:
        raise ShapeError(f"dim mismatch: {a.dim} != {b.dim}")
    if a.count != b.count:
        raise ShapeError(f"count mismatch: {a.count} != {b.count}")


def interpolate(a: PointCloud, b: PointCloud, t: float) -> PointCloud:
    """
    Linear interpolation of column-matched clouds, (1 - t) a_j + t b_j per column.

    Raises:
        ShapeError: If dims or counts differ.
        ValueError: If ``t`` is outside [0, 1].
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    _check_same_shape(a, b)
    return PointCloud((1.0 - t) * a.coords + t * b.coords)


def apply_permutation(p: Permutation, c: PointCloud) -> PointCloud:
    """Reorder columns so that output column i is input column ``p.map[i]``."""
    if p.size != c.count:
        raise ShapeError(f"permutation size {p.size} != cloud count {c.count}")
    return PointCloud(c.coords[:, p.map])


def squared_euclidean_cost(a: PointCloud, b: PointCloud) -> np.ndarray:
    """N_a x N_b matrix of squared distances ||a_i - b_j||^2."""
    if a.dim != b.dim:
        raise ShapeError(f"dim mismatch: {a.dim} != {b.dim}")
    return cdist(a.points, b.points, "sqeuclidean")
