"""
Source and target metameasures: random batches of clouds for training and generation.

Kinds:

- ``pure_noise``: i.i.d. N(0, sigma^2) entries, sigma ~ Unif[sigma_low, sigma_high] per cloud
- ``barycentric_noise``: N(reference_ij, sigma^2) entries around the ordered reference vector,
  so every cloud comes out already aligned to the reference
- ``empirical``: clouds drawn from a dataset, downsampled to N points when larger
- ``circles``: rings of fixed radius whose centres move horizontally
"""

from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from data.container import CloudDataset, read_dataset
from data.generators import gen_circle_cloud, gen_gaussian_cloud
from wow_flow.errors import ConfigError, ShapeError
from wow_flow.linearized import ReferenceMeasure
from wow_flow.measures import MetaBatch, PointCloud
from wow_flow.utils.seeding import SeedLike, as_generator

__all__ = ["SourceKind", "SourceSpec", "EpochSampler", "draw_source", "downsample"]


class SourceKind(str, Enum):
    PURE_NOISE = "pure_noise"
    BARYCENTRIC_NOISE = "barycentric_noise"
    EMPIRICAL = "empirical"
    CIRCLES = "circles"

    @classmethod
    def parse(cls, value) -> "SourceKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            choices = ", ".join(kind.value for kind in cls)
            raise ConfigError(f"unknown source kind '{value}', expected one of: {choices}")


@dataclass(frozen=True)
class SourceSpec:
    """
    Description of a metameasure to draw clouds from.

    Attributes:
        kind: Which family to draw from.
        sigma_range: (low, high) bounds of the per-cloud noise level.
        ref: Reference measure (barycentric noise).
        dataset: Loaded dataset (empirical).
        dataset_path: Where ``dataset`` came from, kept for messages and config dumps.
        dim: Ambient dimension for pure noise and circles.
        center_range: Horizontal centre bounds for circles.
        offset: Vertical centre for circles.
        radius: Circle radius.
    """

    kind: SourceKind = SourceKind.PURE_NOISE
    sigma_range: Tuple[float, float] = (0.05, 0.15)
    ref: Optional[ReferenceMeasure] = None
    dataset: Optional[CloudDataset] = None
    dataset_path: Optional[str] = None
    dim: int = 2
    center_range: Tuple[float, float] = (-20.0, 20.0)
    offset: float = 0.0
    radius: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "kind", SourceKind.parse(self.kind))
        low, high = self.sigma_range
        if low < 0 or low > high:
            raise ConfigError(f"sigma range [{low}, {high}] must satisfy 0 <= low <= high")
        if self.center_range[0] > self.center_range[1]:
            raise ConfigError(f"center range {self.center_range} is empty")
        if self.kind is SourceKind.CIRCLES and not self.radius > 0:
            raise ConfigError(f"circle radius must be > 0, got {self.radius}")

    @classmethod
    def from_path(cls, path: str, **kwargs) -> "SourceSpec":
        """Empirical spec backed by a WOWDS1 file."""
        return cls(kind=SourceKind.EMPIRICAL, dataset=read_dataset(path), dataset_path=str(path), **kwargs)

    @property
    def cloud_dim(self) -> int:
        if self.kind is SourceKind.BARYCENTRIC_NOISE and self.ref is not None:
            return self.ref.dim
        if self.kind is SourceKind.EMPIRICAL and self.dataset is not None:
            return self.dataset.dim
        return self.dim

    @property
    def pre_aligned(self) -> bool:
        """True when drawn clouds come out in reference order."""
        return self.kind is SourceKind.BARYCENTRIC_NOISE

    def validate(self, count: Optional[int] = None) -> None:
        """
        Check that the spec can produce clouds of ``count`` points.

        Raises:
            ConfigError: For a missing reference or dataset, or a reference of the wrong size.
        """
        if self.kind is SourceKind.BARYCENTRIC_NOISE:
            if self.ref is None:
                raise ConfigError("barycentric_noise source requires a reference measure (ref)")
            if count is not None and self.ref.count != count:
                raise ConfigError(f"reference has {self.ref.count} points, source asked for {count}")
        if self.kind is SourceKind.EMPIRICAL:
            if self.dataset is None:
                raise ConfigError("empirical source requires a dataset path")
            if self.dataset.count == 0:
                raise ConfigError(f"dataset {self.dataset_path or '(in memory)'} is empty")
            if count is not None:
                small = [i for i, cloud in enumerate(self.dataset) if cloud.count < count]
                if small:
                    raise ConfigError(f"{len(small)} dataset clouds have fewer than {count} points")


class EpochSampler:
    """Dataset indices without replacement inside an epoch, reshuffled when the epoch runs out."""

    def __init__(self, size: int, seed: SeedLike = None):
        if size < 1:
            raise ShapeError("cannot sample from an empty dataset")
        self.size = size
        self.rng = as_generator(seed)
        self.epoch = 0
        self._order = self.rng.permutation(size)
        self._cursor = 0

    def next(self, count: int) -> np.ndarray:
        picked: List[int] = []
        while len(picked) < count:
            if self._cursor == self.size:
                self.epoch += 1
                self._order = self.rng.permutation(self.size)
                self._cursor = 0
            take = min(count - len(picked), self.size - self._cursor)
            picked.extend(self._order[self._cursor:self._cursor + take].tolist())
            self._cursor += take
        return np.asarray(picked, dtype=np.int64)


def downsample(cloud: PointCloud, count: int, rng: np.random.Generator) -> PointCloud:
    """Random subset of ``count`` columns (the cloud itself when it already has ``count``)."""
    if cloud.count < count:
        raise ShapeError(f"cannot downsample {cloud.count} points to {count}")
    if cloud.count == count:
        return cloud
    keep = np.sort(rng.choice(cloud.count, size=count, replace=False))
    return PointCloud(cloud.coords[:, keep])


def draw_source(
        spec: SourceSpec, count: int, batch: int, seed: SeedLike = None, indices: Optional[Sequence[int]] = None
) -> MetaBatch:
    """
    Draw ``batch`` clouds of ``count`` points from ``spec``.

    Args:
        spec: The metameasure.
        count: Points per cloud N.
        batch: Number of clouds B.
        seed: Seed or generator.
        indices: Dataset indices to use for empirical sources; uniform draws when omitted.

    Returns:
        MetaBatch: B clouds, deterministic given ``seed``.

    Raises:
        ConfigError: If the spec cannot produce N-point clouds.
    """
    if batch < 1 or count < 1:
        raise ShapeError(f"batch and count must be >= 1, got batch={batch}, count={count}")
    spec.validate(count)
    rng = as_generator(seed)
    low, high = spec.sigma_range

    if spec.kind is SourceKind.PURE_NOISE:
        sigmas = rng.uniform(low, high, size=batch)
        zeros = np.zeros((spec.dim, count))
        return MetaBatch(tuple(gen_gaussian_cloud(zeros, sigma, rng) for sigma in sigmas))

    if spec.kind is SourceKind.BARYCENTRIC_NOISE:
        sigmas = rng.uniform(low, high, size=batch)
        return MetaBatch(tuple(gen_gaussian_cloud(spec.ref.cloud.coords, sigma, rng) for sigma in sigmas))

    if spec.kind is SourceKind.CIRCLES:
        centers = rng.uniform(spec.center_range[0], spec.center_range[1], size=batch)
        clouds = []
        for h in centers:
            center = np.zeros(spec.dim)
            center[0] = h
            if spec.dim > 1:
                center[1] = spec.offset
            clouds.append(gen_circle_cloud(center, spec.radius, count, rng))
        return MetaBatch(tuple(clouds))

    dataset = spec.dataset
    if indices is None:
        indices = rng.integers(dataset.count, size=batch)
    if len(indices) != batch:
        raise ShapeError(f"{len(indices)} indices for a batch of {batch}")
    return MetaBatch(tuple(downsample(dataset[int(i)], count, rng) for i in indices))
