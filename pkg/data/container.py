"""
The WOWDS1 cloud container.

Layout (little-endian):

- magic ``b"WOWDS1\\0"``
- version u32, dim u32, cloud count u32, flags u32 (bit 0: alignment permutations present)
- per cloud: N u32, coordinates f64[d * N] row-major (d rows of N), then N u32 permutation
  indices when flag bit 0 is set

A reference measure is stored as a one-cloud container.
"""

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Optional, Sequence, Tuple, Union

import numpy as np

from wow_flow.errors import DataFormatError, ShapeError
from wow_flow.linearized import ReferenceMeasure
from wow_flow.measures import MetaBatch, Permutation, PointCloud
from wow_flow.utils.binary import ByteReader

__all__ = [
    "DATASET_MAGIC",
    "DATASET_VERSION",
    "FLAG_PERMUTATIONS",
    "CloudDataset",
    "encode_dataset",
    "decode_dataset",
    "write_dataset",
    "read_dataset",
    "write_reference",
    "read_reference",
]

DATASET_MAGIC = b"WOWDS1\0"
DATASET_VERSION = 1
FLAG_PERMUTATIONS = 0x1


@dataclass(frozen=True)
class CloudDataset:
    """
    An ordered collection of clouds sharing one dimension.

    Attributes:
        dim: Ambient dimension d (kept for empty datasets).
        clouds: The clouds.
        perms: Optional alignment permutation per cloud.
    """

    dim: int
    clouds: Tuple[PointCloud, ...] = field(default_factory=tuple)
    perms: Optional[Tuple[Permutation, ...]] = None

    def __post_init__(self):
        clouds = tuple(self.clouds)
        object.__setattr__(self, "clouds", clouds)
        bad = [index for index, cloud in enumerate(clouds) if cloud.dim != self.dim]
        if bad:
            raise ShapeError(f"clouds {bad} do not have dim {self.dim}")
        if self.perms is not None:
            perms = tuple(self.perms)
            if len(perms) != len(clouds):
                raise ShapeError(f"{len(perms)} permutations for {len(clouds)} clouds")
            for index, (cloud, perm) in enumerate(zip(clouds, perms)):
                if perm.size != cloud.count:
                    raise ShapeError(f"permutation {index} has size {perm.size}, cloud has {cloud.count} points")
            object.__setattr__(self, "perms", perms)

    @classmethod
    def of(cls, clouds: Sequence[PointCloud], perms: Optional[Sequence[Permutation]] = None) -> "CloudDataset":
        if not clouds:
            raise ShapeError("cannot infer dim from an empty cloud list")
        return cls(clouds[0].dim, tuple(clouds), None if perms is None else tuple(perms))

    @property
    def count(self) -> int:
        return len(self.clouds)

    @property
    def has_perms(self) -> bool:
        return self.perms is not None

    def with_perms(self, perms: Optional[Sequence[Permutation]]) -> "CloudDataset":
        return replace(self, perms=None if perms is None else tuple(perms))

    def batch(self, indices: Sequence[int]) -> MetaBatch:
        return MetaBatch(tuple(self.clouds[int(i)] for i in indices))

    def __len__(self) -> int:
        return len(self.clouds)

    def __iter__(self) -> Iterator[PointCloud]:
        return iter(self.clouds)

    def __getitem__(self, index: int) -> PointCloud:
        return self.clouds[index]


def encode_dataset(ds: CloudDataset) -> bytes:
    """Serialize a dataset to WOWDS1 bytes."""
    flags = FLAG_PERMUTATIONS if ds.has_perms else 0
    parts = [DATASET_MAGIC, struct.pack("<IIII", DATASET_VERSION, ds.dim, ds.count, flags)]
    for index, cloud in enumerate(ds.clouds):
        parts.append(struct.pack("<I", cloud.count))
        parts.append(np.ascontiguousarray(cloud.coords, dtype="<f8").tobytes(order="C"))
        if ds.has_perms:
            parts.append(np.ascontiguousarray(ds.perms[index].map, dtype="<u4").tobytes())
    return b"".join(parts)


def decode_dataset(payload: bytes) -> CloudDataset:
    """
    Parse WOWDS1 bytes.

    Raises:
        DataFormatError: On a bad magic, unknown version or flags, truncation, trailing bytes,
            non-finite coordinates or invalid permutations; the message carries the byte offset.
    """
    reader = ByteReader(payload, "dataset")
    magic = reader.take(len(DATASET_MAGIC), "magic")
    if magic != DATASET_MAGIC:
        raise DataFormatError(f"bad dataset magic {magic!r}, expected {DATASET_MAGIC!r}", offset=0)
    header_offset = reader.offset
    version = reader.u32("version")
    if version != DATASET_VERSION:
        raise DataFormatError(f"unsupported dataset version {version}", offset=header_offset)
    dim = reader.u32("dim")
    count = reader.u32("cloud count")
    flags_offset = reader.offset
    flags = reader.u32("flags")
    if flags & ~FLAG_PERMUTATIONS:
        raise DataFormatError(f"unknown dataset flags 0x{flags:08x}", offset=flags_offset)
    if count and dim < 1:
        raise DataFormatError(f"dataset with {count} clouds declares dim {dim}", offset=header_offset)

    with_perms = bool(flags & FLAG_PERMUTATIONS)
    clouds = []
    perms = [] if with_perms else None
    for index in range(count):
        cloud_offset = reader.offset
        points = reader.u32(f"cloud {index} size")
        coords = reader.array("<f8", dim * points, f"cloud {index} coordinates")
        try:
            clouds.append(PointCloud(coords.astype(np.float64).reshape(dim, points)))
        except ShapeError as err:
            raise DataFormatError(f"cloud {index} is invalid: {err}", offset=cloud_offset) from err
        if with_perms:
            perm_offset = reader.offset
            indices = reader.array("<u4", points, f"cloud {index} permutation")
            try:
                perms.append(Permutation(indices.astype(np.int64)))
            except ShapeError as err:
                raise DataFormatError(f"cloud {index} permutation is invalid: {err}", offset=perm_offset) from err
    reader.expect_end()
    return CloudDataset(dim, tuple(clouds), None if perms is None else tuple(perms))


def write_dataset(path: Union[str, Path], ds: CloudDataset) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_dataset(ds))
    return path


def read_dataset(path: Union[str, Path]) -> CloudDataset:
    return decode_dataset(Path(path).read_bytes())


def write_reference(path: Union[str, Path], ref: ReferenceMeasure) -> Path:
    """Store a reference measure as a one-cloud container."""
    return write_dataset(path, CloudDataset.of([ref.cloud]))


def read_reference(path: Union[str, Path]) -> ReferenceMeasure:
    """
    Load a reference measure from a one-cloud container.

    Raises:
        DataFormatError: If the container does not hold exactly one cloud with distinct columns.
    """
    ds = read_dataset(path)
    if ds.count != 1:
        raise DataFormatError(f"reference container must hold one cloud, found {ds.count}", offset=0)
    try:
        return ReferenceMeasure(ds[0])
    except ShapeError as err:
        raise DataFormatError(f"reference cloud is invalid: {err}", offset=0) from err
