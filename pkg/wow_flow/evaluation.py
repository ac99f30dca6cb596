"""
Sample-quality metrics for generated point clouds.

- Chamfer distance and W2^2 between clouds
- nearest-neighbour accuracy (NNA) of a leave-one-out 1-NN classifier separating generated
  from real clouds; 0.5 means indistinguishable
- Gaussian KDE grids of 2D clouds over the unit square, written as ASCII PGM images
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from logging import getLogger
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.distance import cdist

from data.sources import downsample
from wow_flow.errors import ConfigError, ShapeError
from wow_flow.measures import MetaBatch, PointCloud
from wow_flow.ot import OTSolver, wasserstein2
from wow_flow.utils.csv_io import write_csv
from wow_flow.utils.seeding import child_rng

__all__ = [
    "Metric",
    "NNAReport",
    "NNASummary",
    "NNA_HEADER",
    "chamfer",
    "cloud_distance",
    "distance_matrix",
    "nna",
    "nna_repeated",
    "summarize_nna",
    "write_nna_csv",
    "kde_bandwidth",
    "kde_grid",
    "encode_pgm",
    "write_pgm",
]

logger = getLogger(__name__)

NNA_HEADER = ("metric", "euler_steps", "accuracy_mean", "accuracy_std", "n", "seed")

KDE_RESOLUTION = 64
KDE_PADDING = 0.15
KDE_SCALE = 0.9
PGM_MAXVAL = 255


class Metric(str, Enum):
    CHAMFER = "chamfer"
    OT = "ot"

    @classmethod
    def parse(cls, value) -> "Metric":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ConfigError(f"unknown metric '{value}', expected chamfer or ot")


@dataclass(frozen=True)
class NNAReport:
    metric: Metric
    accuracy: float
    n_generated: int
    n_real: int
    seed: Optional[int] = None

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError(f"accuracy {self.accuracy} outside [0, 1]")


@dataclass(frozen=True)
class NNASummary:
    """Mean and spread of repeated NNA runs, one CSV row."""

    metric: Metric
    euler_steps: Optional[int]
    accuracy_mean: float
    accuracy_std: float
    n: int
    seed: Optional[int]

    def row(self) -> Tuple:
        steps = "" if self.euler_steps is None else self.euler_steps
        seed = "" if self.seed is None else self.seed
        return self.metric.value, steps, f"{self.accuracy_mean:.6f}", f"{self.accuracy_std:.6f}", self.n, seed


def chamfer(a: PointCloud, b: PointCloud) -> float:
    """
    Sum of squared nearest-neighbour distances from a to b plus from b to a.

    Counts may differ.

    Raises:
        ShapeError: On a dimension mismatch.
    """
    if a.dim != b.dim:
        raise ShapeError(f"dimension mismatch: {a.dim} vs {b.dim}")
    cost = cdist(a.points, b.points, "sqeuclidean")
    return float(cost.min(axis=1).sum() + cost.min(axis=0).sum())


def cloud_distance(a: PointCloud, b: PointCloud, metric: Metric, solver: Optional[OTSolver] = None) -> float:
    if metric is Metric.CHAMFER:
        return chamfer(a, b)
    return wasserstein2(a, b, solver)[0]


def distance_matrix(
        clouds: Sequence[PointCloud], metric: Union[Metric, str], solver: Optional[OTSolver] = None, threads: int = 1
) -> np.ndarray:
    """
    Symmetric pairwise distances with a zero diagonal.

    Rows are computed in parallel and written back in row order.
    """
    metric = Metric.parse(metric)
    size = len(clouds)

    def row(i: int) -> np.ndarray:
        values = np.zeros(size)
        for j in range(i + 1, size):
            values[j] = cloud_distance(clouds[i], clouds[j], metric, solver)
        return values

    with ThreadPoolExecutor(max_workers=threads) as pool:
        rows = list(pool.map(row, range(size)))
    upper = np.vstack(rows) if rows else np.zeros((0, 0))
    return upper + upper.T


def nna(
        generated: MetaBatch,
        real: MetaBatch,
        metric: Union[Metric, str] = Metric.OT,
        solver: Optional[OTSolver] = None,
        threads: int = 1,
        seed: Optional[int] = None,
) -> NNAReport:
    """
    Leave-one-out 1-NN accuracy over the pooled generated and real clouds.

    Each pooled cloud is labelled by its nearest other cloud; ties go to the lowest pooled index
    (generated clouds come first).

    Args:
        generated: Generated clouds.
        real: Real clouds.
        metric: ``chamfer`` or ``ot``.
        solver: Inner solver for ``ot``; exact when omitted.
        threads: Workers for the distance matrix.
        seed: Recorded on the report.

    Returns:
        NNAReport: Fraction of pooled clouds whose nearest neighbour carries their own label.

    Raises:
        ShapeError: If either side has fewer than two clouds, dims differ, or ``ot`` sees unequal counts.
    """
    metric = Metric.parse(metric)
    if len(generated) < 2 or len(real) < 2:
        raise ShapeError(f"nna needs at least two clouds per side, got {len(generated)} and {len(real)}")
    if generated.dim != real.dim:
        raise ShapeError(f"dimension mismatch: {generated.dim} vs {real.dim}")
    pooled = list(generated) + list(real)
    if metric is Metric.OT and len({cloud.count for cloud in pooled}) != 1:
        raise ShapeError("ot nna needs equal point counts; downsample first")

    labels = np.array([0] * len(generated) + [1] * len(real))
    distances = distance_matrix(pooled, metric, solver, threads)
    np.fill_diagonal(distances, np.inf)
    nearest = np.argmin(distances, axis=1)
    accuracy = float(np.mean(labels[nearest] == labels))
    logger.debug(f"nna {metric.value}: {accuracy:.4f} over {len(generated)} + {len(real)} clouds")
    return NNAReport(metric, accuracy, len(generated), len(real), seed)


def _equalize(clouds: List[PointCloud], rng: np.random.Generator) -> List[PointCloud]:
    count = min(cloud.count for cloud in clouds)
    return [downsample(cloud, count, rng) for cloud in clouds]


def nna_repeated(
        generated: Sequence[PointCloud],
        real: Sequence[PointCloud],
        metric: Union[Metric, str],
        n: int,
        repetitions: int,
        seed: int = 0,
        solver: Optional[OTSolver] = None,
        threads: int = 1,
) -> List[NNAReport]:
    """
    NNA over ``repetitions`` random subsets of ``n`` clouds per side.

    Subsets are drawn without replacement from ``child_rng(seed, "nna", rep)``; for ``ot`` all clouds
    of a repetition are randomly downsampled to the smallest count.

    Raises:
        ShapeError: If either side holds fewer than ``n`` clouds.
    """
    metric = Metric.parse(metric)
    if n > len(generated) or n > len(real):
        raise ShapeError(f"cannot draw {n} clouds from {len(generated)} generated and {len(real)} real")
    reports = []
    for rep in range(repetitions):
        rng = child_rng(seed, "nna", rep)
        gen = [generated[int(i)] for i in rng.choice(len(generated), size=n, replace=False)]
        ref = [real[int(i)] for i in rng.choice(len(real), size=n, replace=False)]
        if metric is Metric.OT:
            pooled = _equalize(gen + ref, rng)
            gen, ref = pooled[:n], pooled[n:]
        reports.append(nna(MetaBatch(tuple(gen)), MetaBatch(tuple(ref)), metric, solver, threads, seed))
    return reports


def summarize_nna(reports: Sequence[NNAReport], euler_steps: Optional[int] = None) -> NNASummary:
    if not reports:
        raise ValueError("no reports to summarize")
    metrics = {report.metric for report in reports}
    if len(metrics) != 1:
        raise ValueError(f"cannot summarize mixed metrics {sorted(m.value for m in metrics)}")
    accuracies = np.array([report.accuracy for report in reports])
    return NNASummary(
        reports[0].metric,
        euler_steps,
        float(accuracies.mean()),
        float(accuracies.std()),
        reports[0].n_generated,
        reports[0].seed,
    )


def write_nna_csv(path: Union[str, Path], summaries: Iterable[NNASummary]) -> Path:
    return write_csv(path, NNA_HEADER, (summary.row() for summary in summaries))


def kde_bandwidth(c: PointCloud) -> float:
    """Isotropic bandwidth 0.9 * N^(-1/6), independent of the spread of the cloud."""
    return KDE_SCALE * c.count ** (-1.0 / 6.0)


def kde_grid(c: PointCloud, resolution: int = KDE_RESOLUTION, padding_frac: float = KDE_PADDING) -> np.ndarray:
    """
    Gaussian KDE of a 2D cloud on a ``resolution`` x ``resolution`` grid over [0, 1]^2.

    The grid is extended by ``padding_frac`` on each side, normalized over the padded area and
    cropped back. Row 0 is the top edge (y = 1), matching image orientation.

    Raises:
        ShapeError: If the cloud is not 2D.
    """
    if c.dim != 2:
        raise ShapeError(f"kde grids need 2D clouds, got dim {c.dim}")
    if resolution < 1 or padding_frac < 0:
        raise ValueError(f"invalid grid: resolution={resolution}, padding_frac={padding_frac}")
    pad = int(round(padding_frac * resolution))
    cells = np.arange(-pad, resolution + pad)
    centers = (cells + 0.5) / resolution
    xs, ys = np.meshgrid(centers, centers[::-1])
    grid_points = np.column_stack([xs.ravel(), ys.ravel()])

    h = kde_bandwidth(c)
    sq = cdist(grid_points, c.points, "sqeuclidean")
    density = np.exp(-sq / (2.0 * h * h)).sum(axis=1) / (2.0 * np.pi * h * h * c.count)
    padded = density.reshape(len(cells), len(cells))
    total = padded.sum()
    if total > 0:
        padded = padded / (total / (len(cells) ** 2))
    return padded[pad:pad + resolution, pad:pad + resolution]


def encode_pgm(grid: np.ndarray) -> str:
    """ASCII PGM (P2), values rescaled linearly onto 0..255."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2 or not np.all(np.isfinite(grid)):
        raise ShapeError("pgm needs a finite 2D grid")
    low, high = grid.min(), grid.max()
    if high > low:
        levels = np.rint((grid - low) / (high - low) * PGM_MAXVAL).astype(int)
    else:
        levels = np.zeros(grid.shape, dtype=int)
    rows, cols = grid.shape
    lines = ["P2", f"{cols} {rows}", str(PGM_MAXVAL)]
    lines += [" ".join(str(v) for v in row) for row in levels]
    return "\n".join(lines) + "\n"


def write_pgm(path: Union[str, Path], grid: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(encode_pgm(grid), encoding="ascii")
    return path
