"""
Reference barycenter, alignment to the reference, and the lazy linear divergence.

Every cloud of a dataset is aligned once against a fixed reference cloud: its columns are
reordered by the optimal matching onto the reference. The lazy linear divergence between a
source vector and an aligned target is then a plain mean squared difference, with no transport
solve at training time.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from logging import getLogger
from typing import List, Sequence, Tuple

import numpy as np

from wow_flow.errors import ShapeError
from wow_flow.measures import MetaBatch, Permutation, PointCloud, squared_euclidean_cost
from wow_flow.ot import InnerPlan, solve_exact
from wow_flow.utils.seeding import SeedLike, as_generator

__all__ = [
    "ReferenceMeasure",
    "compute_barycenter",
    "align_to_reference",
    "align_batch",
    "llw2",
    "llw_inner_plan",
    "DUPLICATE_JITTER",
]

logger = getLogger(__name__)

DUPLICATE_JITTER = 1e-9


@dataclass(frozen=True)
class ReferenceMeasure:
    """
    Barycenter cloud whose column order defines the reference vector.

    Attributes:
        cloud: The reference support; column i is reference point i.
        jittered: True when duplicate columns had to be separated.
        history: Barycenter objective per iteration (empty for a reference loaded from disk).
    """

    cloud: PointCloud
    jittered: bool = False
    history: Tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.cloud.min_pairwise_gap() <= 0.0:
            raise ShapeError("reference columns must be pairwise distinct")

    @property
    def dim(self) -> int:
        return self.cloud.dim

    @property
    def count(self) -> int:
        return self.cloud.count

    @property
    def vector(self) -> np.ndarray:
        """The ordered reference vector, point-major (x_0, x_1, ...)."""
        return self.cloud.points.ravel()


def _separate_duplicates(coords: np.ndarray, rng: np.random.Generator) -> Tuple[np.ndarray, bool]:
    """Jitter every repeated column after its first occurrence."""
    def repeated(values: np.ndarray) -> np.ndarray:
        _, first = np.unique(values.T, axis=0, return_index=True)
        mask = np.ones(values.shape[1], dtype=bool)
        mask[first] = False
        return mask

    duplicate = repeated(coords)
    if not duplicate.any():
        return coords, False
    coords = coords.copy()
    while duplicate.any():
        coords[:, duplicate] += DUPLICATE_JITTER * rng.standard_normal((coords.shape[0], int(duplicate.sum())))
        duplicate = repeated(coords)
    return coords, True


def _matchings(reference: PointCloud, samples: Sequence[PointCloud], threads: int) -> List[Tuple[np.ndarray, float]]:
    def solve(sample: PointCloud) -> Tuple[np.ndarray, float]:
        plan, total = solve_exact(squared_euclidean_cost(reference, sample))
        return plan.matching, total

    if threads <= 1:
        return [solve(sample) for sample in samples]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(solve, samples))


def compute_barycenter(
        samples: MetaBatch,
        support_size: int,
        max_iter: int = 100,
        tol: float = 1e-9,
        seed: SeedLike = None,
        threads: int = 1,
) -> ReferenceMeasure:
    """
    Free-support barycenter of equal-size clouds by fixed-point (Lloyd) iteration.

    Starting from one randomly chosen sample, each iteration matches the current support to
    every sample with an exact assignment and moves each support point to the mean of its
    matched points. The objective sum_b W2^2(rho, nu_b) never increases.

    Args:
        samples: The clouds to average; all must have ``support_size`` points.
        support_size: N, the size of the returned support.
        max_iter: Iteration budget.
        tol: Stop once no support point moves farther than this.
        seed: Seed for the initial sample and duplicate jitter.
        threads: Workers for the per-sample assignments.

    Returns:
        ReferenceMeasure: The barycenter with its objective history.

    Raises:
        ShapeError: If the batch is empty or any count differs from ``support_size``.
    """
    if len(samples) == 0:
        raise ShapeError("barycenter needs at least one sample")
    bad = [index for index, count in enumerate(samples.counts) if count != support_size]
    if bad:
        raise ShapeError(f"samples {bad} do not have support_size={support_size} points")

    rng = as_generator(seed)
    current = samples[int(rng.integers(len(samples)))].coords.copy()
    history: List[float] = []

    for iteration in range(max_iter):
        matched = _matchings(PointCloud(current), samples.clouds, threads)
        history.append(float(sum(total for _, total in matched)))
        updated = np.mean([sample.coords[:, matching] for sample, (matching, _) in zip(samples, matched)], axis=0)
        movement = float(np.linalg.norm(updated - current, axis=0).max())
        current = updated
        logger.debug(f"barycenter iteration {iteration}: objective {history[-1]:.6g}, movement {movement:.3e}")
        if movement < tol:
            break

    history.append(float(sum(total for _, total in _matchings(PointCloud(current), samples.clouds, threads))))
    current, jittered = _separate_duplicates(current, rng)
    if jittered:
        logger.warning("barycenter had duplicate columns; separated them with jitter")
    logger.info(f"barycenter of {len(samples)} clouds: objective {history[0]:.6g} -> {history[-1]:.6g}")
    return ReferenceMeasure(PointCloud(current), jittered=jittered, history=tuple(history))


def align_to_reference(c: PointCloud, ref: ReferenceMeasure) -> Permutation:
    """
    Optimal matching of ``c`` onto the reference.

    Returns:
        Permutation: ``p`` with column i of ``apply_permutation(p, c)`` matched to reference point i.

    Raises:
        ShapeError: If ``c`` and the reference differ in dim or count.
    """
    if c.dim != ref.dim or c.count != ref.count:
        raise ShapeError(f"cloud shape {c.coords.shape} does not match reference {ref.cloud.coords.shape}")
    plan, _ = solve_exact(squared_euclidean_cost(ref.cloud, c))
    return plan.permutation


def align_batch(batch: Sequence[PointCloud], ref: ReferenceMeasure, threads: int = 1) -> List[Permutation]:
    """Alignment permutations for a whole dataset, in input order."""
    if threads <= 1:
        return [align_to_reference(cloud, ref) for cloud in batch]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(lambda cloud: align_to_reference(cloud, ref), batch))


def _check_lazy(x_mu: PointCloud, x_nu: PointCloud, perm_nu: Permutation) -> None:
    if x_mu.coords.shape != x_nu.coords.shape:
        raise ShapeError(f"shape mismatch: {x_mu.coords.shape} != {x_nu.coords.shape}")
    if perm_nu.size != x_nu.count:
        raise ShapeError(f"permutation size {perm_nu.size} != cloud count {x_nu.count}")


def llw2(x_mu: PointCloud, x_nu: PointCloud, perm_nu: Permutation) -> float:
    """
    Lazy linear divergence: mean over i of ||x_mu[:, i] - x_nu[:, perm_nu[i]]||^2.

    ``x_mu`` is taken to be already in reference order; ``perm_nu`` aligns ``x_nu``. The value
    is the cost of a feasible matching, so it never undercuts the exact W2^2.
    """
    _check_lazy(x_mu, x_nu, perm_nu)
    diff = x_mu.coords - x_nu.coords[:, perm_nu.map]
    return float(np.mean(np.sum(diff * diff, axis=0)))


def llw_inner_plan(x_mu: PointCloud, x_nu: PointCloud, perm_nu: Permutation) -> InnerPlan:
    """Permutation plan pairing column i of ``x_mu`` with column ``perm_nu[i]`` of ``x_nu``."""
    _check_lazy(x_mu, x_nu, perm_nu)
    return InnerPlan.from_permutation(perm_nu)
