"""
Couplings between batches of clouds.

An outer plan pairs source clouds with target clouds; an inner plan then pairs the points of
each matched cloud pair. The flow-matching loss consumes pairs drawn from the outer plan by
multinomial sampling, each carrying its inner plan.

Four families are available for both levels:

- ``ind``: the independent (product) plan
- ``w``: exact (or entropic) Wasserstein transport
- ``sw``: sliced Wasserstein with fresh random directions on every call
- ``llw``: lazy linear matching through a fixed reference, reusing precomputed alignments
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from logging import getLogger
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from wow_flow.errors import ConfigError, CouplingError, ShapeError
from wow_flow.linearized import ReferenceMeasure, align_batch, llw_inner_plan
from wow_flow.measures import MetaBatch, Permutation, PointCloud, apply_permutation
from wow_flow.ot import InnerPlan, OTSolver, solve_exact, wasserstein2
from wow_flow.sliced import DEFAULT_SLICES, sample_directions, sliced_plan
from wow_flow.utils.seeding import SeedLike, as_generator

__all__ = [
    "CouplingKind",
    "CouplingConfig",
    "OuterPlan",
    "MatchedPair",
    "PairedBatch",
    "outer_cost_matrix",
    "solve_outer",
    "inner_plan",
    "sample_paired_batch",
    "draw_matched_points",
    "wow2",
]

logger = getLogger(__name__)

_PLAN_ATOL = 1e-9


class CouplingKind(str, Enum):
    IND = "ind"
    W = "w"
    SW = "sw"
    LLW = "llw"

    @classmethod
    def parse(cls, value) -> "CouplingKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            choices = ", ".join(kind.value for kind in cls)
            raise ConfigError(f"unknown coupling '{value}', expected one of: {choices}")


@dataclass(frozen=True)
class CouplingConfig:
    """
    Outer and inner coupling choice.

    Attributes:
        outer: Family used to pair clouds across the two batches.
        inner: Family used to pair points inside a matched cloud pair.
        slices: Number of directions for sliced couplings.
        sinkhorn_reg: Entropic regularization for ``w``; None selects the exact solver.
        sinkhorn_max_iter: Sinkhorn iteration budget.
        sinkhorn_tol: Sinkhorn marginal tolerance.
        threads: Workers for outer cost matrices.
    """

    outer: CouplingKind = CouplingKind.IND
    inner: CouplingKind = CouplingKind.IND
    slices: int = DEFAULT_SLICES
    sinkhorn_reg: Optional[float] = None
    sinkhorn_max_iter: int = 10_000
    sinkhorn_tol: float = 1e-9
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "outer", CouplingKind.parse(self.outer))
        object.__setattr__(self, "inner", CouplingKind.parse(self.inner))
        if self.slices < 1:
            raise ConfigError(f"slices must be >= 1, got {self.slices}")
        if self.sinkhorn_reg is not None and not self.sinkhorn_reg > 0:
            raise ConfigError(f"sinkhorn_reg must be > 0, got {self.sinkhorn_reg}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")

    @property
    def requires_reference(self) -> bool:
        return CouplingKind.LLW in (self.outer, self.inner)

    @property
    def solver(self) -> OTSolver:
        if self.sinkhorn_reg is None:
            return OTSolver.exact()
        return OTSolver.sinkhorn(self.sinkhorn_reg, self.sinkhorn_max_iter, self.sinkhorn_tol)

    @property
    def label(self) -> str:
        return f"({self.outer.value},{self.inner.value})"

    def check_reference(self, ref: Optional[ReferenceMeasure]) -> None:
        """Raise ConfigError when an llw coupling is configured without a reference."""
        if self.requires_reference and ref is None:
            raise ConfigError(f"coupling {self.label} uses llw and requires a reference measure (ref)")


@dataclass(frozen=True, eq=False)
class OuterPlan:
    """B x B plan between two batches; row and column sums equal 1/B."""

    weights: np.ndarray

    def __post_init__(self):
        weights = np.array(self.weights, dtype=np.float64, copy=True)
        if weights.ndim != 2 or weights.shape[0] != weights.shape[1] or weights.shape[0] == 0:
            raise ShapeError(f"outer plan must be a non-empty square matrix, got shape {weights.shape}")
        size = weights.shape[0]
        violation = max(
            np.abs(weights.sum(axis=1) - 1.0 / size).max(),
            np.abs(weights.sum(axis=0) - 1.0 / size).max(),
        )
        if np.any(weights < 0) or violation > _PLAN_ATOL:
            raise ShapeError(f"outer plan marginals deviate from 1/B by {violation:.3e}")
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def product(cls, size: int) -> "OuterPlan":
        return cls(np.full((size, size), 1.0 / size**2))

    @classmethod
    def from_permutation(cls, perm: Permutation) -> "OuterPlan":
        weights = np.zeros((perm.size, perm.size))
        weights[np.arange(perm.size), perm.map] = 1.0 / perm.size
        return cls(weights)

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    def expected_cost(self, cost: np.ndarray) -> float:
        return float(np.sum(self.weights * np.asarray(cost, dtype=np.float64)))


@dataclass(frozen=True)
class MatchedPair:
    """One sampled (source, target) cloud pair with its inner plan."""

    source: PointCloud
    target: PointCloud
    inner: InnerPlan
    source_index: int
    target_index: int


@dataclass(frozen=True)
class PairedBatch:
    """B pairs drawn from an outer plan."""

    pairs: Tuple[MatchedPair, ...]
    outer: OuterPlan

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)


def _check_batches(src: MetaBatch, tgt: MetaBatch) -> None:
    if len(src) != len(tgt):
        raise ShapeError(f"batch sizes differ: {len(src)} != {len(tgt)}")
    if src.dim != tgt.dim:
        raise ShapeError(f"batch dims differ: {src.dim} != {tgt.dim}")


def _rows_in_order(row, size: int, threads: int) -> np.ndarray:
    """Evaluate ``row(i)`` for every i, in parallel when allowed, assembled in index order."""
    if threads <= 1:
        return np.stack([row(i) for i in range(size)])
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return np.stack(list(executor.map(row, range(size))))


def _aligned_vectors(batch: MetaBatch, perms: Sequence[Permutation]) -> np.ndarray:
    if len(perms) != len(batch):
        raise ShapeError(f"{len(perms)} alignment permutations for {len(batch)} clouds")
    return np.stack([apply_permutation(perm, cloud).points.ravel() for cloud, perm in zip(batch, perms)])


def _source_alignments(
        src: MetaBatch, ref: Optional[ReferenceMeasure], src_perms: Optional[Sequence[Permutation]], threads: int
) -> List[Permutation]:
    if src_perms is not None:
        return list(src_perms)
    if ref is None:
        raise ConfigError("llw coupling requires a reference measure (ref)")
    return align_batch(src.clouds, ref, threads)


def outer_cost_matrix(
        src: MetaBatch,
        tgt: MetaBatch,
        cfg: CouplingConfig,
        seed: SeedLike = None,
        ref: Optional[ReferenceMeasure] = None,
        tgt_perms: Optional[Sequence[Permutation]] = None,
        src_perms: Optional[Sequence[Permutation]] = None,
) -> np.ndarray:
    """
    Pairwise divergences between source cloud i and target cloud j.

    Args:
        src: Source batch.
        tgt: Target batch of the same size.
        cfg: Selects the divergence through ``cfg.outer``.
        seed: Seed for sliced directions.
        ref: Reference measure (llw only).
        tgt_perms: Target alignments to ``ref`` (llw only).
        src_perms: Source alignments; computed on the fly when omitted (llw only).

    Returns:
        np.ndarray: B x B cost matrix.

    Raises:
        CouplingError: For the independent family, which needs no cost matrix.
        ShapeError: On batch or count mismatches.
        ConfigError: When llw inputs are missing.
    """
    _check_batches(src, tgt)
    size = len(src)
    kind = cfg.outer

    if kind is CouplingKind.IND:
        raise CouplingError("the independent outer plan has no cost matrix")

    if kind is CouplingKind.W:
        solver = cfg.solver
        return _rows_in_order(
            lambda i: np.array([wasserstein2(src[i], tgt[j], solver)[0] for j in range(size)]),
            size,
            cfg.threads,
        )

    count = src.uniform_count
    if tgt.uniform_count != count:
        raise ShapeError(f"source and target point counts differ: {count} != {tgt.uniform_count}")

    if kind is CouplingKind.SW:
        dirs = sample_directions(src.dim, cfg.slices, seed)
        sorted_src = np.sort(np.einsum("ld,bdn->bln", dirs.vectors, src.stacked()), axis=2)
        sorted_tgt = np.sort(np.einsum("ld,bdn->bln", dirs.vectors, tgt.stacked()), axis=2)
        return _rows_in_order(
            lambda i: np.mean((sorted_src[i][None] - sorted_tgt) ** 2, axis=(1, 2)),
            size,
            cfg.threads,
        )

    if tgt_perms is None:
        raise ConfigError("llw outer coupling requires precomputed target alignments")
    source_perms = _source_alignments(src, ref, src_perms, cfg.threads)
    return cdist(_aligned_vectors(src, source_perms), _aligned_vectors(tgt, tgt_perms), "sqeuclidean") / count


def solve_outer(cost: np.ndarray) -> OuterPlan:
    """
    Optimal outer plan with uniform 1/B marginals, a permutation scaled by 1/B.

    Raises:
        ShapeError: For a non-square or non-finite cost.
    """
    plan, _ = solve_exact(cost)
    return OuterPlan.from_permutation(plan.permutation)


def inner_plan(
        a: PointCloud,
        b: PointCloud,
        cfg: CouplingConfig,
        ref: Optional[ReferenceMeasure] = None,
        precomputed_perm: Optional[Permutation] = None,
        seed: SeedLike = None,
        source_perm: Optional[Permutation] = None,
) -> InnerPlan:
    """
    Inner plan between the points of ``a`` and ``b`` for ``cfg.inner``.

    Args:
        a: Source cloud.
        b: Target cloud.
        cfg: Coupling configuration.
        ref: Reference measure (llw only).
        precomputed_perm: Alignment of ``b`` to ``ref`` (llw only).
        seed: Seed for sliced directions.
        source_perm: Alignment of ``a`` to ``ref``; ``a`` is taken as already aligned when omitted.

    Raises:
        ShapeError: If the clouds differ in dim or count.
        ConfigError: If llw is requested without ``ref`` or ``precomputed_perm``.
    """
    if a.dim != b.dim or a.count != b.count:
        raise ShapeError(f"clouds must share shape, got {a.coords.shape} and {b.coords.shape}")
    kind = cfg.inner

    if kind is CouplingKind.IND:
        return InnerPlan.product(a.count)
    if kind is CouplingKind.W:
        return wasserstein2(a, b, cfg.solver)[1]
    if kind is CouplingKind.SW:
        return sliced_plan(a, b, sample_directions(a.dim, cfg.slices, seed))

    if ref is None or precomputed_perm is None:
        raise ConfigError("llw inner coupling requires ref and a precomputed target alignment")
    if source_perm is None:
        return llw_inner_plan(a, b, precomputed_perm)
    matching = np.empty(a.count, dtype=np.int64)
    matching[source_perm.map] = precomputed_perm.map
    return InnerPlan.from_permutation(Permutation(matching))


def sample_paired_batch(
        src: MetaBatch,
        tgt: MetaBatch,
        cfg: CouplingConfig,
        ref: Optional[ReferenceMeasure] = None,
        perms: Optional[Sequence[Permutation]] = None,
        seed: SeedLike = None,
        src_perms: Optional[Sequence[Permutation]] = None,
) -> PairedBatch:
    """
    Draw B cloud pairs from the outer plan and attach an inner plan to each.

    Args:
        src: Source batch.
        tgt: Target batch.
        cfg: Coupling configuration.
        ref: Reference measure (llw only).
        perms: Target alignments to ``ref`` (llw only).
        seed: Seed for directions and multinomial draws.
        src_perms: Source alignments; computed on the fly for llw when omitted.

    Returns:
        PairedBatch: B pairs, deterministic given ``seed``.
    """
    _check_batches(src, tgt)
    cfg.check_reference(ref)
    rng = as_generator(seed)
    size = len(src)

    if cfg.requires_reference:
        if perms is None:
            raise ConfigError("llw coupling requires precomputed target alignments")
        src_perms = _source_alignments(src, ref, src_perms, cfg.threads)

    if cfg.outer is CouplingKind.IND:
        outer = OuterPlan.product(size)
    else:
        cost = outer_cost_matrix(src, tgt, cfg, rng, ref=ref, tgt_perms=perms, src_perms=src_perms)
        outer = solve_outer(cost)

    probabilities = outer.weights.ravel() / outer.weights.sum()
    cells = rng.choice(size * size, size=size, p=probabilities)

    pairs = []
    for cell in cells:
        i, j = divmod(int(cell), size)
        plan = inner_plan(
            src[i],
            tgt[j],
            cfg,
            ref=ref,
            precomputed_perm=perms[j] if perms is not None else None,
            seed=rng,
            source_perm=src_perms[i] if src_perms is not None else None,
        )
        pairs.append(MatchedPair(src[i], tgt[j], plan, i, j))
    return PairedBatch(tuple(pairs), outer)


def draw_matched_points(
        pair: MatchedPair, seed: SeedLike = None, draws: Optional[int] = None
) -> Tuple[PointCloud, PointCloud]:
    """
    Column-aligned point pairs drawn from the pair's inner plan.

    Permutation plans return every matched pair exactly once. Fractional plans return
    ``draws`` (default N) multinomial draws over the N^2 plan entries.

    Returns:
        Tuple[PointCloud, PointCloud]: ``(x, x_prime)`` with column k of each forming one pair.
    """
    plan = pair.inner
    if plan.is_permutation:
        return pair.source, apply_permutation(plan.permutation, pair.target)

    rng = as_generator(seed)
    size = plan.size
    draws = size if draws is None else draws
    if plan.uniform:
        rows = rng.integers(size, size=draws)
        cols = rng.integers(size, size=draws)
    else:
        weights = plan.weights.ravel()
        rows, cols = np.divmod(rng.choice(size * size, size=draws, p=weights / weights.sum()), size)
    return PointCloud(pair.source.coords[:, rows]), PointCloud(pair.target.coords[:, cols])


def wow2(src: MetaBatch, tgt: MetaBatch, solver: Optional[OTSolver] = None) -> Tuple[float, OuterPlan]:
    """
    Squared WoW distance between two equal-size batches of uniform clouds.

    The ground cost between clouds is W2^2; the outer problem is solved exactly.

    Returns:
        Tuple[float, OuterPlan]: The distance and the optimal outer plan.
    """
    solver = solver or OTSolver.exact()
    cfg = CouplingConfig(
        outer=CouplingKind.W,
        inner=CouplingKind.W,
        sinkhorn_reg=solver.reg if solver.kind == "sinkhorn" else None,
        sinkhorn_max_iter=solver.max_iter,
        sinkhorn_tol=solver.tol,
    )
    cost = outer_cost_matrix(src, tgt, cfg)
    outer = solve_outer(cost)
    return outer.expected_cost(cost), outer
