"""
Optimal transport between equal-size uniform empirical measures.

The exact solver is the assignment special case of the transport linear program; the entropic
solver runs Sinkhorn iterations on dual potentials in the log domain with a geometric schedule
on the regularization, so very small ``reg`` values stay stable.
"""

from dataclasses import dataclass
from logging import getLogger
from typing import Literal, Optional, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import logsumexp

from wow_flow.errors import ConvergenceError, ShapeError
from wow_flow.measures import Permutation, PointCloud, squared_euclidean_cost

__all__ = [
    "InnerPlan",
    "OTSolver",
    "solve_exact",
    "solve_sinkhorn",
    "wasserstein2",
    "DEFAULT_SINKHORN_MAX_ITER",
    "DEFAULT_SINKHORN_TOL",
]

logger = getLogger(__name__)

DEFAULT_SINKHORN_MAX_ITER = 10_000
DEFAULT_SINKHORN_TOL = 1e-9
# Sinkhorn stages above the target regularization stop once marginals are this close
_WARM_STAGE_TOL = 1e-6
_WARM_STAGE_ITER = 500
_PLAN_ATOL = 1e-9


@dataclass(frozen=True, eq=False)
class InnerPlan:
    """
    N x N transport plan between two uniform clouds, marginals 1/N.

    Permutation plans and the independent (uniform product) plan are kept in compact form;
    ``weights`` materializes the dense matrix on demand.

    Attributes:
        size: N.
        matching: For permutation plans, ``matching[i]`` is the target column matched to source i.
        dense: Explicit N x N weights for fractional plans.
        uniform: True for the product plan with every entry 1/N^2.
    """

    size: int
    matching: Optional[np.ndarray] = None
    dense: Optional[np.ndarray] = None
    uniform: bool = False

    @classmethod
    def from_permutation(cls, perm: Permutation) -> "InnerPlan":
        """Plan with weight 1/N at (i, perm.map[i])."""
        return cls(size=perm.size, matching=perm.map)

    @classmethod
    def product(cls, size: int) -> "InnerPlan":
        """The independent plan 1/N^2 everywhere."""
        if size < 1:
            raise ShapeError(f"plan size must be >= 1, got {size}")
        return cls(size=size, uniform=True)

    @classmethod
    def from_dense(cls, weights: np.ndarray, atol: float = _PLAN_ATOL) -> "InnerPlan":
        """
        Wrap an explicit weight matrix after checking its marginals.

        Args:
            weights: Square non-negative matrix.
            atol: Allowed deviation of every row and column sum from 1/N.

        Raises:
            ShapeError: If the matrix is not square, has negative entries or wrong marginals.
        """
        weights = np.asarray(weights, dtype=np.float64)
        if weights.ndim != 2 or weights.shape[0] != weights.shape[1] or weights.shape[0] == 0:
            raise ShapeError(f"plan must be a non-empty square matrix, got shape {weights.shape}")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ShapeError("plan weights must be finite and non-negative")
        plan = cls(size=weights.shape[0], dense=weights)
        violation = plan.marginal_violation()
        if violation > atol:
            raise ShapeError(f"plan marginals deviate from 1/N by {violation:.3e} > {atol:.1e}")
        return plan

    @property
    def is_permutation(self) -> bool:
        return self.matching is not None

    @property
    def weights(self) -> np.ndarray:
        if self.matching is not None:
            weights = np.zeros((self.size, self.size))
            weights[np.arange(self.size), self.matching] = 1.0 / self.size
            return weights
        if self.uniform:
            return np.full((self.size, self.size), 1.0 / self.size**2)
        return self.dense

    @property
    def permutation(self) -> Permutation:
        if self.matching is None:
            raise ShapeError("plan is not a permutation")
        return Permutation(self.matching)

    def marginal_violation(self) -> float:
        """Largest deviation of a row or column sum from 1/N."""
        if self.matching is not None or self.uniform:
            return 0.0
        target = 1.0 / self.size
        rows = np.abs(self.dense.sum(axis=1) - target).max()
        cols = np.abs(self.dense.sum(axis=0) - target).max()
        return float(max(rows, cols))

    def transport_cost(self, cost: np.ndarray) -> float:
        """The linear cost <plan, cost>."""
        cost = np.asarray(cost, dtype=np.float64)
        if cost.shape != (self.size, self.size):
            raise ShapeError(f"cost shape {cost.shape} does not match plan size {self.size}")
        if self.matching is not None:
            return float(cost[np.arange(self.size), self.matching].mean())
        if self.uniform:
            return float(cost.mean())
        return float(np.sum(self.dense * cost))


@dataclass(frozen=True)
class OTSolver:
    """Solver choice for ``wasserstein2``: exact assignment or entropic Sinkhorn at ``reg``."""

    kind: Literal["exact", "sinkhorn"] = "exact"
    reg: float = 1e-2
    max_iter: int = DEFAULT_SINKHORN_MAX_ITER
    tol: float = DEFAULT_SINKHORN_TOL

    @classmethod
    def exact(cls) -> "OTSolver":
        return cls("exact")

    @classmethod
    def sinkhorn(
            cls, reg: float, max_iter: int = DEFAULT_SINKHORN_MAX_ITER, tol: float = DEFAULT_SINKHORN_TOL
    ) -> "OTSolver":
        return cls("sinkhorn", reg, max_iter, tol)

    def solve(self, cost: np.ndarray) -> Tuple[InnerPlan, float]:
        if self.kind == "exact":
            return solve_exact(cost)
        return solve_sinkhorn(cost, self.reg, self.max_iter, self.tol)


def _check_cost(cost: np.ndarray) -> np.ndarray:
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1] or cost.shape[0] == 0:
        raise ShapeError(f"cost must be a non-empty square matrix, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise ShapeError("cost matrix contains non-finite entries")
    return cost


def solve_exact(cost: np.ndarray) -> Tuple[InnerPlan, float]:
    """
    Optimal permutation plan for a square cost matrix.

    Args:
        cost: N x N finite cost matrix.

    Returns:
        Tuple[InnerPlan, float]: The permutation plan and the mean matched cost
        (1/N) sum_i cost[i, sigma(i)].

    Raises:
        ShapeError: If the cost is not square or not finite.
    """
    cost = _check_cost(cost)
    _, matching = linear_sum_assignment(cost)
    total = float(cost[np.arange(cost.shape[0]), matching].mean())
    return InnerPlan.from_permutation(Permutation(matching)), total


def _sinkhorn_stage(
        cost: np.ndarray, log_marginal: float, f: np.ndarray, g: np.ndarray, eps: float, max_iter: int, tol: float
) -> Tuple[np.ndarray, np.ndarray, float, int]:
    """Alternate potential updates until the row marginals are within ``tol``."""
    target = np.exp(log_marginal)
    violation = np.inf
    for iteration in range(1, max_iter + 1):
        f = eps * log_marginal - eps * logsumexp((g[None, :] - cost) / eps, axis=1)
        g = eps * log_marginal - eps * logsumexp((f[:, None] - cost) / eps, axis=0)
        # column sums are exact after the g update, so rows carry the whole violation
        rows = np.exp(logsumexp((f[:, None] + g[None, :] - cost) / eps, axis=1))
        violation = float(np.abs(rows - target).max())
        if violation < tol:
            return f, g, violation, iteration
    return f, g, violation, max_iter


def solve_sinkhorn(
        cost: np.ndarray,
        reg: float,
        max_iter: int = DEFAULT_SINKHORN_MAX_ITER,
        tol: float = DEFAULT_SINKHORN_TOL,
) -> Tuple[InnerPlan, float]:
    """
    Entropic optimal transport between uniform marginals.

    The regularization is lowered geometrically from the cost scale down to ``reg``, carrying
    the potentials from one stage to the next; every iteration counts against ``max_iter``.

    Args:
        cost: N x N finite cost matrix.
        reg: Entropic regularization strength (> 0).
        max_iter: Iteration budget across all stages.
        tol: Accepted marginal violation at the final stage.

    Returns:
        Tuple[InnerPlan, float]: The plan and its transport cost <plan, cost> (entropy excluded).

    Raises:
        ShapeError: For a malformed cost matrix.
        ValueError: If ``reg`` is not positive.
        ConvergenceError: If the final stage misses ``tol`` within the budget.
    """
    cost = _check_cost(cost)
    if not reg > 0:
        raise ValueError(f"reg must be > 0, got {reg}")
    size = cost.shape[0]
    log_marginal = -np.log(size)
    f = np.zeros(size)
    g = np.zeros(size)

    scale = float(cost.max())
    schedule = []
    eps = scale
    while eps > reg:
        schedule.append(eps)
        eps *= 0.5
    schedule.append(reg)

    used = 0
    violation = np.inf
    for eps in schedule[:-1]:
        budget = min(_WARM_STAGE_ITER, max_iter - used)
        if budget <= 0:
            break
        f, g, violation, spent = _sinkhorn_stage(cost, log_marginal, f, g, eps, budget, max(tol, _WARM_STAGE_TOL))
        used += spent

    budget = max_iter - used
    if budget > 0:
        f, g, violation, spent = _sinkhorn_stage(cost, log_marginal, f, g, reg, budget, tol)
        used += spent
    if not violation < tol:
        logger.error(f"Sinkhorn (reg={reg}) stopped at violation {violation:.3e} after {used} iterations")
        raise ConvergenceError(
            f"Sinkhorn did not reach tol {tol:.1e} within {max_iter} iterations (violation {violation:.3e})",
            violation=violation,
            iterations=used,
        )

    weights = np.exp((f[:, None] + g[None, :] - cost) / reg)
    plan = InnerPlan.from_dense(weights, atol=tol + _PLAN_ATOL)
    return plan, float(np.sum(weights * cost))


def wasserstein2(a: PointCloud, b: PointCloud, solver: Optional[OTSolver] = None) -> Tuple[float, InnerPlan]:
    """
    Squared 2-Wasserstein distance between two equal-size uniform clouds.

    Args:
        a: Source cloud.
        b: Target cloud.
        solver: Exact (default) or Sinkhorn.

    Returns:
        Tuple[float, InnerPlan]: ``distance_sq`` and the plan realizing it.

    Raises:
        ShapeError: If dims or counts differ; unequal-size transport is not supported.
    """
    if a.count != b.count:
        raise ShapeError(f"unequal point counts are not supported: {a.count} != {b.count}")
    solver = solver or OTSolver.exact()
    plan, total = solver.solve(squared_euclidean_cost(a, b))
    return max(total, 0.0), plan
