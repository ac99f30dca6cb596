from itertools import permutations

import numpy as np
import pytest

from data.sources import SourceKind, SourceSpec
from wow_flow.couplings import (
    CouplingConfig,
    CouplingKind,
    MatchedPair,
    OuterPlan,
    draw_matched_points,
    inner_plan,
    outer_cost_matrix,
    sample_paired_batch,
    solve_outer,
    wow2,
)
from wow_flow.errors import ConfigError, CouplingError, ShapeError
from wow_flow.evaluation import Metric
from wow_flow.linearized import ReferenceMeasure, align_batch
from wow_flow.measures import MetaBatch, Permutation, PointCloud, apply_permutation, squared_euclidean_cost
from wow_flow.ot import InnerPlan, wasserstein2


def random_batch(seed, size=4, dim=2, count=5, shift=0.0):
    rng = np.random.default_rng(seed)
    return MetaBatch.of([PointCloud(rng.standard_normal((dim, count)) + shift) for _ in range(size)])


def brute_force_w2(a, b):
    cost = squared_euclidean_cost(a, b)
    return min(cost[np.arange(a.count), list(p)].mean() for p in permutations(range(a.count)))


@pytest.mark.unit
class TestCouplingConfig:
    def test_parses_kinds(self):
        cfg = CouplingConfig(outer="W", inner="llw")
        assert cfg.outer is CouplingKind.W
        assert cfg.inner is CouplingKind.LLW
        assert cfg.requires_reference
        assert cfg.label == "(w,llw)"

    @pytest.mark.parametrize("kind", [*CouplingKind, *SourceKind, *Metric])
    def test_parse_accepts_members(self, kind):
        assert type(kind).parse(kind) is kind
        assert type(kind).parse(kind.value.upper()) is kind

    def test_members_pass_through_constructors(self):
        cfg = CouplingConfig(outer=CouplingKind.W, inner=CouplingKind.SW)
        assert (cfg.outer, cfg.inner) == (CouplingKind.W, CouplingKind.SW)
        assert SourceSpec(sigma_range=(0.1, 0.1)).kind is SourceKind.PURE_NOISE
        assert SourceSpec(kind=SourceKind.CIRCLES).kind is SourceKind.CIRCLES

    def test_unknown_kind(self):
        with pytest.raises(ConfigError, match="unknown coupling"):
            CouplingConfig(outer="emd")

    @pytest.mark.parametrize("kwargs", [{"slices": 0}, {"sinkhorn_reg": 0.0}, {"threads": 0}])
    def test_invalid_values(self, kwargs):
        with pytest.raises(ConfigError):
            CouplingConfig(**kwargs)

    def test_solver_selection(self):
        assert CouplingConfig().solver.kind == "exact"
        solver = CouplingConfig(sinkhorn_reg=0.1).solver
        assert solver.kind == "sinkhorn"
        assert solver.reg == 0.1

    def test_llw_without_reference(self):
        with pytest.raises(ConfigError, match="reference"):
            CouplingConfig(outer="llw").check_reference(None)


@pytest.mark.unit
class TestOuterPlan:
    def test_product_marginals(self):
        plan = OuterPlan.product(4)
        np.testing.assert_allclose(plan.weights.sum(axis=0), 0.25)
        np.testing.assert_allclose(plan.weights.sum(axis=1), 0.25)

    def test_rejects_bad_marginals(self):
        with pytest.raises(ShapeError):
            OuterPlan(np.eye(3))

    def test_solve_outer_matches_brute_force(self):
        cost = np.random.default_rng(3).random((4, 4))
        plan = solve_outer(cost)
        best = min(cost[np.arange(4), list(p)].mean() for p in permutations(range(4)))
        assert plan.expected_cost(cost) == pytest.approx(best, abs=1e-12)


@pytest.mark.unit
class TestOuterCost:
    def test_wasserstein_entries(self):
        src, tgt = random_batch(1, size=3), random_batch(2, size=3)
        cost = outer_cost_matrix(src, tgt, CouplingConfig(outer="w"))
        for i in range(3):
            for j in range(3):
                assert cost[i, j] == pytest.approx(wasserstein2(src[i], tgt[j])[0])

    def test_threads_give_same_matrix(self):
        src, tgt = random_batch(1, size=3), random_batch(2, size=3)
        serial = outer_cost_matrix(src, tgt, CouplingConfig(outer="w"))
        parallel = outer_cost_matrix(src, tgt, CouplingConfig(outer="w", threads=3))
        np.testing.assert_array_equal(serial, parallel)

    def test_sliced_matches_exact_in_one_dimension(self):
        src, tgt = random_batch(3, size=3, dim=1), random_batch(4, size=3, dim=1)
        exact = outer_cost_matrix(src, tgt, CouplingConfig(outer="w"))
        sliced = outer_cost_matrix(src, tgt, CouplingConfig(outer="sw", slices=10_000), seed=0)
        np.testing.assert_allclose(sliced, exact, rtol=0.05)

    def test_independent_has_no_cost(self):
        with pytest.raises(CouplingError):
            outer_cost_matrix(random_batch(1), random_batch(2), CouplingConfig())

    def test_lazy_linear_cost(self):
        ref = ReferenceMeasure(PointCloud(np.random.default_rng(5).standard_normal((2, 5))))
        src, tgt = random_batch(6, size=3), random_batch(7, size=3)
        tgt_perms = align_batch(tgt.clouds, ref)
        src_perms = align_batch(src.clouds, ref)
        cost = outer_cost_matrix(src, tgt, CouplingConfig(outer="llw"), ref=ref, tgt_perms=tgt_perms,
                                 src_perms=src_perms)
        a = apply_permutation(src_perms[0], src[0]).coords
        b = apply_permutation(tgt_perms[2], tgt[2]).coords
        assert cost[0, 2] == pytest.approx(np.mean(np.sum((a - b) ** 2, axis=0)))

    def test_lazy_linear_needs_alignments(self):
        with pytest.raises(ConfigError):
            outer_cost_matrix(random_batch(1), random_batch(2), CouplingConfig(outer="llw"))

    def test_batch_size_mismatch(self):
        with pytest.raises(ShapeError):
            outer_cost_matrix(random_batch(1, size=3), random_batch(2, size=4), CouplingConfig(outer="w"))


@pytest.mark.unit
class TestInnerPlan:
    def test_families(self):
        a, b = random_batch(1, size=2)
        assert inner_plan(a, b, CouplingConfig()).uniform
        assert inner_plan(a, b, CouplingConfig(inner="w")).is_permutation
        plan = inner_plan(a, b, CouplingConfig(inner="sw"), seed=0)
        assert plan.marginal_violation() < 1e-12

    def test_lazy_linear_composes_alignments(self):
        ref = ReferenceMeasure(PointCloud(np.random.default_rng(5).standard_normal((2, 5))))
        a, b = random_batch(8, size=2)
        perm_a, perm_b = align_batch([a, b], ref)
        plan = inner_plan(a, b, CouplingConfig(inner="llw"), ref=ref, precomputed_perm=perm_b, source_perm=perm_a)
        # source point perm_a[i] is paired with target point perm_b[i]
        np.testing.assert_array_equal(plan.matching[perm_a.map], perm_b.map)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            inner_plan(PointCloud(np.zeros((2, 3))), PointCloud(np.zeros((2, 4))), CouplingConfig())


@pytest.mark.unit
class TestPairedBatch:
    def test_pairs_follow_outer_plan(self):
        src, tgt = random_batch(1), random_batch(2, shift=3.0)
        paired = sample_paired_batch(src, tgt, CouplingConfig(outer="w", inner="w"), seed=0)
        support = {(i, j) for i, j in zip(*np.nonzero(paired.outer.weights))}
        assert len(paired) == 4
        for pair in paired:
            assert (pair.source_index, pair.target_index) in support
            assert pair.inner.is_permutation

    def test_deterministic_given_seed(self):
        src, tgt = random_batch(1), random_batch(2)
        cfg = CouplingConfig(outer="sw", inner="sw")
        first = sample_paired_batch(src, tgt, cfg, seed=5)
        second = sample_paired_batch(src, tgt, cfg, seed=5)
        assert [(p.source_index, p.target_index) for p in first] == [(p.source_index, p.target_index) for p in second]
        for p, q in zip(first, second):
            np.testing.assert_array_equal(p.inner.weights, q.inner.weights)

    def test_independent_outer_is_uniform(self):
        src, tgt = random_batch(1), random_batch(2)
        rng = np.random.default_rng(0)
        counts = np.zeros(4)
        for _ in range(2500):
            for pair in sample_paired_batch(src, tgt, CouplingConfig(), seed=rng):
                counts[pair.source_index] += 1
        expected = 10_000 / 4
        sigma = np.sqrt(10_000 * 0.25 * 0.75)
        assert np.all(np.abs(counts - expected) < 3 * sigma)

    def test_llw_requires_alignments(self):
        ref = ReferenceMeasure(PointCloud(np.random.default_rng(5).standard_normal((2, 5))))
        with pytest.raises(ConfigError):
            sample_paired_batch(random_batch(1), random_batch(2), CouplingConfig(outer="llw"), ref=ref)
        with pytest.raises(ConfigError):
            sample_paired_batch(random_batch(1), random_batch(2), CouplingConfig(outer="llw"))


@pytest.mark.unit
class TestMatchedPoints:
    def test_permutation_plan_pairs_every_point(self):
        a = PointCloud([[0.0, 1.0, 2.0]])
        b = PointCloud([[10.0, 11.0, 12.0]])
        pair = MatchedPair(a, b, InnerPlan.from_permutation(Permutation(np.array([2, 0, 1]))), 0, 0)
        x, x_prime = draw_matched_points(pair)
        np.testing.assert_array_equal(x.coords, a.coords)
        np.testing.assert_array_equal(x_prime.coords, [[12.0, 10.0, 11.0]])

    def test_fractional_plan_frequencies(self):
        a = PointCloud([[0.0, 1.0]])
        b = PointCloud([[10.0, 11.0]])
        weights = np.array([[0.4, 0.1], [0.1, 0.4]])
        pair = MatchedPair(a, b, InnerPlan.from_dense(weights), 0, 0)
        draws = 100_000
        x, x_prime = draw_matched_points(pair, seed=0, draws=draws)
        observed = np.zeros((2, 2))
        np.add.at(observed, (x.coords[0].astype(int), (x_prime.coords[0] - 10).astype(int)), 1)
        sigma = np.sqrt(draws * weights * (1 - weights))
        assert np.all(np.abs(observed - draws * weights) < 3 * sigma)


@pytest.mark.unit
class TestWoW:
    def test_equals_brute_force(self):
        for seed in range(5):
            src = random_batch(seed, size=3, dim=1, count=4)
            tgt = random_batch(seed + 100, size=3, dim=1, count=4)
            inner = np.array([[brute_force_w2(src[i], tgt[j]) for j in range(3)] for i in range(3)])
            best = min(inner[np.arange(3), list(p)].mean() for p in permutations(range(3)))
            value, plan = wow2(src, tgt)
            assert value == pytest.approx(best, abs=1e-9)
            assert plan.expected_cost(inner) == pytest.approx(value, abs=1e-9)

    def test_zero_between_identical_batches(self):
        batch = random_batch(3)
        reordered = MetaBatch.of(list(batch)[::-1])
        assert wow2(batch, reordered)[0] == pytest.approx(0.0, abs=1e-12)
