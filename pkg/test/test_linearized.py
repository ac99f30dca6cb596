from itertools import permutations

import numpy as np
import pytest

from wow_flow.errors import ShapeError
from wow_flow.linearized import (
    ReferenceMeasure,
    align_batch,
    align_to_reference,
    compute_barycenter,
    llw2,
    llw_inner_plan,
)
from wow_flow.measures import MetaBatch, Permutation, PointCloud, apply_permutation
from wow_flow.ot import wasserstein2


@pytest.fixture
def reference():
    return ReferenceMeasure(PointCloud(np.random.default_rng(21).standard_normal((2, 6))))


@pytest.mark.unit
class TestReferenceMeasure:
    def test_vector_is_point_major(self):
        ref = ReferenceMeasure(PointCloud.from_points([(0.0, 1.0), (2.0, 3.0)]))
        np.testing.assert_array_equal(ref.vector, [0.0, 1.0, 2.0, 3.0])
        assert ref.dim == 2
        assert ref.count == 2

    def test_rejects_duplicate_columns(self):
        with pytest.raises(ShapeError, match="distinct"):
            ReferenceMeasure(PointCloud.from_points([(0.0, 1.0), (0.0, 1.0)]))


@pytest.mark.unit
class TestBarycenter:
    def test_identical_samples(self, rng):
        cloud = PointCloud(rng.standard_normal((2, 8)))
        samples = [apply_permutation(Permutation(rng.permutation(8)), cloud) for _ in range(3)]
        ref = compute_barycenter(MetaBatch.of(samples), 8, seed=0)
        assert ref.cloud.same_measure(cloud, atol=1e-12)
        assert ref.history[-1] == pytest.approx(0.0, abs=1e-12)
        assert not ref.jittered

    def test_midpoint_of_translated_pair(self, rng):
        cloud = PointCloud(rng.standard_normal((2, 5)) * 10)
        shifted = PointCloud(cloud.coords + np.array([[0.2], [-0.4]]))
        ref = compute_barycenter(MetaBatch.of([cloud, shifted]), 5, seed=1)
        expected = PointCloud(cloud.coords + np.array([[0.1], [-0.2]]))
        assert ref.cloud.same_measure(expected, atol=1e-9)

    def test_objective_never_increases(self):
        rng = np.random.default_rng(8)
        samples = MetaBatch.of([PointCloud(rng.standard_normal((2, 7))) for _ in range(6)])
        ref = compute_barycenter(samples, 7, max_iter=50, seed=2)
        history = np.asarray(ref.history)
        assert np.all(np.diff(history) <= 1e-9)

    def test_threads_do_not_change_result(self):
        rng = np.random.default_rng(9)
        samples = MetaBatch.of([PointCloud(rng.standard_normal((2, 6))) for _ in range(5)])
        serial = compute_barycenter(samples, 6, seed=4)
        parallel = compute_barycenter(samples, 6, seed=4, threads=3)
        np.testing.assert_array_equal(serial.cloud.coords, parallel.cloud.coords)

    def test_support_size_mismatch(self, small_clouds):
        with pytest.raises(ShapeError, match="support_size"):
            compute_barycenter(MetaBatch.of(small_clouds), 5)


@pytest.mark.unit
class TestAlignment:
    def test_matches_brute_force(self, reference):
        cloud = PointCloud(np.random.default_rng(22).standard_normal((2, 6)))
        perm = align_to_reference(cloud, reference)
        aligned = apply_permutation(perm, cloud)
        achieved = np.mean(np.sum((aligned.coords - reference.cloud.coords) ** 2, axis=0))
        best = min(
            np.mean(np.sum((cloud.coords[:, list(order)] - reference.cloud.coords) ** 2, axis=0))
            for order in permutations(range(6))
        )
        assert achieved == pytest.approx(best, abs=1e-12)

    def test_shuffled_reference_is_restored(self, reference, rng):
        perm = Permutation(rng.permutation(6))
        shuffled = apply_permutation(perm, reference.cloud)
        aligned = apply_permutation(align_to_reference(shuffled, reference), shuffled)
        np.testing.assert_array_equal(aligned.coords, reference.cloud.coords)

    def test_batch_preserves_order(self, reference):
        rng = np.random.default_rng(23)
        clouds = [PointCloud(rng.standard_normal((2, 6))) for _ in range(4)]
        assert align_batch(clouds, reference, threads=2) == [align_to_reference(c, reference) for c in clouds]

    def test_shape_mismatch(self, reference):
        with pytest.raises(ShapeError):
            align_to_reference(PointCloud(np.zeros((2, 5))), reference)


@pytest.mark.unit
class TestLazyLinear:
    def test_upper_bounds_wasserstein(self, reference):
        rng = np.random.default_rng(24)
        for _ in range(20):
            x_mu = PointCloud(rng.standard_normal((2, 6)))
            x_nu = PointCloud(rng.standard_normal((2, 6)))
            perm_nu = align_to_reference(x_nu, reference)
            mu_aligned = apply_permutation(align_to_reference(x_mu, reference), x_mu)
            assert llw2(mu_aligned, x_nu, perm_nu) >= wasserstein2(x_mu, x_nu)[0] - 1e-12

    def test_exact_near_reference(self, reference):
        rng = np.random.default_rng(25)
        eps = 1e-4 * reference.cloud.min_pairwise_gap()
        for _ in range(100):
            x_nu = PointCloud(rng.standard_normal((2, 6)))
            x_mu = PointCloud(reference.cloud.coords + eps * rng.standard_normal((2, 6)))
            perm_nu = align_to_reference(x_nu, reference)
            assert llw2(x_mu, x_nu, perm_nu) == pytest.approx(wasserstein2(x_mu, x_nu)[0], abs=1e-9)

    def test_inner_plan_is_alignment(self, reference):
        x_nu = PointCloud(np.random.default_rng(26).standard_normal((2, 6)))
        perm_nu = align_to_reference(x_nu, reference)
        plan = llw_inner_plan(reference.cloud, x_nu, perm_nu)
        assert plan.permutation == perm_nu

    def test_permutation_size_checked(self, reference):
        with pytest.raises(ShapeError):
            llw2(reference.cloud, reference.cloud, Permutation.identity(5))
