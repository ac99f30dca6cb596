import csv
from itertools import permutations

import numpy as np
import pytest

from wow_flow.errors import ConfigError, ShapeError
from wow_flow.evaluation import (
    NNA_HEADER,
    Metric,
    NNAReport,
    chamfer,
    distance_matrix,
    encode_pgm,
    kde_bandwidth,
    kde_grid,
    nna,
    nna_repeated,
    summarize_nna,
    write_nna_csv,
    write_pgm,
)
from wow_flow.measures import MetaBatch, PointCloud, squared_euclidean_cost


def clouds_around(center, size, seed, count=6):
    rng = np.random.default_rng(seed)
    return MetaBatch.of([PointCloud(rng.standard_normal((2, count)) * 0.1 + center) for _ in range(size)])


@pytest.mark.unit
class TestChamfer:
    def test_hand_example(self):
        assert chamfer(PointCloud([[0.0]]), PointCloud([[1.0, 2.0]])) == pytest.approx(6.0)

    def test_symmetric_and_zero_on_equal_sets(self, small_clouds):
        a, b = small_clouds[:2]
        assert chamfer(a, b) == pytest.approx(chamfer(b, a))
        assert chamfer(a, a) == 0.0
        assert chamfer(a, b) > 0.0

    def test_dim_mismatch(self):
        with pytest.raises(ShapeError):
            chamfer(PointCloud([[0.0]]), PointCloud(np.zeros((2, 1))))

    def test_metric_parse(self):
        assert Metric.parse("OT") is Metric.OT
        with pytest.raises(ConfigError):
            Metric.parse("emd")


@pytest.mark.unit
class TestDistanceMatrix:
    def test_ot_matches_brute_force(self):
        clouds = list(clouds_around(0.0, 4, seed=1, count=4))
        matrix = distance_matrix(clouds, "ot")
        for i in range(4):
            for j in range(4):
                cost = squared_euclidean_cost(clouds[i], clouds[j])
                best = min(cost[np.arange(4), list(p)].mean() for p in permutations(range(4)))
                assert matrix[i, j] == pytest.approx(best, abs=1e-12)

    def test_threads_agree(self, small_clouds):
        np.testing.assert_array_equal(
            distance_matrix(small_clouds, "chamfer"), distance_matrix(small_clouds, "chamfer", threads=3)
        )


@pytest.mark.unit
class TestNNA:
    @pytest.mark.parametrize("metric", ["chamfer", "ot"])
    def test_disjoint_clusters(self, metric):
        report = nna(clouds_around(0.0, 5, seed=1), clouds_around(50.0, 5, seed=2), metric)
        assert report.accuracy == 1.0
        assert report.metric is Metric.parse(metric)

    def test_duplicates_score_zero(self):
        real = clouds_around(0.0, 6, seed=3)
        assert nna(MetaBatch.of(list(real)), real, "chamfer").accuracy == 0.0

    def test_symmetric_in_labels(self):
        a, b = clouds_around(0.0, 6, seed=4), clouds_around(0.05, 6, seed=5)
        assert nna(a, b, "chamfer").accuracy == nna(b, a, "chamfer").accuracy

    def test_needs_two_clouds_per_side(self):
        with pytest.raises(ShapeError):
            nna(clouds_around(0.0, 1, seed=1), clouds_around(0.0, 3, seed=2))

    def test_ot_needs_equal_counts(self):
        with pytest.raises(ShapeError, match="downsample"):
            nna(clouds_around(0.0, 2, seed=1, count=5), clouds_around(0.0, 2, seed=2, count=6), "ot")

    @pytest.mark.slow
    def test_null_distribution(self):
        accuracies = []
        for seed in range(20):
            pool = list(clouds_around(0.0, 512, seed=seed, count=8))
            accuracies.append(nna(MetaBatch.of(pool[:256]), MetaBatch.of(pool[256:]), "chamfer").accuracy)
        assert 0.45 <= np.mean(accuracies) <= 0.55


@pytest.mark.unit
class TestRepeatedNNA:
    def test_repetitions_are_seeded(self):
        generated = list(clouds_around(0.0, 10, seed=6))
        real = list(clouds_around(0.2, 10, seed=7))
        first = nna_repeated(generated, real, "chamfer", 4, 3, seed=11)
        second = nna_repeated(generated, real, "chamfer", 4, 3, seed=11)
        assert len(first) == 3
        assert [r.accuracy for r in first] == [r.accuracy for r in second]

    def test_ot_downsamples_to_smallest_count(self):
        generated = list(clouds_around(0.0, 4, seed=6, count=6))
        real = list(clouds_around(9.0, 4, seed=7, count=9))
        reports = nna_repeated(generated, real, "ot", 3, 2, seed=0)
        assert all(report.accuracy == 1.0 for report in reports)

    def test_too_few_clouds(self):
        with pytest.raises(ShapeError):
            nna_repeated(list(clouds_around(0.0, 3, seed=1)), list(clouds_around(0.0, 5, seed=2)), "ot", 4, 1)

    def test_summary_row_and_csv(self, temp_dir):
        reports = [NNAReport(Metric.CHAMFER, value, 8, 8, 3) for value in (0.5, 0.75)]
        summary = summarize_nna(reports, euler_steps=25)
        assert summary.accuracy_mean == pytest.approx(0.625)
        assert summary.accuracy_std == pytest.approx(0.125)
        path = write_nna_csv(temp_dir / "nna.csv", [summary])
        with path.open() as fh:
            rows = list(csv.reader(fh))
        assert tuple(rows[0]) == NNA_HEADER
        assert rows[1] == ["chamfer", "25", "0.625000", "0.125000", "8", "3"]

    def test_summary_rejects_mixed_metrics(self):
        with pytest.raises(ValueError):
            summarize_nna([NNAReport(Metric.OT, 0.5, 2, 2), NNAReport(Metric.CHAMFER, 0.5, 2, 2)])

    def test_report_bounds(self):
        with pytest.raises(ValueError):
            NNAReport(Metric.OT, 1.5, 2, 2)


@pytest.mark.unit
class TestKde:
    def test_single_point_peaks_at_centre(self):
        grid = kde_grid(PointCloud([[0.5], [0.5]]))
        assert grid.shape == (64, 64)
        row, col = np.unravel_index(np.argmax(grid), grid.shape)
        assert row in (31, 32)
        assert col in (31, 32)

    def test_values_non_negative_and_finite(self, rng):
        grid = kde_grid(PointCloud(rng.random((2, 30))))
        assert np.all(grid >= 0)
        assert np.all(np.isfinite(grid))
        assert 0 < grid.sum() < np.inf

    def test_tight_cluster_is_smoothed_at_fixed_width(self):
        axis = np.linspace(0.24, 0.26, 8)
        xs, ys = np.meshgrid(axis, axis)
        grid = kde_grid(PointCloud(np.vstack([xs.ravel(), ys.ravel()])))
        row, col = np.unravel_index(np.argmax(grid), grid.shape)
        assert row in (47, 48)
        assert col in (15, 16)
        assert grid[15, 47] > 0.2 * grid.max()

    def test_bandwidth(self):
        assert kde_bandwidth(PointCloud([[0.5], [0.5]])) == pytest.approx(0.9)
        wide = PointCloud.from_points([(0.0, 0.0), (1.0, 1.0)])
        narrow = PointCloud.from_points([(0.5, 0.5), (0.51, 0.5)])
        assert kde_bandwidth(wide) == pytest.approx(0.9 * 2 ** (-1 / 6))
        assert kde_bandwidth(narrow) == kde_bandwidth(wide)
        assert kde_bandwidth(PointCloud(np.zeros((2, 64)))) == pytest.approx(0.45)

    def test_rejects_non_planar(self):
        with pytest.raises(ShapeError):
            kde_grid(PointCloud(np.zeros((3, 2))))


@pytest.mark.unit
class TestPgm:
    def test_encoding(self):
        text = encode_pgm(np.array([[0.0, 1.0], [2.0, 4.0]]))
        lines = text.splitlines()
        assert lines[:3] == ["P2", "2 2", "255"]
        assert lines[3:] == ["0 64", "128 255"]

    def test_flat_grid(self):
        assert encode_pgm(np.ones((1, 3))).splitlines()[3] == "0 0 0"

    def test_write(self, temp_dir):
        path = write_pgm(temp_dir / "kde" / "cloud_0000.pgm", np.eye(3))
        assert path.read_text().startswith("P2\n3 3\n255\n")
