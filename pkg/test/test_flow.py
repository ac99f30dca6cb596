import csv
import math

import numpy as np
import pytest

from data.container import CloudDataset
from data.sources import SourceSpec
from wow_flow.checkpoint import encode_checkpoint
from wow_flow.couplings import CouplingConfig, draw_matched_points, sample_paired_batch, wow2
from wow_flow.errors import ConfigError, IntegrationError, NumericError, ShapeError
from wow_flow.flow import (
    TRAIN_LOG_HEADER,
    TrainConfig,
    TrainRecord,
    TrainResult,
    Trajectory,
    euler_sample,
    euler_sample_batch,
    fm_loss,
    kinetic_energy,
    straightness,
    train,
    write_train_log,
    write_trajectories,
)
from wow_flow.linearized import compute_barycenter
from wow_flow.measures import MetaBatch, Permutation, PointCloud, apply_permutation, interpolate
from wow_flow.net import NetConfig, forward, init_net
from wow_flow.ot import wasserstein2


def circles_config(tiny_net_config, **overrides):
    settings = dict(
        steps=3,
        batch=2,
        lr=1e-3,
        source=SourceSpec(kind="circles", center_range=(-2.0, 2.0), radius=0.5),
        target=SourceSpec(kind="circles", center_range=(-2.0, 2.0), offset=10.0, radius=2.0),
        n_range=(6, 6),
        seed=7,
        net=tiny_net_config,
        log_every=1,
    )
    settings.update(overrides)
    return TrainConfig(**settings)


def path_of(*points):
    """Single-point trajectory through ``points`` at evenly spaced times."""
    states = tuple(PointCloud(np.array(point, dtype=float).reshape(-1, 1)) for point in points)
    times = tuple(np.linspace(0.0, 1.0, len(points)))
    return Trajectory(times, states)


@pytest.fixture
def paired(rng):
    src = MetaBatch.of([PointCloud(rng.standard_normal((2, 6))) for _ in range(3)])
    tgt = MetaBatch.of([PointCloud(rng.standard_normal((2, 6)) + 4.0) for _ in range(3)])
    return sample_paired_batch(src, tgt, CouplingConfig(outer="w", inner="w"), seed=0)


@pytest.mark.unit
class TestTrainConfig:
    @pytest.mark.parametrize(
        "overrides", [{"batch": 0}, {"n_range": (5, 4)}, {"steps": None}, {"steps": -1}, {"lr": 0.0}]
    )
    def test_invalid(self, tiny_net_config, overrides):
        with pytest.raises(ConfigError):
            circles_config(tiny_net_config, **overrides)

    def test_epochs_need_empirical_target(self, tiny_net_config):
        cfg = circles_config(tiny_net_config, steps=None, epochs=2)
        with pytest.raises(ConfigError, match="empirical"):
            cfg.total_steps()

    def test_epochs_count_passes_over_target(self, tiny_net_config, circle_dataset):
        target = SourceSpec(kind="empirical", dataset=circle_dataset)
        cfg = circles_config(tiny_net_config, steps=None, epochs=2, batch=3, target=target)
        assert cfg.total_steps() == math.ceil(2 * 8 / 3)


@pytest.mark.unit
class TestLoss:
    def test_zero_field_loss_is_mean_squared_displacement(self, paired, tiny_net_config):
        net = init_net(tiny_net_config, seed=0)
        loss, grads = fm_loss(net, paired, 0.3, seed=0)
        expected = np.mean([wasserstein2(pair.source, pair.target)[0] for pair in paired])
        assert loss == pytest.approx(expected)
        assert set(grads) == set(net.params)

    def test_matches_direct_recomputation(self, paired, tiny_net):
        t = 0.6
        loss, _ = fm_loss(tiny_net, paired, t, seed=0)
        values = []
        for pair in paired:
            x, x_prime = draw_matched_points(pair)
            velocity = forward(tiny_net, t, interpolate(x, x_prime, t))
            values.append(np.mean(np.sum((velocity - (x_prime.coords - x.coords)) ** 2, axis=0)))
        assert loss == pytest.approx(np.mean(values), rel=1e-12)

    def test_gradient_direction(self, paired, tiny_net):
        loss, grads = fm_loss(tiny_net, paired, 0.5, seed=0)
        step = 1e-6
        moved = tiny_net.with_params({name: value - step * grads[name] for name, value in tiny_net.params.items()})
        assert fm_loss(moved, paired, 0.5, seed=0)[0] < loss


@pytest.mark.unit
class TestEuler:
    def test_constant_field(self, rng):
        x0 = PointCloud(rng.standard_normal((2, 5)))
        shift = np.array([[1.5], [-2.0]])
        traj = euler_sample(lambda t, c: np.broadcast_to(shift, c.coords.shape), x0, 7)
        assert len(traj.states) == 8
        assert traj.times[-1] == 1.0
        np.testing.assert_allclose(traj.end.coords, x0.coords + shift)

    def test_linear_decay_converges(self, rng):
        x0 = PointCloud(rng.standard_normal((2, 5)))
        traj = euler_sample(lambda t, c: -c.coords, x0, 1000)
        np.testing.assert_allclose(traj.end.coords, x0.coords * np.exp(-1.0), rtol=1e-3)

    def test_rejects_zero_steps(self, rng):
        with pytest.raises(ValueError):
            euler_sample(lambda t, c: c.coords, PointCloud(rng.standard_normal((2, 3))), 0)

    def test_non_finite_state(self, rng):
        x0 = PointCloud(rng.standard_normal((2, 3)))
        with pytest.raises(IntegrationError) as excinfo:
            euler_sample(lambda t, c: np.full(c.coords.shape, np.inf), x0, 4)
        assert excinfo.value.step == 0

    def test_wrong_field_shape(self, rng):
        with pytest.raises(ShapeError):
            euler_sample(lambda t, c: np.zeros((2, 1)), PointCloud(rng.standard_normal((2, 3))), 2)

    def test_network_field_is_equivariant(self, tiny_net, rng):
        x0 = PointCloud(rng.standard_normal((2, 6)))
        perm = Permutation(rng.permutation(6))
        direct = apply_permutation(perm, euler_sample(tiny_net, x0, 5).end).coords
        permuted = euler_sample(tiny_net, apply_permutation(perm, x0), 5).end.coords
        np.testing.assert_allclose(permuted, direct, atol=1e-9)

    def test_batch_keeps_order(self, tiny_net, small_clouds):
        trajectories = euler_sample_batch(tiny_net, small_clouds, 2)
        for cloud, traj in zip(small_clouds, trajectories):
            np.testing.assert_array_equal(traj.start.coords, cloud.coords)

    def test_kinetic_energy_of_constant_field(self, rng):
        x0 = PointCloud(rng.standard_normal((2, 4)))
        energy = kinetic_energy(lambda t, c: np.broadcast_to(np.array([[3.0], [4.0]]), c.coords.shape), x0, 10)
        assert energy == pytest.approx(25.0)


@pytest.mark.unit
class TestStraightness:
    def test_straight_line(self):
        assert straightness(path_of((0, 0), (1, 1), (2, 2))) == pytest.approx(1.0)

    def test_right_angle(self):
        assert straightness(path_of((0, 0), (1, 0), (1, 1))) == pytest.approx(math.sqrt(2) / 2)

    def test_stationary_points_count_as_straight(self):
        assert straightness(path_of((1, 1), (1, 1), (1, 1))) == 1.0

    def test_needs_two_states(self):
        with pytest.raises(ShapeError):
            straightness(path_of((0, 0)))

    def test_trajectory_validation(self):
        state = PointCloud([[0.0]])
        with pytest.raises(ShapeError):
            Trajectory((0.0, 0.0), (state, state))
        with pytest.raises(ShapeError):
            Trajectory((0.0, 1.0), (state, PointCloud([[0.0, 1.0]])))


@pytest.mark.unit
class TestTrain:
    def test_smoke(self, tiny_net_config, temp_dir):
        seen = []
        cfg = circles_config(tiny_net_config, checkpoint_path=temp_dir / "model.wownn")
        result = train(cfg, on_record=seen.append)
        assert [record.step for record in result.log] == [0, 1, 2]
        assert seen == result.log
        assert all(np.isfinite(record.loss) for record in result.log)
        assert (temp_dir / "model.wownn").exists()

    def test_same_seed_same_checkpoint(self, tiny_net_config):
        for outer, inner in (("w", "w"), ("sw", "sw"), ("ind", "ind")):
            coupling = CouplingConfig(outer=outer, inner=inner)
            first = train(circles_config(tiny_net_config, coupling=coupling)).net
            second = train(circles_config(tiny_net_config, coupling=coupling)).net
            assert encode_checkpoint(first) == encode_checkpoint(second)

    def test_training_reduces_loss(self, tiny_net_config):
        cfg = circles_config(tiny_net_config, steps=80, lr=5e-2, coupling=CouplingConfig(outer="w", inner="w"))
        result = train(cfg)
        assert result.window_mean(10) < result.window_mean(10, last=False)

    @pytest.mark.slow
    def test_kinetic_energy_matches_wow2_after_training(self):
        source = MetaBatch.of([PointCloud([[-0.2, 0.0, 0.2]]), PointCloud([[0.8, 1.0, 1.2]])])
        target = MetaBatch.of([PointCloud([[2.7, 3.0, 3.3]]), PointCloud([[3.7, 4.0, 4.3]])])
        net_config = NetConfig(
            dim=1, k_local=1, mlp_layers=2, hidden_width=16, attn_heads=1, attn_dim=8, time_embed_dim=8,
            time_freq_max=10.0,
        )
        cfg = TrainConfig(
            steps=1500,
            batch=2,
            lr=1e-2,
            coupling=CouplingConfig(outer="w", inner="w"),
            source=SourceSpec(kind="empirical", dataset=CloudDataset.of(source.clouds)),
            target=SourceSpec(kind="empirical", dataset=CloudDataset.of(target.clouds)),
            n_range=(3, 3),
            seed=5,
            net=net_config,
            log_every=0,
        )
        net = train(cfg).net
        energy = np.mean([kinetic_energy(net, cloud, 50) for cloud in source])
        distance, _ = wow2(source, target)
        assert distance == pytest.approx(9.0 + 0.02 / 3)
        assert energy == pytest.approx(distance, rel=0.1)

    def test_lazy_linear_with_reference(self, tiny_net_config, circle_dataset):
        ref = compute_barycenter(circle_dataset.batch(range(8)), 12, seed=0)
        cfg = circles_config(
            tiny_net_config,
            coupling=CouplingConfig(outer="llw", inner="llw"),
            source=SourceSpec(kind="barycentric_noise", ref=ref),
            target=SourceSpec(kind="empirical", dataset=circle_dataset),
            n_range=(12, 12),
        )
        assert len(train(cfg, ref).log) == 3

    def test_lazy_linear_without_reference(self, tiny_net_config):
        cfg = circles_config(tiny_net_config, coupling=CouplingConfig(outer="llw"))
        with pytest.raises(ConfigError, match="reference"):
            train(cfg)

    def test_points_must_exceed_neighbours(self, tiny_net_config):
        with pytest.raises(ConfigError, match="k_local"):
            train(circles_config(tiny_net_config, n_range=(2, 4)))

    def test_dimension_mismatch(self, tiny_net_config):
        cfg = circles_config(tiny_net_config, source=SourceSpec(dim=3))
        with pytest.raises(ConfigError, match="dim"):
            train(cfg)

    def test_non_finite_loss_reports_step(self, tiny_net_config, mocker):
        mocker.patch("wow_flow.flow.fm_loss", return_value=(float("nan"), {}))
        with pytest.raises(NumericError) as excinfo:
            train(circles_config(tiny_net_config))
        assert excinfo.value.step == 0
        assert excinfo.value.seed_state == {"seed": 7, "label": "step", "index": 0}


@pytest.mark.unit
class TestOutputs:
    def test_train_log(self, temp_dir, tiny_net):
        records = [TrainRecord(0, 1.5, 0.25, 1.0), TrainRecord(1, 0.5, 0.125, 1.0)]
        path = write_train_log(temp_dir / "log.csv", records)
        with path.open() as fh:
            rows = list(csv.reader(fh))
        assert tuple(rows[0]) == TRAIN_LOG_HEADER
        assert rows[1] == ["0", "1.5", "0.250", "1.000"]
        assert TrainResult(tiny_net, records).window_mean() == pytest.approx(1.0)

    def test_trajectories(self, temp_dir):
        traj = path_of((0, 0), (1, 0))
        path = write_trajectories(temp_dir / "traj.csv", [traj, traj])
        with path.open() as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["t", "cloud_id", "point_id", "c0", "c1"]
        assert len(rows) == 1 + 2 * 2

    def test_no_trajectories(self, temp_dir):
        with pytest.raises(ShapeError):
            write_trajectories(temp_dir / "traj.csv", [])
