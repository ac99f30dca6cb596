"""
Flow-matching training and Euler sampling on batches of point clouds.

Training draws one time t ~ Unif[0, 1] and one size N ~ Unif{N_low..N_high} per step, a batch
of source clouds and a batch of target clouds, couples them, and regresses the network output
at the interpolated cloud onto the displacement x' - x of every matched point pair. Couplings
are recomputed at every step.

Sampling integrates the learned field with fixed-step explicit Euler; the field sees the whole
current cloud, so every point moves jointly.
"""

from dataclasses import dataclass, field
from logging import getLogger
from pathlib import Path
from time import perf_counter
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from data.sources import EpochSampler, SourceKind, SourceSpec, draw_source
from wow_flow.checkpoint import save_checkpoint
from wow_flow.couplings import CouplingConfig, CouplingKind, PairedBatch, draw_matched_points, sample_paired_batch
from wow_flow.errors import ConfigError, IntegrationError, NumericError, ShapeError
from wow_flow.linearized import ReferenceMeasure, align_batch
from wow_flow.measures import MetaBatch, Permutation, PointCloud, interpolate
from wow_flow.net import (
    AdamState,
    NetConfig,
    Params,
    VelocityNet,
    adam_step,
    backward,
    forward,
    forward_with_cache,
    init_net,
)
from wow_flow.utils.csv_io import write_csv
from wow_flow.utils.seeding import SeedLike, as_generator, child_rng

__all__ = [
    "TrainConfig",
    "TrainRecord",
    "TrainResult",
    "Trajectory",
    "fm_loss",
    "train",
    "euler_sample",
    "euler_sample_batch",
    "straightness",
    "kinetic_energy",
    "write_train_log",
    "write_trajectories",
    "TRAIN_LOG_HEADER",
]

logger = getLogger(__name__)

TRAIN_LOG_HEADER = ("step", "loss", "coupling_ms", "step_ms")

Field = Union[VelocityNet, Callable[[float, PointCloud], np.ndarray]]


@dataclass(frozen=True)
class TrainConfig:
    """
    Everything a training run needs besides the data itself.

    Attributes:
        steps: Gradient steps; derived from ``epochs`` when None.
        epochs: Passes over an empirical target dataset (used when ``steps`` is None).
        batch: Clouds per side B.
        lr: Adam step size.
        coupling: Outer and inner coupling.
        source: Source metameasure.
        target: Target metameasure.
        n_range: Inclusive (N_low, N_high) range for the per-step cloud size.
        seed: Master seed.
        net: Network hyperparameters.
        checkpoint_every: Save every this many steps (0 disables intermediate saves).
        checkpoint_path: Where intermediate and final checkpoints go.
        log_every: Log an INFO line every this many steps.
    """

    steps: Optional[int] = None
    epochs: Optional[int] = None
    batch: int = 8
    lr: float = 5e-4
    coupling: CouplingConfig = field(default_factory=CouplingConfig)
    source: SourceSpec = field(default_factory=SourceSpec)
    target: SourceSpec = field(default_factory=SourceSpec)
    n_range: Tuple[int, int] = (30, 30)
    seed: int = 0
    net: NetConfig = field(default_factory=NetConfig)
    checkpoint_every: int = 0
    checkpoint_path: Optional[Path] = None
    log_every: int = 100

    def __post_init__(self):
        if self.batch < 1:
            raise ConfigError(f"batch must be >= 1, got {self.batch}")
        low, high = self.n_range
        if low < 1 or low > high:
            raise ConfigError(f"n_range ({low}, {high}) must satisfy 1 <= low <= high")
        if self.steps is None and self.epochs is None:
            raise ConfigError("either steps or epochs must be set")
        if self.steps is not None and self.steps < 0:
            raise ConfigError(f"steps must be >= 0, got {self.steps}")
        if not self.lr > 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")

    def total_steps(self) -> int:
        """Step budget; epochs count passes over the empirical target dataset."""
        if self.steps is not None:
            return self.steps
        if self.target.kind is not SourceKind.EMPIRICAL or self.target.dataset is None:
            raise ConfigError("epochs require an empirical target dataset")
        return int(np.ceil(self.epochs * self.target.dataset.count / self.batch))


@dataclass(frozen=True)
class TrainRecord:
    step: int
    loss: float
    coupling_ms: float
    step_ms: float

    def row(self) -> Tuple:
        return self.step, repr(self.loss), f"{self.coupling_ms:.3f}", f"{self.step_ms:.3f}"


@dataclass
class TrainResult:
    net: VelocityNet
    log: List[TrainRecord]

    def window_mean(self, size: int = 100, last: bool = True) -> float:
        """Mean loss over the last (or first) ``size`` steps."""
        losses = [record.loss for record in self.log]
        if not losses:
            return float("nan")
        window = losses[-size:] if last else losses[:size]
        return float(np.mean(window))


@dataclass(frozen=True)
class Trajectory:
    """States of one cloud at increasing times t_0 = 0 < ... < t_K = 1."""

    times: Tuple[float, ...]
    states: Tuple[PointCloud, ...]

    def __post_init__(self):
        if len(self.times) != len(self.states) or len(self.states) < 1:
            raise ShapeError("trajectory needs one state per time")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ShapeError("trajectory times must be strictly increasing")
        shapes = {state.coords.shape for state in self.states}
        if len(shapes) != 1:
            raise ShapeError(f"trajectory states change shape: {sorted(shapes)}")

    @property
    def start(self) -> PointCloud:
        return self.states[0]

    @property
    def end(self) -> PointCloud:
        return self.states[-1]


def fm_loss(net: VelocityNet, paired: PairedBatch, t: float, seed: SeedLike = None) -> Tuple[float, Params]:
    """
    Monte Carlo flow-matching loss and its parameter gradients.

    For each pair in order, matched points (x, x') are drawn from the inner plan, the network
    is evaluated at (1 - t) x + t x', and the squared deviation from x' - x is averaged over
    points; the loss is the mean over pairs.

    Args:
        net: The velocity field.
        paired: Pairs with inner plans.
        t: Interpolation time shared by the batch.
        seed: Seed for the inner-plan draws, consumed pair by pair.

    Returns:
        Tuple[float, Params]: The loss and its gradients, accumulated in pair order.
    """
    rng = as_generator(seed)
    size = len(paired)
    total = 0.0
    grads: Params = {name: np.zeros_like(value) for name, value in net.params.items()}
    for pair in paired:
        x, x_prime = draw_matched_points(pair, rng)
        velocity, cache = forward_with_cache(net, t, interpolate(x, x_prime, t))
        diff = velocity - (x_prime.coords - x.coords)
        count = x.count
        total += float(np.sum(diff * diff)) / count
        pair_grads = backward(net, cache, 2.0 * diff / (size * count))
        for name in grads:
            grads[name] += pair_grads[name]
    return total / size, grads


def _target_perms(
        spec: SourceSpec, batch: MetaBatch, indices: Optional[np.ndarray], ref: ReferenceMeasure, threads: int
) -> List[Permutation]:
    """Alignment permutations of a drawn batch, reusing stored ones when the clouds were not resampled."""
    if spec.pre_aligned:
        return [Permutation.identity(cloud.count) for cloud in batch]
    dataset = spec.dataset
    if (
            spec.kind is SourceKind.EMPIRICAL
            and dataset is not None
            and dataset.has_perms
            and indices is not None
            and all(dataset[int(i)].count == cloud.count for i, cloud in zip(indices, batch))
    ):
        return [dataset.perms[int(i)] for i in indices]
    return align_batch(batch.clouds, ref, threads)


def _check_training_inputs(cfg: TrainConfig, ref: Optional[ReferenceMeasure]) -> None:
    cfg.coupling.check_reference(ref)
    low, high = cfg.n_range
    for side, spec in (("source", cfg.source), ("target", cfg.target)):
        spec.validate(low if low == high else None)
        if spec.kind is SourceKind.EMPIRICAL:
            spec.validate(high)
        if spec.cloud_dim != cfg.net.dim:
            raise ConfigError(f"{side} clouds have dim {spec.cloud_dim}, network expects {cfg.net.dim}")
    if low <= cfg.net.k_local:
        raise ConfigError(f"n_range low {low} must exceed k_local {cfg.net.k_local}")
    if cfg.coupling.requires_reference and (low != high or ref.count != low):
        raise ConfigError(f"llw couplings need n_range fixed at the reference size {ref.count}, got {cfg.n_range}")
    for side, spec in (("source", cfg.source), ("target", cfg.target)):
        if spec.kind is SourceKind.BARYCENTRIC_NOISE and (low != high or spec.ref.count != low):
            raise ConfigError(f"barycentric {side} needs n_range fixed at the reference size {spec.ref.count}")


def train(
        cfg: TrainConfig,
        ref: Optional[ReferenceMeasure] = None,
        net: Optional[VelocityNet] = None,
        on_record: Optional[Callable[[TrainRecord], None]] = None,
) -> TrainResult:
    """
    Run flow-matching training.

    Every step uses its own child stream of the master seed, so runs are reproducible and any
    step can be replayed from ``(seed, "step", step)``.

    Args:
        cfg: Training configuration; the target data lives in ``cfg.target``.
        ref: Reference measure for llw couplings.
        net: Starting network; a fresh one from ``cfg.net`` when omitted.
        on_record: Called with every log record as it is produced.

    Returns:
        TrainResult: The trained network and one record per step.

    Raises:
        ConfigError: For inconsistent inputs, before the first step.
        NumericError: If the loss becomes non-finite.
    """
    _check_training_inputs(cfg, ref)
    steps = cfg.total_steps()
    coupling = cfg.coupling
    net = net or init_net(cfg.net, child_rng(cfg.seed, "init"))
    if net.config != cfg.net:
        raise ConfigError("starting network does not match the configured architecture")
    adam = AdamState.for_params(net.params, cfg.lr)

    samplers = {
        side: EpochSampler(spec.dataset.count, child_rng(cfg.seed, f"epoch-{side}"))
        for side, spec in (("source", cfg.source), ("target", cfg.target))
        if spec.kind is SourceKind.EMPIRICAL
    }
    low, high = cfg.n_range
    log: List[TrainRecord] = []
    logger.info(f"training {coupling.label} for {steps} steps, B={cfg.batch}, N in [{low}, {high}], seed={cfg.seed}")

    for step in range(steps):
        started = perf_counter()
        rng = child_rng(cfg.seed, "step", step)
        t = float(rng.random())
        count = int(rng.integers(low, high + 1))

        drawn = {}
        for side, spec in (("source", cfg.source), ("target", cfg.target)):
            indices = samplers[side].next(cfg.batch) if side in samplers else None
            drawn[side] = (draw_source(spec, count, cfg.batch, rng, indices=indices), indices)
        (src, src_idx), (tgt, tgt_idx) = drawn["source"], drawn["target"]

        coupling_started = perf_counter()
        perms = src_perms = None
        if coupling.requires_reference:
            perms = _target_perms(cfg.target, tgt, tgt_idx, ref, coupling.threads)
            src_perms = _target_perms(cfg.source, src, src_idx, ref, coupling.threads)
        paired = sample_paired_batch(src, tgt, coupling, ref=ref, perms=perms, seed=rng, src_perms=src_perms)
        coupling_ms = (perf_counter() - coupling_started) * 1000.0

        loss, grads = fm_loss(net, paired, t, rng)
        if not np.isfinite(loss):
            seed_state = {"seed": cfg.seed, "label": "step", "index": step}
            logger.error(f"non-finite loss at step {step}; replay with {seed_state}")
            raise NumericError(f"non-finite loss {loss} at step {step}", step=step, seed_state=seed_state)
        params, adam = adam_step(adam, net.params, grads)
        net = net.with_params(params)

        record = TrainRecord(step, loss, coupling_ms, (perf_counter() - started) * 1000.0)
        log.append(record)
        if on_record is not None:
            on_record(record)
        if cfg.log_every and (step + 1) % cfg.log_every == 0:
            recent = np.mean([r.loss for r in log[-cfg.log_every:]])
            logger.info(f"step {step + 1}/{steps}: mean loss {recent:.6g}, coupling {coupling_ms:.2f} ms")
        if cfg.checkpoint_every and cfg.checkpoint_path and (step + 1) % cfg.checkpoint_every == 0:
            save_checkpoint(cfg.checkpoint_path, net)
            logger.debug(f"checkpoint written at step {step + 1}: {cfg.checkpoint_path}")

    if cfg.checkpoint_path:
        save_checkpoint(cfg.checkpoint_path, net)
    return TrainResult(net, log)


def _velocity(field_fn: Field, t: float, state: PointCloud) -> np.ndarray:
    if isinstance(field_fn, VelocityNet):
        return forward(field_fn, t, state)
    return np.asarray(field_fn(t, state), dtype=np.float64)


def euler_sample(field_fn: Field, x0: PointCloud, steps: int) -> Trajectory:
    """
    Integrate the field with ``steps`` explicit Euler steps from t = 0 to t = 1.

    Args:
        field_fn: A network or any callable ``(t, cloud) -> d x N`` velocity.
        x0: Initial cloud.
        steps: Number of steps K >= 1.

    Returns:
        Trajectory: All K + 1 states.

    Raises:
        ValueError: If ``steps`` < 1.
        IntegrationError: If a state becomes non-finite; carries the step index.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    dt = 1.0 / steps
    states = [x0]
    coords = x0.coords
    for step in range(steps):
        velocity = _velocity(field_fn, step * dt, states[-1])
        if velocity.shape != coords.shape:
            raise ShapeError(f"field returned shape {velocity.shape}, expected {coords.shape}")
        coords = coords + dt * velocity
        if not np.all(np.isfinite(coords)):
            raise IntegrationError(f"non-finite state after Euler step {step}", step=step)
        states.append(PointCloud(coords))
    times = tuple(step * dt for step in range(steps)) + (1.0,)
    return Trajectory(times, tuple(states))


def euler_sample_batch(field_fn: Field, batch: Sequence[PointCloud], steps: int) -> List[Trajectory]:
    """``euler_sample`` for every cloud of a batch, in order."""
    return [euler_sample(field_fn, cloud, steps) for cloud in batch]


def straightness(traj: Trajectory) -> float:
    """
    Mean over points of |end - start| / path length; 1 for straight paths.

    Points that never move count as straight.

    Raises:
        ShapeError: With fewer than two states.
    """
    if len(traj.states) < 2:
        raise ShapeError("straightness needs at least two states")
    stack = np.stack([state.coords for state in traj.states])
    segments = np.linalg.norm(np.diff(stack, axis=0), axis=1).sum(axis=0)
    chord = np.linalg.norm(stack[-1] - stack[0], axis=0)
    ratio = np.ones_like(chord)
    moving = segments > 0
    ratio[moving] = chord[moving] / segments[moving]
    return float(np.mean(ratio))


def kinetic_energy(field_fn: Field, x0: PointCloud, steps: int) -> float:
    """Sum over Euler steps of the mean squared point speed times dt."""
    traj = euler_sample(field_fn, x0, steps)
    dt = 1.0 / steps
    energy = 0.0
    for time, state in zip(traj.times[:-1], traj.states[:-1]):
        velocity = _velocity(field_fn, time, state)
        energy += float(np.mean(np.sum(velocity * velocity, axis=0))) * dt
    return energy


def write_train_log(path: Union[str, Path], records: Sequence[TrainRecord]) -> Path:
    return write_csv(path, TRAIN_LOG_HEADER, (record.row() for record in records))


def write_trajectories(path: Union[str, Path], trajectories: Sequence[Trajectory]) -> Path:
    """One row per (time, cloud, point): ``t,cloud_id,point_id,c0..c{d-1}``."""
    if not trajectories:
        raise ShapeError("no trajectories to write")
    dim = trajectories[0].start.dim
    header = ("t", "cloud_id", "point_id") + tuple(f"c{axis}" for axis in range(dim))

    def rows():
        for cloud_id, traj in enumerate(trajectories):
            for time, state in zip(traj.times, traj.states):
                for point_id, point in enumerate(state.points):
                    yield (repr(time), cloud_id, point_id) + tuple(repr(float(v)) for v in point)

    return write_csv(path, header, rows())
