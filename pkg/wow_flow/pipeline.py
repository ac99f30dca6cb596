#!/usr/bin/env python
from collections import Counter
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from config import CONST_CHECKPOINT_NAME, CONST_TRAIN_LOG_NAME, WowConfig, default_config
from config.run_config import RunConfig
from data.container import CloudDataset, read_dataset, read_reference, write_dataset, write_reference
from data.idx import read_idx
from data.images import images_to_clouds
from data.sources import SourceKind, SourceSpec, downsample, draw_source
from wow_flow.bench import BenchRecord, benchmark_grid, write_bench_csv
from wow_flow.checkpoint import load_checkpoint
from wow_flow.errors import ConfigError, wow_operation
from wow_flow.evaluation import NNASummary, kde_grid, nna_repeated, summarize_nna, write_nna_csv, write_pgm
from wow_flow.flow import TrainConfig, TrainResult, euler_sample_batch, straightness, train, write_train_log, \
    write_trajectories
from wow_flow.linearized import ReferenceMeasure, align_batch, compute_barycenter
from wow_flow.utils.seeding import child_rng

__all__ = ["WowFlow"]


class WowFlow:
    """Runs wow_flow commands against one configuration.

    Every command reads its settings from ``config.run``, writes its artifacts under the
    command's output directory and returns what it produced.

    Attributes:
        config: Home, logging and run settings.
        run: The experiment settings (``config.run``, or defaults).
        version: The version of wow_flow.
        logger: The logger used for progress and diagnostics.
    """

    def __init__(self, config: Optional[WowConfig] = None):
        self.config = config or default_config()
        self.run: RunConfig = self.config.run or RunConfig()
        self.version = self.config.version
        self.logger = self.config.get_logger()
        self.logger.name = __name__

        for path_name, path_obj in [
            ("Base directory", self.config.wow_home),
            ("Runs directory", self.config.runs_dir),
            ("Log directory", self.config.log_dir),
        ]:
            self.logger.debug(f"Using {path_name}: {path_obj}")

    def __repr__(self) -> str:
        return f"WowFlow(home={self.config.wow_home}, version={self.version})"

    def output_dir(self, label: str) -> Path:
        out = Path(self.run.out) if self.run.out else self.config.run_dir(label)
        out.mkdir(parents=True, exist_ok=True)
        return out

    def load_reference(self) -> Optional[ReferenceMeasure]:
        return None if self.run.ref is None else read_reference(self.run.ref)

    def source_spec(self, side: str, ref: Optional[ReferenceMeasure] = None) -> SourceSpec:
        """
        The ``source`` or ``target`` metameasure described by the run settings.

        Raises:
            ConfigError: If an empirical side has no dataset path or a barycentric side has no reference.
        """
        run = self.run
        kind = SourceKind.parse(getattr(run, side))
        settings = dict(
            sigma_range=(getattr(run, f"{side}_sigma_low"), getattr(run, f"{side}_sigma_high")),
            dim=run.dim,
            center_range=(getattr(run, f"{side}_center_low"), getattr(run, f"{side}_center_high")),
            offset=getattr(run, f"{side}_offset"),
            radius=getattr(run, f"{side}_radius"),
        )
        if kind is SourceKind.EMPIRICAL:
            path = getattr(run, f"{side}_dataset")
            if path is None:
                raise ConfigError(f"{side} is empirical but '{side}_dataset' is not set")
            return SourceSpec.from_path(path, **settings)
        if kind is SourceKind.BARYCENTRIC_NOISE:
            if ref is None:
                raise ConfigError(f"barycentric_noise {side} requires a reference measure (ref)")
            settings["ref"] = ref
        return SourceSpec(kind=kind, **settings)

    def _with_alignments(self, spec: SourceSpec, ref: ReferenceMeasure) -> SourceSpec:
        """Empirical spec whose dataset carries alignment permutations to ``ref``."""
        dataset = spec.dataset
        if spec.kind is not SourceKind.EMPIRICAL or dataset.has_perms:
            return spec
        if any(cloud.count != ref.count for cloud in dataset):
            # larger clouds are downsampled per step and aligned on the fly
            return spec
        self.logger.info(f"aligning {dataset.count} clouds of {spec.dataset_path} to the reference")
        perms = align_batch(dataset.clouds, ref, self.run.threads)
        return replace(spec, dataset=dataset.with_perms(perms))

    @wow_operation(error_message="Training failed")
    def train(self) -> TrainResult:
        """Train a velocity field; writes the checkpoint and the training log."""
        run = self.run
        coupling = run.coupling_config()
        ref = self.load_reference()
        coupling.check_reference(ref)
        source = self.source_spec("source", ref)
        target = self.source_spec("target", ref)
        if coupling.requires_reference:
            target = self._with_alignments(target, ref)
            source = self._with_alignments(source, ref)

        out = self.output_dir("train")
        cfg = TrainConfig(
            steps=run.resolved_steps(),
            epochs=run.epochs,
            batch=run.batch,
            lr=run.lr,
            coupling=coupling,
            source=source,
            target=target,
            n_range=run.n_range,
            seed=run.seed,
            net=run.net_config(target.cloud_dim),
            checkpoint_every=run.checkpoint_every,
            checkpoint_path=out / CONST_CHECKPOINT_NAME,
            log_every=run.log_every,
        )
        result = train(cfg, ref)
        write_train_log(out / CONST_TRAIN_LOG_NAME, result.log)
        self.logger.info(f"training finished: checkpoint {cfg.checkpoint_path}, final mean loss "
                         f"{result.window_mean():.6g}")
        return result

    @wow_operation(error_message="Generation failed")
    def generate(self) -> Dict[int, Path]:
        """Integrate source clouds with each configured Euler step count; one WOWDS1 file per count."""
        run = self.run
        run.require("checkpoint")
        net = load_checkpoint(run.checkpoint)
        spec = self.source_spec("source", self.load_reference())
        count = run.points or run.n_high
        if spec.cloud_dim != net.config.dim:
            raise ConfigError(f"checkpoint expects dim {net.config.dim}, source clouds have dim {spec.cloud_dim}")
        if count <= net.config.k_local:
            raise ConfigError(f"points {count} must exceed the checkpoint's k_local {net.config.k_local}")

        sources = draw_source(spec, count, run.generate_count, child_rng(run.seed, "generate"))
        out = self.output_dir("generate")
        written = {}
        for steps in run.euler_steps:
            trajectories = euler_sample_batch(net, sources.clouds, steps)
            ends = CloudDataset.of([traj.end for traj in trajectories])
            written[steps] = write_dataset(out / f"generated_k{steps}.wowds", ends)
            mean_straightness = float(np.mean([straightness(traj) for traj in trajectories]))
            self.logger.info(f"generated {ends.count} clouds with {steps} Euler steps, "
                             f"mean straightness {mean_straightness:.4f}")
            if run.traj:
                traj_path = Path(run.traj)
                if len(run.euler_steps) > 1:
                    traj_path = traj_path.with_name(f"{traj_path.stem}_k{steps}{traj_path.suffix}")
                write_trajectories(traj_path, trajectories)
        return written

    @wow_operation(error_message="Evaluation failed")
    def evaluate(self) -> List[NNASummary]:
        """NNA of generated against real clouds for every configured metric; optional KDE grids."""
        run = self.run
        run.require("generated", "real")
        generated = read_dataset(run.generated)
        real = read_dataset(run.real)
        if generated.dim != real.dim:
            raise ConfigError(f"generated clouds have dim {generated.dim}, real clouds have dim {real.dim}")
        size = min(run.nna_n, generated.count, real.count)
        if size < run.nna_n:
            self.logger.warning(f"nna_n {run.nna_n} exceeds the available clouds; using {size}")

        out = self.output_dir("eval")
        solver = run.coupling_config().solver
        summaries = []
        for metric in run.metrics:
            reports = nna_repeated(generated.clouds, real.clouds, metric, size, run.repetitions, run.seed, solver,
                                   run.threads)
            summary = summarize_nna(reports, run.eval_steps)
            self.logger.info(f"nna {summary.metric.value}: {summary.accuracy_mean:.4f} +- {summary.accuracy_std:.4f}")
            summaries.append(summary)
        write_nna_csv(out / "nna.csv", summaries)

        if run.kde:
            if generated.dim != 2:
                raise ConfigError(f"kde grids need 2D clouds, got dim {generated.dim}")
            for index, cloud in enumerate(generated.clouds[:run.kde_limit]):
                write_pgm(Path(run.kde) / f"cloud_{index:04d}.pgm", kde_grid(cloud))
        return summaries

    @wow_operation(error_message="Barycenter failed")
    def barycenter(self) -> ReferenceMeasure:
        """Barycenter of a dataset plus the dataset's alignment permutations."""
        run = self.run
        run.require("dataset")
        dataset = read_dataset(run.dataset)
        if dataset.count == 0:
            raise ConfigError(f"dataset {run.dataset} is empty")
        support = run.support or Counter(cloud.count for cloud in dataset).most_common(1)[0][0]
        rng = child_rng(run.seed, "barycenter")
        too_small = [i for i, cloud in enumerate(dataset) if cloud.count < support]
        if too_small:
            raise ConfigError(f"{len(too_small)} clouds have fewer than support={support} points")
        clouds = CloudDataset.of([downsample(cloud, support, rng) for cloud in dataset])

        ref = compute_barycenter(clouds.batch(range(clouds.count)), support, run.barycenter_max_iter, seed=rng,
                                 threads=run.threads)
        perms = align_batch(clouds.clouds, ref, run.threads)
        out = self.output_dir("barycenter")
        write_reference(out / "reference.wowds", ref)
        write_dataset(out / "aligned.wowds", clouds.with_perms(perms))
        return ref

    @wow_operation(error_message="Benchmark failed")
    def bench(self) -> List[BenchRecord]:
        run = self.run
        records = benchmark_grid(run.coupling_pairs(), run.bench_batches, run.bench_points, run.bench_runs, run.seed,
                                 run.threads)
        write_bench_csv(self.output_dir("bench") / "bench.csv", records)
        return records

    @wow_operation(error_message="IDX conversion failed")
    def convert_idx(self) -> Path:
        """IDX images to a WOWDS1 dataset at ``out`` (a file path for this command)."""
        run = self.run
        run.require("idx", "out")
        images = read_idx(run.idx)
        clouds = images_to_clouds(images, run.points or run.n_high, run.seed, run.limit)
        if not clouds:
            raise ConfigError(f"{run.idx} holds no images")
        path = write_dataset(run.out, CloudDataset.of(clouds))
        self.logger.info(f"converted {len(clouds)} images from {run.idx} into {path}")
        return path
