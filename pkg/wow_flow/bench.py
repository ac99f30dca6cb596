"""
Wall-clock cost of the coupling step.

Each grid cell times ``sample_paired_batch`` for one (outer, inner) pair on B uniform clouds of
N points per side in [0, 1]^2. For llw pairs the alignment of both batches to the reference
happens before the clock starts, as it would be precomputed once per dataset.
"""

from dataclasses import dataclass
from logging import getLogger
from pathlib import Path
from time import perf_counter
from typing import Iterable, List, Sequence, Tuple, Union

import numpy as np

from data.generators import gen_uniform_cloud
from wow_flow.couplings import CouplingConfig, CouplingKind, sample_paired_batch
from wow_flow.linearized import ReferenceMeasure, align_batch
from wow_flow.measures import MetaBatch
from wow_flow.utils.csv_io import write_csv
from wow_flow.utils.seeding import child_rng

__all__ = ["BenchRecord", "BENCH_HEADER", "time_coupling", "benchmark_grid", "write_bench_csv"]

logger = getLogger(__name__)

BENCH_HEADER = ("outer", "inner", "batch", "points", "mean_ms", "std_ms", "runs")


@dataclass(frozen=True)
class BenchRecord:
    outer: CouplingKind
    inner: CouplingKind
    batch: int
    points: int
    mean_ms: float
    std_ms: float
    runs: int

    def row(self) -> Tuple:
        return (self.outer.value, self.inner.value, self.batch, self.points,
                f"{self.mean_ms:.4f}", f"{self.std_ms:.4f}", self.runs)


def _uniform_batch(batch: int, points: int, rng: np.random.Generator) -> MetaBatch:
    return MetaBatch(tuple(gen_uniform_cloud(2, points, rng) for _ in range(batch)))


def time_coupling(
        outer: CouplingKind, inner: CouplingKind, batch: int, points: int, runs: int, seed: int = 0, threads: int = 1
) -> BenchRecord:
    """Mean and standard deviation over ``runs`` timed coupling solves of one grid cell."""
    cfg = CouplingConfig(outer=outer, inner=inner, threads=threads)
    timings: List[float] = []
    for run in range(runs):
        rng = child_rng(seed, f"bench-{cfg.label}-{batch}-{points}", run)
        src = _uniform_batch(batch, points, rng)
        tgt = _uniform_batch(batch, points, rng)
        ref = perms = src_perms = None
        if cfg.requires_reference:
            ref = ReferenceMeasure(gen_uniform_cloud(2, points, rng))
            perms = align_batch(tgt.clouds, ref, threads)
            src_perms = align_batch(src.clouds, ref, threads)
        started = perf_counter()
        sample_paired_batch(src, tgt, cfg, ref=ref, perms=perms, seed=rng, src_perms=src_perms)
        timings.append((perf_counter() - started) * 1000.0)
    values = np.asarray(timings)
    record = BenchRecord(outer, inner, batch, points, float(values.mean()), float(values.std()), runs)
    logger.info(f"bench {cfg.label} B={batch} N={points}: {record.mean_ms:.3f} +- {record.std_ms:.3f} ms")
    return record


def benchmark_grid(
        pairs: Iterable[Tuple[CouplingKind, CouplingKind]],
        batches: Sequence[int],
        points: Sequence[int],
        runs: int,
        seed: int = 0,
        threads: int = 1,
) -> List[BenchRecord]:
    """One record per (pair, B, N), pairs outermost, then B, then N."""
    return [
        time_coupling(outer, inner, batch, count, runs, seed, threads)
        for outer, inner in pairs
        for batch in batches
        for count in points
    ]


def write_bench_csv(path: Union[str, Path], records: Iterable[BenchRecord]) -> Path:
    return write_csv(path, BENCH_HEADER, (record.row() for record in records))
