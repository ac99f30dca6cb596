"""
Experiment settings shared by every command.

``RunConfig`` is a flat record: one field per key of a run file or command-line flag. Values
come from defaults, then a run file, then flags. ``to_lines()`` renders the record back to the
run-file form so ``--dump-config`` output re-parses to an equal record.
"""

from dataclasses import MISSING, dataclass, field, fields, replace
from typing import Any, Callable, Dict, Iterable, List, Mapping, Optional, Tuple

from config import (
    DEFAULT_BARYCENTER_MAX_ITER,
    DEFAULT_BATCH_SIZE,
    DEFAULT_BENCH_BATCHES,
    DEFAULT_BENCH_COUPLINGS,
    DEFAULT_BENCH_POINTS,
    DEFAULT_BENCH_RUNS,
    DEFAULT_CENTER_RANGE,
    DEFAULT_CHECKPOINT_EVERY,
    DEFAULT_CIRCLE_RADIUS,
    DEFAULT_EULER_STEPS,
    DEFAULT_GENERATE_COUNT,
    DEFAULT_KDE_LIMIT,
    DEFAULT_LEARNING_RATE,
    DEFAULT_LOG_EVERY,
    DEFAULT_N_RANGE,
    DEFAULT_NNA_METRICS,
    DEFAULT_NNA_REPETITIONS,
    DEFAULT_NNA_SAMPLES,
    DEFAULT_SIGMA_RANGE,
    DEFAULT_SINKHORN_MAX_ITER,
    DEFAULT_SINKHORN_TOL,
    DEFAULT_SLICES,
    DEFAULT_STEPS,
)
from data.sources import SourceKind
from wow_flow.couplings import CouplingConfig, CouplingKind
from wow_flow.errors import ConfigError, ShapeError
from wow_flow.evaluation import Metric
from wow_flow.net import NetConfig, circles_net_config, mnist_net_config
from wow_flow.utils.validators import validate_positive_float, validate_positive_int, validate_range

__all__ = ["RunConfig", "NET_PRESETS", "parse_coupling_pair"]

NET_PRESETS: Dict[str, Callable[[int], NetConfig]] = {
    "circles": circles_net_config,
    "mnist": mnist_net_config,
}

_NET_OVERRIDES = ("k_local", "mlp_layers", "hidden_width", "attn_heads", "attn_dim", "time_embed_dim")


def _split(text: str) -> List[str]:
    return [item.strip() for item in str(text).split(",") if item.strip()]


def _parse_bool(text: str) -> bool:
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text}")


_PARSERS: Dict[str, Callable[[str], Any]] = {
    "int": int,
    "float": float,
    "str": str,
    "bool": _parse_bool,
    "ints": lambda text: tuple(int(item) for item in _split(text)),
    "strs": lambda text: tuple(_split(text)),
}


def _render(kind: str, value: Any) -> str:
    if kind in ("ints", "strs"):
        return ",".join(str(item) for item in value)
    if kind == "float":
        return repr(float(value))
    if kind == "bool":
        return "true" if value else "false"
    return str(value)


def _key(kind: str, default: Any = None, doc: str = "") -> Any:
    return field(default=default, metadata={"kind": kind, "help": doc})


def parse_coupling_pair(text: str) -> Tuple[CouplingKind, CouplingKind]:
    """``"w:w"`` style (outer, inner) pair."""
    parts = str(text).split(":")
    if len(parts) != 2:
        raise ConfigError(f"coupling pair '{text}' must look like outer:inner")
    return CouplingKind.parse(parts[0]), CouplingKind.parse(parts[1])


@dataclass(frozen=True)
class RunConfig:
    """Every experiment setting, flat. Optional fields left at None are omitted from dumps."""

    seed: int = _key("int", 0, "master seed")
    threads: int = _key("int", 1, "workers for cost and distance matrices")
    out: Optional[str] = _key("str", None, "output path")

    # training
    steps: Optional[int] = _key("int", None, "gradient steps")
    epochs: Optional[int] = _key("int", None, "passes over the target dataset (when steps is unset)")
    batch: int = _key("int", DEFAULT_BATCH_SIZE, "clouds per side")
    lr: float = _key("float", DEFAULT_LEARNING_RATE, "Adam step size")
    n_low: int = _key("int", DEFAULT_N_RANGE[0], "smallest cloud size")
    n_high: int = _key("int", DEFAULT_N_RANGE[1], "largest cloud size")
    log_every: int = _key("int", DEFAULT_LOG_EVERY, "steps between progress log lines")
    checkpoint_every: int = _key("int", DEFAULT_CHECKPOINT_EVERY, "steps between checkpoints (0: end only)")

    # couplings
    outer: str = _key("str", "ind", "outer coupling: ind, w, sw, llw")
    inner: str = _key("str", "ind", "inner coupling: ind, w, sw, llw")
    slices: int = _key("int", DEFAULT_SLICES, "directions for sliced couplings")
    sinkhorn_reg: Optional[float] = _key("float", None, "entropic regularization (exact solver when unset)")
    sinkhorn_max_iter: int = _key("int", DEFAULT_SINKHORN_MAX_ITER, "Sinkhorn iteration budget")
    sinkhorn_tol: float = _key("float", DEFAULT_SINKHORN_TOL, "Sinkhorn marginal tolerance")
    ref: Optional[str] = _key("str", None, "reference measure container")

    # metameasures
    dim: int = _key("int", 2, "ambient dimension of noise and circle clouds")
    source: str = _key("str", "pure_noise", "source kind")
    source_dataset: Optional[str] = _key("str", None, "source dataset (empirical sources)")
    source_sigma_low: float = _key("float", DEFAULT_SIGMA_RANGE[0], "smallest source noise level")
    source_sigma_high: float = _key("float", DEFAULT_SIGMA_RANGE[1], "largest source noise level")
    source_center_low: float = _key("float", DEFAULT_CENTER_RANGE[0], "leftmost source circle centre")
    source_center_high: float = _key("float", DEFAULT_CENTER_RANGE[1], "rightmost source circle centre")
    source_offset: float = _key("float", 0.0, "vertical source circle centre")
    source_radius: float = _key("float", DEFAULT_CIRCLE_RADIUS, "source circle radius")
    target: str = _key("str", "empirical", "target kind")
    target_dataset: Optional[str] = _key("str", None, "target dataset (empirical targets)")
    target_sigma_low: float = _key("float", DEFAULT_SIGMA_RANGE[0], "smallest target noise level")
    target_sigma_high: float = _key("float", DEFAULT_SIGMA_RANGE[1], "largest target noise level")
    target_center_low: float = _key("float", DEFAULT_CENTER_RANGE[0], "leftmost target circle centre")
    target_center_high: float = _key("float", DEFAULT_CENTER_RANGE[1], "rightmost target circle centre")
    target_offset: float = _key("float", 0.0, "vertical target circle centre")
    target_radius: float = _key("float", DEFAULT_CIRCLE_RADIUS, "target circle radius")

    # network
    net: str = _key("str", "circles", "network preset: circles or mnist")
    k_local: Optional[int] = _key("int", None, "nearest-neighbour distances per point")
    mlp_layers: Optional[int] = _key("int", None, "residual MLP blocks")
    hidden_width: Optional[int] = _key("int", None, "MLP width")
    attn_heads: Optional[int] = _key("int", None, "attention heads")
    attn_dim: Optional[int] = _key("int", None, "attention width")
    time_embed_dim: Optional[int] = _key("int", None, "time embedding size")

    # generation
    checkpoint: Optional[str] = _key("str", None, "network checkpoint")
    euler_steps: Tuple[int, ...] = _key("ints", DEFAULT_EULER_STEPS, "Euler step counts")
    generate_count: int = _key("int", DEFAULT_GENERATE_COUNT, "clouds to generate")
    points: Optional[int] = _key("int", None, "points per generated or converted cloud")
    traj: Optional[str] = _key("str", None, "trajectory CSV")

    # evaluation
    generated: Optional[str] = _key("str", None, "generated dataset")
    real: Optional[str] = _key("str", None, "real dataset")
    metrics: Tuple[str, ...] = _key("strs", DEFAULT_NNA_METRICS, "NNA metrics")
    nna_n: int = _key("int", DEFAULT_NNA_SAMPLES, "clouds per side per repetition")
    repetitions: int = _key("int", DEFAULT_NNA_REPETITIONS, "NNA repetitions")
    eval_steps: Optional[int] = _key("int", None, "Euler steps recorded in the NNA CSV")
    kde: Optional[str] = _key("str", None, "directory for KDE PGM grids")
    kde_limit: int = _key("int", DEFAULT_KDE_LIMIT, "clouds to render as KDE grids")

    # barycenter
    dataset: Optional[str] = _key("str", None, "dataset to align")
    support: Optional[int] = _key("int", None, "barycenter support size")
    barycenter_max_iter: int = _key("int", DEFAULT_BARYCENTER_MAX_ITER, "Lloyd iterations")

    # benchmark
    bench_batches: Tuple[int, ...] = _key("ints", DEFAULT_BENCH_BATCHES, "batch sizes")
    bench_points: Tuple[int, ...] = _key("ints", DEFAULT_BENCH_POINTS, "cloud sizes")
    bench_runs: int = _key("int", DEFAULT_BENCH_RUNS, "repetitions per grid cell")
    bench_couplings: Tuple[str, ...] = _key("strs", DEFAULT_BENCH_COUPLINGS, "outer:inner pairs")

    # conversion
    idx: Optional[str] = _key("str", None, "IDX image file")
    limit: Optional[int] = _key("int", None, "images to convert")

    def __post_init__(self):
        try:
            validate_positive_int(self.batch, "batch")
            validate_positive_int(self.threads, "threads")
            validate_positive_int(self.n_low, "n_low")
            validate_range(self.n_low, self.n_high, "n")
            validate_positive_float(self.lr, "lr")
            validate_positive_int(self.log_every, "log_every", minimum=0)
            validate_positive_int(self.checkpoint_every, "checkpoint_every", minimum=0)
            validate_positive_int(self.dim, "dim")
            for side in ("source", "target"):
                validate_range(getattr(self, f"{side}_sigma_low"), getattr(self, f"{side}_sigma_high"), f"{side}_sigma")
                validate_range(
                    getattr(self, f"{side}_center_low"), getattr(self, f"{side}_center_high"), f"{side}_center"
                )
            for name in ("steps", "epochs", "support", "points", "limit", "eval_steps"):
                if getattr(self, name) is not None:
                    validate_positive_int(getattr(self, name), name, minimum=0 if name == "steps" else 1)
            for steps in self.euler_steps:
                validate_positive_int(steps, "euler_steps")
            validate_positive_int(self.nna_n, "nna_n", minimum=2)
            validate_positive_int(self.repetitions, "repetitions")
            validate_positive_int(self.bench_runs, "bench_runs")
        except TypeError as err:
            raise ConfigError(str(err))
        self.coupling_config()
        SourceKind.parse(self.source)
        SourceKind.parse(self.target)
        for metric in self.metrics:
            Metric.parse(metric)
        for pair in self.bench_couplings:
            parse_coupling_pair(pair)
        if self.net not in NET_PRESETS:
            raise ConfigError(f"unknown net preset '{self.net}', expected one of: {', '.join(NET_PRESETS)}")

    @classmethod
    def keys(cls) -> Tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    @classmethod
    def help_for(cls, key: str) -> str:
        return next(f.metadata["help"] for f in fields(cls) if f.name == key)

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any], base: Optional["RunConfig"] = None) -> "RunConfig":
        """
        Build a config from ``mapping`` layered over ``base`` (defaults when omitted).

        String values are parsed according to the field's kind; other values are taken as is.
        ``None`` values leave the base value in place.

        Raises:
            ConfigError: For unknown keys or values that do not parse or validate.
        """
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(mapping) - set(known))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")

        changes: Dict[str, Any] = {}
        for key, value in mapping.items():
            if value is None:
                continue
            kind = known[key].metadata["kind"]
            if isinstance(value, str):
                if value.strip().lower() in ("", "none"):
                    changes[key] = None
                    continue
                try:
                    value = _PARSERS[kind](value)
                except ValueError as err:
                    raise ConfigError(f"invalid value for {key}: {err}")
            elif kind in ("ints", "strs"):
                value = tuple(value)
            changes[key] = value

        for key, value in changes.items():
            if value is None and known[key].default is not None and known[key].default is not MISSING:
                raise ConfigError(f"{key} cannot be empty")
        try:
            return replace(base or cls(), **changes)
        except ShapeError as err:
            raise ConfigError(str(err))

    def merged(self, overrides: Mapping[str, Any]) -> "RunConfig":
        """Flag overrides on top of this config; keys mapped to None are ignored."""
        return RunConfig.from_mapping({k: v for k, v in overrides.items() if v is not None}, base=self)

    def to_lines(self) -> List[str]:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            lines.append(f"{f.name} = {_render(f.metadata['kind'], value)}")
        return lines

    def dump(self) -> str:
        return "\n".join(self.to_lines()) + "\n"

    def require(self, *names: str) -> None:
        """Raise ConfigError naming the first field in ``names`` that is unset."""
        for name in names:
            if getattr(self, name) is None:
                raise ConfigError(f"missing required setting '{name}'")

    @property
    def n_range(self) -> Tuple[int, int]:
        return self.n_low, self.n_high

    def coupling_config(self) -> CouplingConfig:
        return CouplingConfig(
            outer=self.outer,
            inner=self.inner,
            slices=self.slices,
            sinkhorn_reg=self.sinkhorn_reg,
            sinkhorn_max_iter=self.sinkhorn_max_iter,
            sinkhorn_tol=self.sinkhorn_tol,
            threads=self.threads,
        )

    def net_config(self, dim: int) -> NetConfig:
        """Preset network for ``dim`` with any per-field overrides applied."""
        base = NET_PRESETS[self.net](dim)
        overrides = {name: getattr(self, name) for name in _NET_OVERRIDES if getattr(self, name) is not None}
        try:
            return replace(base, **overrides)
        except ShapeError as err:
            raise ConfigError(f"invalid network settings: {err}")

    def coupling_pairs(self) -> Iterable[Tuple[CouplingKind, CouplingKind]]:
        return [parse_coupling_pair(pair) for pair in self.bench_couplings]

    def resolved_steps(self) -> Optional[int]:
        """Explicit steps, or None when epochs drive the budget, or the default budget."""
        if self.steps is not None:
            return self.steps
        if self.epochs is not None:
            return None
        return DEFAULT_STEPS
