from argparse import ArgumentDefaultsHelpFormatter, ArgumentParser, Namespace
from typing import Any, Dict, List, Optional, Sequence, Tuple

from config import WowConfig
from config.common import read_run_config
from config.run_config import RunConfig

__all__ = ["COMMANDS", "build_parser", "parse_args", "local_config", "run_overrides"]

COMMANDS: Tuple[str, ...] = ("train", "generate", "eval", "barycenter", "bench", "convert-idx")

# (flag, RunConfig key, type, extra argparse keywords)
_Flag = Tuple[str, str, Any, Dict[str, Any]]

_SOURCE_FLAGS: List[_Flag] = [
    ("--source", "source", str, {"help": "source kind: pure_noise, barycentric_noise, empirical, circles"}),
    ("--source-dataset", "source_dataset", str, {}),
    ("--source-sigma-low", "source_sigma_low", float, {}),
    ("--source-sigma-high", "source_sigma_high", float, {}),
    ("--source-center-low", "source_center_low", float, {}),
    ("--source-center-high", "source_center_high", float, {}),
    ("--source-offset", "source_offset", float, {}),
    ("--source-radius", "source_radius", float, {}),
    ("--dim", "dim", int, {}),
    ("--ref", "ref", str, {}),
]

_COMMAND_FLAGS: Dict[str, List[_Flag]] = {
    "train": [
        ("--steps", "steps", int, {}),
        ("--epochs", "epochs", int, {}),
        ("--batch", "batch", int, {}),
        ("--lr", "lr", float, {}),
        ("--n-low", "n_low", int, {}),
        ("--n-high", "n_high", int, {}),
        ("--log-every", "log_every", int, {}),
        ("--checkpoint-every", "checkpoint_every", int, {}),
        ("--outer", "outer", str, {"help": "outer coupling: ind, w, sw, llw"}),
        ("--inner", "inner", str, {"help": "inner coupling: ind, w, sw, llw"}),
        ("--slices", "slices", int, {}),
        ("--sinkhorn-reg", "sinkhorn_reg", float, {}),
        ("--sinkhorn-max-iter", "sinkhorn_max_iter", int, {}),
        ("--sinkhorn-tol", "sinkhorn_tol", float, {}),
        *_SOURCE_FLAGS,
        ("--target", "target", str, {"help": "target kind: pure_noise, barycentric_noise, empirical, circles"}),
        ("--target-dataset", "target_dataset", str, {}),
        ("--target-offset", "target_offset", float, {}),
        ("--target-radius", "target_radius", float, {}),
        ("--net", "net", str, {"help": "network preset: circles or mnist"}),
        ("--k-local", "k_local", int, {}),
        ("--mlp-layers", "mlp_layers", int, {}),
        ("--hidden-width", "hidden_width", int, {}),
    ],
    "generate": [
        ("--checkpoint", "checkpoint", str, {}),
        ("--steps", "euler_steps", int, {"action": "append", "help": "Euler steps (repeatable)"}),
        ("--count", "generate_count", int, {}),
        ("--n", "points", int, {"help": "points per generated cloud"}),
        ("--traj", "traj", str, {"help": "trajectory CSV"}),
        *_SOURCE_FLAGS,
    ],
    "eval": [
        ("--generated", "generated", str, {}),
        ("--real", "real", str, {}),
        ("--metric", "metrics", str, {"action": "append", "help": "chamfer or ot (repeatable)"}),
        ("--n", "nna_n", int, {"help": "clouds per side per repetition"}),
        ("--repetitions", "repetitions", int, {}),
        ("--euler-steps", "eval_steps", int, {"help": "Euler steps recorded in the CSV"}),
        ("--sinkhorn-reg", "sinkhorn_reg", float, {}),
        ("--kde", "kde", str, {"help": "directory for KDE PGM grids"}),
        ("--kde-limit", "kde_limit", int, {}),
    ],
    "barycenter": [
        ("--dataset", "dataset", str, {}),
        ("--support", "support", int, {}),
        ("--max-iter", "barycenter_max_iter", int, {}),
    ],
    "bench": [
        ("--batches", "bench_batches", int, {"nargs": "+"}),
        ("--points", "bench_points", int, {"nargs": "+"}),
        ("--runs", "bench_runs", int, {}),
        ("--couplings", "bench_couplings", str, {"nargs": "+", "help": "outer:inner pairs"}),
    ],
    "convert-idx": [
        ("--idx", "idx", str, {}),
        ("--n", "points", int, {"help": "points per cloud"}),
        ("--limit", "limit", int, {}),
    ],
}


def _shared_parser() -> ArgumentParser:
    shared = ArgumentParser(add_help=False)
    shared.add_argument("--config", type=str, default=None, help="run file path or preset name")
    shared.add_argument("--seed", type=int, default=None, help="master seed")
    shared.add_argument("--threads", type=int, default=None, help="worker threads")
    shared.add_argument("--out", type=str, default=None, help="output path")
    shared.add_argument("--home", type=str, default=None, help="wow_flow home directory (logs, runs)")
    shared.add_argument("--dump-config", action="store_true", help="print the effective run file and exit")
    return shared


def build_parser() -> ArgumentParser:
    """
    The ``wow_flow`` command line.

    Flags default to None so that only flags given on the command line override the run file.

    Returns:
        ArgumentParser: Parser with one subcommand per entry of ``COMMANDS``.
    """
    parser = ArgumentParser(
        prog="wow_flow",
        description="wow_flow - flow matching between metameasures of point clouds",
        formatter_class=ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("--version", action="store_true", help="Display version information")
    subparsers = parser.add_subparsers(dest="command")
    shared = _shared_parser()
    for command in COMMANDS:
        sub = subparsers.add_parser(command, parents=[shared], formatter_class=ArgumentDefaultsHelpFormatter)
        for flag, key, kind, extra in _COMMAND_FLAGS[command]:
            extra = dict(extra)
            extra.setdefault("help", RunConfig.help_for(key))
            sub.add_argument(flag, dest=key, type=kind, default=None, **extra)
    return parser


def parse_args(argv: Optional[Sequence[str]] = None) -> Namespace:
    return build_parser().parse_args(argv)


def run_overrides(args: Namespace) -> Dict[str, Any]:
    """RunConfig keys set on the command line."""
    keys = set(RunConfig.keys())
    return {key: value for key, value in vars(args).items() if key in keys and value is not None}


def local_config(args: Namespace = None) -> WowConfig:
    """
    Create the configuration for one invocation.

        Defaults are layered with the ``--config`` run file (or preset) and then with the
        command-line flags. The home directory comes from ``--home`` when given.

    Args:
        args (Namespace): Parsed command line; parsed from ``sys.argv`` when omitted.

    Returns:
        WowConfig: Configuration with ``run`` set and directories ensured.

    Raises:
        ConfigError: For unknown keys, invalid values or an unreadable run file.
    """
    if args is None:
        args = parse_args()

    run = RunConfig.from_mapping(read_run_config(getattr(args, "config", None)))
    run = run.merged(run_overrides(args))

    from config import config

    config_obj = config.with_base_dir(getattr(args, "home", None))
    config_obj.run = run
    return config_obj.ensure_directories()
