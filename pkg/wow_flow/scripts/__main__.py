#!/usr/bin/env python
import sys
from sys import exit
from typing import Callable, Dict, Optional, Sequence

from config import WowConfig, __version__, argparser_wow_flow, iso_utc_time_notzinfo
from wow_flow.errors import (
    ConfigError,
    ConvergenceError,
    DataFormatError,
    IntegrationError,
    NumericError,
    WowFlowError,
)
from wow_flow.pipeline import WowFlow

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _train(flow: WowFlow) -> None:
    result = flow.train()
    print(f"final mean loss (last {min(100, len(result.log))} steps): {result.window_mean():.6g}")


def _generate(flow: WowFlow) -> None:
    for steps, path in flow.generate().items():
        print(f"euler {steps}: {path}")


def _evaluate(flow: WowFlow) -> None:
    for summary in flow.evaluate():
        print(f"{summary.metric.value}: {summary.accuracy_mean:.4f} +- {summary.accuracy_std:.4f}")


def _barycenter(flow: WowFlow) -> None:
    ref = flow.barycenter()
    print(f"barycenter with {ref.count} points, objective {ref.history[-1]:.6g}")


def _bench(flow: WowFlow) -> None:
    for record in flow.bench():
        print(f"({record.outer.value},{record.inner.value}) B={record.batch} N={record.points}: "
              f"{record.mean_ms:.3f} +- {record.std_ms:.3f} ms")


def _convert_idx(flow: WowFlow) -> None:
    print(flow.convert_idx())


HANDLERS: Dict[str, Callable[[WowFlow], None]] = {
    "train": _train,
    "generate": _generate,
    "eval": _evaluate,
    "barycenter": _barycenter,
    "bench": _bench,
    "convert-idx": _convert_idx,
}


def _fail(logger, command: str, err: Exception, code: int) -> int:
    logger.error(f"{command} failed: {err}")
    print(f"wow_flow {command}: error: {err}", file=sys.stderr)
    return code


def main(argv: Optional[Sequence[str]] = None, config: WowConfig = None) -> int:
    """
    Entry point of the ``wow_flow`` console script.

    Args:
        argv: Command line without the program name; ``sys.argv`` when omitted.
        config: Ready configuration; built from ``argv`` when omitted.

    Returns:
        int: ``0`` on success, ``2`` for usage or configuration errors, ``3`` for unreadable or
        malformed data, ``4`` for numeric failures (non-finite loss or state, solver divergence)
        and ``1`` for anything unexpected.
    """
    args = argparser_wow_flow.parse_args(argv)
    if args.version:
        print(f"wow_flow v{__version__}")
        return EXIT_OK
    if args.command is None:
        argparser_wow_flow.build_parser().print_usage(sys.stderr)
        return EXIT_CONFIG

    if config is None:
        try:
            config = argparser_wow_flow.local_config(args)
        except ConfigError as err:
            print(f"wow_flow {args.command}: error: {err}", file=sys.stderr)
            return EXIT_CONFIG
    if args.dump_config:
        print(config.run.dump(), end="")
        return EXIT_OK

    logger = config.get_logger()
    logger.name = __name__
    logger.debug(f"Using config: {config}")

    start_time = iso_utc_time_notzinfo()
    logger.info(f'Starting {args.command} at {start_time.strftime("%Y-%m-%d %H:%M:%S")}, seed {config.run.seed}')
    try:
        HANDLERS[args.command](WowFlow(config))
    except ConfigError as err:
        return _fail(logger, args.command, err, EXIT_CONFIG)
    except (DataFormatError, OSError) as err:
        return _fail(logger, args.command, err, EXIT_DATA)
    except (NumericError, IntegrationError, ConvergenceError) as err:
        return _fail(logger, args.command, err, EXIT_NUMERIC)
    except WowFlowError as err:
        return _fail(logger, args.command, err, EXIT_CONFIG)
    except Exception as err:
        return _fail(logger, args.command, err, EXIT_FAILURE)
    else:
        duration = (iso_utc_time_notzinfo() - start_time).total_seconds()
        logger.info(f"{args.command} complete. Time taken: {duration:.1f} seconds")
        return EXIT_OK


if __name__ == "__main__":
    exit(main())
