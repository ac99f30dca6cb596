#!/usr/bin/env python
"""
Configuration module for the wow_flow project.
Centralizes all default configuration values.
"""
import re
from datetime import datetime, timezone
from logging import DEBUG, basicConfig, getLogger
from os import environ as osenv
from pathlib import PosixPath as Path
from typing import TYPE_CHECKING, Final, Optional

UTC = timezone.utc

if TYPE_CHECKING:
    from config.run_config import RunConfig

# Try to get the version from package metadata first
# noinspection PyBroadException
try:
    from importlib.metadata import version

    __version__ = version("wow_flow")
except Exception:
    __version__ = None

# If package metadata fails, use pyproject.toml fallback
if __version__ is None:
    # noinspection PyBroadException
    try:
        from config.get_version import get_version

        __version__ = get_version()
    except Exception:
        __version__ = "0.0.0-dev"

version = __version__

__all__ = [
    "WowConfig",
    "default_config",
    "iso_utc_timestamp",
    "iso_utc_time_notzinfo",
    "DEFAULT_BATCH_SIZE",
    "DEFAULT_LEARNING_RATE",
    "DEFAULT_EULER_STEPS",
    "__version__",
]
CONST_PROJECT_NAME: Final[str] = "wow_flow"
CONST_HOME_ENV: Final[str] = "WOW_FLOW_HOME"

# wow_flow's directory structure
DEFAULT_WOW_FLOW_HOME: Final[Path] = Path.home() / ".wow_flow"

# Training
DEFAULT_BATCH_SIZE: Final[int] = 8
DEFAULT_LEARNING_RATE: Final[float] = 5e-4
DEFAULT_STEPS: Final[int] = 7500
DEFAULT_N_RANGE: Final[tuple[int, int]] = (30, 30)
DEFAULT_LOG_EVERY: Final[int] = 100
DEFAULT_CHECKPOINT_EVERY: Final[int] = 0

# Couplings
DEFAULT_SLICES: Final[int] = 8
DEFAULT_SINKHORN_MAX_ITER: Final[int] = 10_000
DEFAULT_SINKHORN_TOL: Final[float] = 1e-9

# Source metameasures
DEFAULT_SIGMA_RANGE: Final[tuple[float, float]] = (0.05, 0.15)
DEFAULT_CENTER_RANGE: Final[tuple[float, float]] = (-20.0, 20.0)
DEFAULT_CIRCLE_RADIUS: Final[float] = 0.5

# Network
DEFAULT_K_LOCAL: Final[int] = 8

# Sampling and evaluation
DEFAULT_EULER_STEPS: Final[tuple[int, ...]] = (5, 25, 125)
DEFAULT_GENERATE_COUNT: Final[int] = 512
DEFAULT_NNA_SAMPLES: Final[int] = 512
DEFAULT_NNA_REPETITIONS: Final[int] = 5
DEFAULT_NNA_METRICS: Final[tuple[str, ...]] = ("chamfer", "ot")
DEFAULT_KDE_RESOLUTION: Final[int] = 64
DEFAULT_KDE_PADDING: Final[float] = 0.15
DEFAULT_KDE_LIMIT: Final[int] = 16

# Barycenter and benchmarks
DEFAULT_BARYCENTER_BATCH: Final[int] = 8
DEFAULT_BARYCENTER_MAX_ITER: Final[int] = 100
DEFAULT_BENCH_BATCHES: Final[tuple[int, ...]] = (8, 16, 32)
DEFAULT_BENCH_POINTS: Final[tuple[int, ...]] = (64, 256, 1024)
DEFAULT_BENCH_RUNS: Final[int] = 5
DEFAULT_BENCH_COUPLINGS: Final[tuple[str, ...]] = ("ind:ind", "ind:w", "w:w", "sw:sw", "llw:llw")

####### The Following are Program Constants
CONST_RUNS_DIR: Final[str] = ".runs"
CONST_LOG_DIR: Final[str] = ".logs"
# The only log file this module recognizes
CONST_LOG_FILE_NAME: Final[str] = "wow_flow.log"
CONST_CHECKPOINT_NAME: Final[str] = "model.wownn"
CONST_TRAIN_LOG_NAME: Final[str] = "train_log.csv"


def iso_utc_timestamp(compress: bool = False) -> str:
    """
    Generates a UTC timestamp in ISO 8601 format. Optionally, the output can be compressed
        to remove non-numeric characters.

    Args:
        compress (bool): Specifies whether the timestamp should be compressed by removing
                 non-numeric characters.

    Returns:
        str: The generated UTC timestamp as a string.
    """
    timestamp = iso_utc_time_notzinfo().isoformat()
    if compress:
        return re.sub(r"[^0-9]", "", timestamp)
    return timestamp


def iso_utc_time_notzinfo() -> datetime:
    """The current UTC time as a timezone-naive datetime."""
    return datetime.now(UTC).replace(tzinfo=None)


class WowConfig:
    """Home directory, logging and run settings for wow_flow.

    Attributes:
        wow_home (Path): Base directory, from the constructor, ``WOW_FLOW_HOME`` or ``~/.wow_flow``.
        runs_dir (Path): Default location of run outputs (checkpoints, logs, generated data).
        log_dir (Path): Directory for log files.
        log_file (Path): Full path to the log file.
        run (RunConfig | None): Parsed experiment settings, attached by the CLI.
        version (str): The version of the wow_flow project.
    """

    def __init__(self, base_dir: str | None = None, run: Optional["RunConfig"] = None) -> None:
        # Use user-provided base dir, or env var, or default to ~/.wow_flow
        self.wow_home = Path(base_dir or osenv.get(CONST_HOME_ENV, DEFAULT_WOW_FLOW_HOME))
        self.project_name = CONST_PROJECT_NAME

        self.runs_dir = self.wow_home / CONST_RUNS_DIR
        self.log_dir = self.wow_home / CONST_LOG_DIR
        self.log_file = self.log_dir / CONST_LOG_FILE_NAME

        self.run = run
        self.version = version

    def __repr__(self) -> str:
        return f"WowConfig(wow_home={self.wow_home}, version={self.version})"

    def ensure_directories(self) -> "WowConfig":
        """
        Creates the home, runs and log directories when missing.

        Returns:
            Self: The current instance after ensuring directories exist.
        """
        for dir_path in [self.wow_home, self.runs_dir, self.log_dir]:
            dir_path.mkdir(parents=True, exist_ok=True)
        return self

    def get_logger(self) -> "logging.Logger":
        """
        Initializes and returns a logger configured for file-based logging.

                The log directory is created if missing. Records go to ``log_file`` at DEBUG
                level with UTC timestamps.

        Returns:
            logging.Logger: Configured logger instance.

        Raises:
            OSError: If the log directory cannot be created.
        """
        if not self.log_dir.exists():
            Path(self.log_dir).mkdir(parents=True, exist_ok=True)

        # Set logging to use UTC time globally
        import logging

        logging.Formatter.converter = lambda *args: datetime.now(UTC).timetuple()

        basicConfig(
            level=DEBUG,
            format="%(asctime)s - %(levelname)s: %(message)s",
            filename=Path(self.log_file),
            filemode="a",
        )
        return getLogger()

    def get_log_file(self, name: str | None = None) -> Path:
        if name:
            return self.log_dir / name
        return self.log_file

    def run_dir(self, label: str) -> Path:
        """Timestamped output directory for one command invocation, under ``runs_dir``."""
        return self.runs_dir / f"{label}_{iso_utc_timestamp(compress=True)}"

    @staticmethod
    def with_base_dir(base_dir) -> "WowConfig":
        """
        Creates a new WowConfig rooted at ``base_dir``.

        Args:
            base_dir (str): The base directory to be used for initialization.

        Returns:
            WowConfig: A new instance initialized with the given base directory.
        """
        return WowConfig(base_dir)

    @property
    def __version__(self) -> str:
        return self.version


# Enable FRESH config creation each invocation of default_config()
def default_config() -> "WowConfig":
    """
    Generates and ensures the default configuration directories.

    Returns:
        WowConfig: An instance of WowConfig with directories ensured.
    """
    return WowConfig().ensure_directories()


# Alias for WowConfig that tests can patch via config.config
config = WowConfig
