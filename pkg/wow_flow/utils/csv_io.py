"""Small CSV writers for training logs, trajectories, NNA reports and benchmarks."""

import csv
from pathlib import Path
from typing import Iterable, Sequence, Union

__all__ = ["write_csv"]


def write_csv(path: Union[str, Path], header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """Write ``header`` then ``rows`` to ``path`` (parent directories are created)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)
    return path
