"""
Trajectory logs: downsampled time series of the learning dynamics.

A log is a pandas DataFrame with one row per logged stage plus a metadata
dict. On disk it is CSV preceded by a block of `# key: json` lines.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import pandas as pd

from .errors import UsageError

logger = logging.getLogger(__name__)

METADATA_PREFIX = "# "
FLOAT_FORMAT = "%.17g"  # round-trips doubles, keeps replays bitwise identical


def state_columns(prefix: str, num_states: int) -> List[str]:
    return [f"{prefix}_s{s}" for s in range(num_states)]


class TrajectoryLog:
    """Rows strictly increasing in stage, plus header metadata."""

    def __init__(self, metadata: Optional[Dict[str, Any]] = None, rows: Optional[List[Dict[str, float]]] = None):
        self.metadata: Dict[str, Any] = dict(metadata or {})
        self.rows: List[Dict[str, float]] = []
        for row in rows or []:
            self.add_row(row)

    def add_row(self, row: Dict[str, float]) -> None:
        if self.rows and not row["stage"] > self.rows[-1]["stage"]:
            raise UsageError(
                f"stage {row['stage']} does not follow logged stage {self.rows[-1]['stage']}"
            )
        self.rows.append(row)

    @property
    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows)

    @property
    def last(self) -> Dict[str, float]:
        if not self.rows:
            raise UsageError("trajectory log is empty")
        return self.rows[-1]

    def __len__(self) -> int:
        return len(self.rows)

    def to_csv(self, path: Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        header = "".join(
            f"{METADATA_PREFIX}{key}: {json.dumps(value, sort_keys=True)}\n"
            for key, value in self.metadata.items()
        )
        body = self.frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        path.write_text(header + body, encoding="utf-8")
        logger.info(f"Wrote {len(self.rows)} rows to {path}")

    @classmethod
    def read_csv(cls, path: Path) -> "TrajectoryLog":
        path = Path(path)
        metadata: Dict[str, Any] = {}
        header_lines = 0
        with path.open(encoding="utf-8") as handle:
            for line in handle:
                if not line.startswith(METADATA_PREFIX):
                    break
                key, _, value = line[len(METADATA_PREFIX):].rstrip("\n").partition(": ")
                metadata[key] = json.loads(value)
                header_lines += 1
        frame = pd.read_csv(path, skiprows=header_lines, float_precision="round_trip")
        return cls(metadata=metadata, rows=frame.to_dict(orient="records"))


def aggregate(logs: Iterable[TrajectoryLog], columns: Optional[Sequence[str]] = None) -> pd.DataFrame:
    """Per-stage mean and population standard deviation across runs."""
    frames = [log.frame for log in logs]
    if not frames:
        raise UsageError("nothing to aggregate")
    combined = pd.concat(frames, ignore_index=True)
    if columns is None:
        columns = [c for c in combined.columns if c not in ("stage", "state")]
    grouped = combined.groupby("stage")[list(columns)]
    summary = grouped.mean().add_suffix("_mean").join(grouped.std(ddof=0).add_suffix("_std"))
    return summary.reset_index()


def export_columns(log: TrajectoryLog, path: Path, columns: Optional[Sequence[str]] = None) -> None:
    """Whitespace-separated columns with a commented header, ready for gnuplot."""
    frame = log.frame
    if columns:
        missing = [c for c in columns if c not in frame.columns]
        if missing:
            raise UsageError(f"unknown columns: {', '.join(missing)}")
        frame = frame[["stage", *[c for c in columns if c != "stage"]]]
    Path(path).write_text(
        "# " + " ".join(frame.columns) + "\n"
        + frame.to_csv(sep=" ", index=False, header=False, float_format=FLOAT_FORMAT, lineterminator="\n"),
        encoding="utf-8",
    )
