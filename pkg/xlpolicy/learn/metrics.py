"""
Per-batch metric stream and its CSV form

Header: phase,batch,actor_loss,critic_loss,return,mse
Floats use 17 significant digits so reruns compare byte-for-byte.
"""
import csv
import io
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np

from xlpolicy.errors import ContractError
from xlpolicy.files import atomic_write_text
from xlpolicy.models import MetricRow

logger = logging.getLogger(__name__)

CSV_HEADER = ("phase", "batch", "actor_loss", "critic_loss", "return", "mse")


def _fmt(value: Optional[float]) -> str:
    return "" if value is None else format(float(value), ".17g")


def _csv_fields(row: MetricRow) -> List[object]:
    return [
        row.phase,
        row.batch,
        _fmt(row.actor_loss),
        _fmt(row.critic_loss),
        _fmt(row.episode_return),
        _fmt(row.mse),
    ]


class MetricsWriter:
    """
    Append-only collector that enforces strictly increasing batch indices
    per phase.

    With ``stream_path`` each accepted row is also appended to that CSV as it
    arrives (header first).
    ``write`` produces the full file atomically.
    """

    def __init__(self, rows: Optional[Iterable[MetricRow]] = None,
                 stream_path: Optional[Union[str, Path]] = None):
        self.rows: List[MetricRow] = []
        self._last_batch: Dict[str, int] = {}
        self.stream_path = Path(stream_path) if stream_path is not None else None
        if self.stream_path is not None:
            self.stream_path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.stream_path, "w", encoding="utf-8", newline="") as f:
                csv.writer(f, lineterminator="\n").writerow(CSV_HEADER)
        for row in rows or ():
            self.append(row)

    def append(self, row: MetricRow) -> None:
        previous = self._last_batch.get(row.phase)
        if previous is not None and row.batch <= previous:
            raise ContractError(f"{row.phase} batch index {row.batch} does not follow {previous}")
        self._last_batch[row.phase] = row.batch
        self.rows.append(row)
        if self.stream_path is not None:
            with open(self.stream_path, "a", encoding="utf-8", newline="") as f:
                csv.writer(f, lineterminator="\n").writerow(_csv_fields(row))

    def extend(self, rows: Iterable[MetricRow]) -> None:
        for row in rows:
            self.append(row)

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        writer.writerows(_csv_fields(row) for row in self.rows)
        return buffer.getvalue()

    def write(self, path: Union[str, Path]) -> Path:
        return atomic_write_text(path, self.to_csv())


def write_metrics_csv(path: Union[str, Path], rows: Sequence[MetricRow]) -> Path:
    return MetricsWriter(rows).write(path)


def read_metrics_csv(path: Union[str, Path]) -> List[MetricRow]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ContractError(f"{path}: unexpected metrics header {reader.fieldnames}")
        return [
            MetricRow(
                phase=record["phase"],
                batch=int(record["batch"]),
                actor_loss=float(record["actor_loss"]),
                critic_loss=float(record["critic_loss"]),
                episode_return=float(record["return"]) if record["return"] else None,
                mse=float(record["mse"]) if record["mse"] else None,
            )
            for record in reader
        ]


def windowed_mean(values: Sequence[float], width: int = 20) -> np.ndarray:
    """Means of consecutive non-overlapping windows (a shorter tail window is kept)"""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return values
    return np.array([values[i:i + width].mean() for i in range(0, values.size, width)])
