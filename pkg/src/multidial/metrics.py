"""Training metrics: the checkpoint row schema, CSV round-trips and the
Mann-Kendall trend statistic used to judge whether a learning curve rises."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

CSV_COLUMNS = ("step", "episodes", "avg_reward", "avg_success", "avg_length", "elapsed_seconds")


@dataclass
class MetricsRow:
    step: int
    episodes: int
    avg_reward: float
    avg_success: float
    avg_length: float
    elapsed_seconds: float

    def as_csv(self) -> list[str]:
        return [
            str(self.step),
            str(self.episodes),
            "%.6f" % self.avg_reward,
            "%.6f" % self.avg_success,
            "%.6f" % self.avg_length,
            "%.6f" % self.elapsed_seconds,
        ]


@dataclass
class TrainingLog:
    rows: list[MetricsRow] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for row in self.rows:
                writer.writerow(row.as_csv())

    @classmethod
    def read_csv(cls, path: str) -> "TrainingLog":
        log = cls()
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != CSV_COLUMNS:
                raise ValueError(f"{path}: unexpected CSV header {header}")
            for rec in reader:
                log.rows.append(
                    MetricsRow(
                        int(rec[0]), int(rec[1]), float(rec[2]),
                        float(rec[3]), float(rec[4]), float(rec[5]),
                    )
                )
        return log

    def column(self, name: str) -> list[float]:
        return [getattr(r, name) for r in self.rows]

    def final(self) -> MetricsRow:
        if not self.rows:
            raise ValueError("empty training log")
        return self.rows[-1]


@dataclass
class MannKendallResult:
    s: int
    var_s: float
    z: float
    p_increasing: float  # one-sided p for an upward trend


def mann_kendall(values: list[float]) -> MannKendallResult:
    """Nonparametric trend test with the normal approximation and tie
    correction. Small p_increasing means the series rises."""
    n = len(values)
    if n < 3:
        raise ValueError("need at least 3 points for a trend test")
    s = 0
    for i in range(n - 1):
        for j in range(i + 1, n):
            d = values[j] - values[i]
            s += (d > 0) - (d < 0)
    counts: dict[float, int] = {}
    for v in values:
        counts[v] = counts.get(v, 0) + 1
    tie_term = sum(t * (t - 1) * (2 * t + 5) for t in counts.values() if t > 1)
    var_s = (n * (n - 1) * (2 * n + 5) - tie_term) / 18.0
    if var_s == 0:
        return MannKendallResult(s, 0.0, 0.0, 0.5)
    if s > 0:
        z = (s - 1) / math.sqrt(var_s)
    elif s < 0:
        z = (s + 1) / math.sqrt(var_s)
    else:
        z = 0.0
    p_increasing = 0.5 * math.erfc(z / math.sqrt(2.0))
    return MannKendallResult(s, var_s, z, p_increasing)
