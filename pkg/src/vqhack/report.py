"""Gain tables and gain-distribution summaries across videos and methods."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .pipeline import GainReport

__all__ = ["GainSummary", "GainTable", "summarize_gains", "build_gain_table"]


@dataclass(frozen=True)
class GainSummary:
    q1: float
    median: float
    q3: float
    max: float
    count: int

    def to_json(self) -> dict:
        return {"q1": self.q1, "median": self.median, "q3": self.q3, "max": self.max, "count": self.count}


def summarize_gains(values: Sequence[float]) -> GainSummary:
    """Quartiles by linear interpolation at position p*(n-1) of the sorted values."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("cannot summarize an empty list")
    q1, med, q3 = np.quantile(v, [0.25, 0.5, 0.75], method="linear")
    return GainSummary(float(q1), float(med), float(q3), float(v.max()), int(v.size))


@dataclass
class GainTable:
    rows: dict[str, dict[str, float]]
    column_means: dict[str, float]
    methods: list[str]

    def to_json(self) -> dict:
        return {"rows": self.rows, "column_means": self.column_means, "methods": self.methods}

    def to_csv(self) -> str:
        lines = [",".join(["video", *self.methods])]
        for video, row in self.rows.items():
            lines.append(",".join([video, *(f"{row[m]:.2f}" if m in row else "" for m in self.methods)]))
        lines.append(",".join(["Avg.", *(f"{self.column_means[m]:.2f}" if m in self.column_means else "" for m in self.methods)]))
        return "\n".join(lines) + "\n"


def build_gain_table(reports: Iterable[tuple[str, str, GainReport | float]]) -> GainTable:
    """Video x method table of absolute gains with per-method averages.

    Entries may be GainReports or bare gain values. Missing cells stay
    missing; a method with no entries gets no average.
    """
    rows: dict[str, dict[str, float]] = {}
    methods: list[str] = []
    for video, method, rep in reports:
        gain = rep.gain_abs if isinstance(rep, GainReport) else rep
        if gain is None or (isinstance(gain, float) and math.isnan(gain)):
            continue
        rows.setdefault(video, {})[method] = float(gain)
        if method not in methods:
            methods.append(method)
    means = {}
    for m in methods:
        col = [r[m] for r in rows.values() if m in r]
        if col:
            means[m] = math.fsum(col) / len(col)
    return GainTable(rows, means, methods)
