"""Weekly sales ingestion for the semi-synthetic bootstrap experiment.

Weekly unit sales are scaled to per-day samples in millions of units
(units / 7 / 1e6, rounded half-up to the nearest integer) and pooled by
calendar month; a simulation day drawn in month m bootstraps uniformly from
that month's pool.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from datetime import date

log = logging.getLogger(__name__)

__all__ = ["DatasetError", "WeeklySalesDataset", "ingest_weekly_sales",
           "daily_sample_from_weekly"]


class DatasetError(ValueError):
    pass


def daily_sample_from_weekly(units: int) -> int:
    """units / 7 / 1e6, rounded to the nearest integer, half away from zero."""
    x = units / 7.0 / 1e6
    return int(x + 0.5)


@dataclass(frozen=True)
class WeeklySalesDataset:
    """Per-month pools of integer daily-demand samples (millions of units)."""
    pools: tuple[tuple[int, ...], ...]  # index 0 = January
    rows_used: int
    rows_skipped: int

    def max_demand(self) -> int:
        return max(max(p) for p in self.pools)


def ingest_weekly_sales(path) -> WeeklySalesDataset:
    """Parse a (date, units) CSV with ISO dates and non-negative integer unit
    counts.  Malformed rows are skipped with a logged count; a calendar month
    with no samples at all is an error."""
    pools: list[list[int]] = [[] for _ in range(12)]
    used = skipped = 0
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DatasetError(f"{path}: empty file")
        for row in reader:
            try:
                if len(row) < 2:
                    raise ValueError("short row")
                day = date.fromisoformat(row[0].strip())
                units = int(row[1].strip())
                if units < 0:
                    raise ValueError("negative units")
            except (ValueError, TypeError):
                skipped += 1
                continue
            pools[day.month - 1].append(daily_sample_from_weekly(units))
            used += 1
    if skipped:
        log.warning("%s: skipped %d malformed rows", path, skipped)
    empty = [m + 1 for m in range(12) if not pools[m]]
    if empty:
        raise DatasetError(f"{path}: months with no samples: {empty}")
    return WeeklySalesDataset(tuple(tuple(p) for p in pools), used, skipped)
