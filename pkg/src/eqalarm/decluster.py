"""Window declustering: punch a space-time hole after every event.

An event is deleted when any strictly larger earlier event has it inside
that larger event's magnitude-dependent window (within the window's days
after the larger event, within its distance of the epicenter). By default
deleted events still punch holes, which makes the outcome a pure pairwise
predicate independent of sweep order; a mode flag restricts hole-punching
to retained events instead. Equal magnitudes never delete each other.

No window table ships as ground truth; tables are user configuration
loaded from a 3-column CSV.
"""

from __future__ import annotations

import csv
import io
import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import IO

import numpy as np

from .catalog import Catalog, CatalogParseError, _decode
from .geo import great_circle_km_arrays

SECONDS_PER_DAY = 86400.0

WINDOW_CSV_COLUMNS = ("mag_min", "time_days", "distance_km")


@dataclass(frozen=True)
class WindowRow:
    mag_min: float
    time_days: float
    distance_km: float

    def __post_init__(self):
        if math.isnan(self.mag_min):
            raise ValueError("mag_min may not be NaN")
        if not (self.time_days > 0.0 and math.isfinite(self.time_days)):
            raise ValueError(f"time_days must be positive, got {self.time_days!r}")
        if not (self.distance_km > 0.0 and math.isfinite(self.distance_km)):
            raise ValueError(f"distance_km must be positive, got {self.distance_km!r}")


@dataclass(frozen=True)
class WindowTable:
    """Magnitude-dependent windows; lookup takes the row with the largest
    mag_min not exceeding the event magnitude. The first row must have
    mag_min = -inf so every magnitude resolves."""

    rows: tuple[WindowRow, ...]

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))
        if not self.rows:
            raise ValueError("window table needs at least one row")
        mags = [r.mag_min for r in self.rows]
        if mags[0] != -math.inf:
            raise ValueError("first window row must have mag_min = -inf (default row)")
        if any(a >= b for a, b in zip(mags, mags[1:])):
            raise ValueError("mag_min must be strictly increasing across rows")

    @classmethod
    def uniform(cls, time_days: float, distance_km: float) -> "WindowTable":
        return cls((WindowRow(-math.inf, time_days, distance_km),))

    @classmethod
    def from_csv(cls, source: bytes | str | IO) -> "WindowTable":
        """Load from CSV with header ``mag_min,time_days,distance_km``."""
        text = _decode(source)
        reader = csv.reader(io.StringIO(text))
        try:
            header = next(reader)
        except StopIteration:
            raise CatalogParseError("empty window table") from None
        if [c.strip() for c in header] != list(WINDOW_CSV_COLUMNS):
            raise CatalogParseError(
                f"line 1: bad header; expected {','.join(WINDOW_CSV_COLUMNS)!r}"
            )
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise CatalogParseError(f"line {line_no}: expected 3 fields, got {len(row)}")
            try:
                rows.append(WindowRow(*(float(c) for c in row)))
            except ValueError as exc:
                raise CatalogParseError(f"line {line_no}: {exc}") from exc
        try:
            return cls(tuple(rows))
        except ValueError as exc:
            raise CatalogParseError(str(exc)) from exc

    def lookup(self, magnitude: float) -> WindowRow:
        mags = [r.mag_min for r in self.rows]
        return self.rows[bisect_right(mags, magnitude) - 1]


@dataclass(frozen=True)
class DeclusterResult:
    catalog: Catalog
    deleted_indices: tuple[int, ...]


def decluster(
    catalog: Catalog, windows: WindowTable, retained_only: bool = False
) -> DeclusterResult:
    """Delete every event covered by a strictly larger earlier event's window.

    With ``retained_only`` set, only events that themselves survive punch
    holes (sequential sweep); by default every event punches one, deleted
    or not. Events without an authoritative magnitude neither punch holes
    nor get deleted. Retained events keep their original order.
    """
    n = len(catalog)
    if n == 0:
        return DeclusterResult(catalog, ())
    times = catalog.times_s()
    lats = catalog.latitudes()
    lons = catalog.longitudes()
    mags = catalog.magnitudes()
    time_windows_s = np.array(
        [
            windows.lookup(m).time_days * SECONDS_PER_DAY if not np.isnan(m) else 0.0
            for m in mags
        ]
    )
    dist_windows_km = np.array(
        [windows.lookup(m).distance_km if not np.isnan(m) else 0.0 for m in mags]
    )

    deleted = np.zeros(n, dtype=bool)
    for k in range(1, n):
        if np.isnan(mags[k]):
            continue
        earlier = np.arange(k)
        if retained_only:
            earlier = earlier[~deleted[:k]]
        if earlier.size == 0:
            continue
        larger = mags[earlier] > mags[k]
        if not larger.any():
            continue
        cand = earlier[larger]
        dt = times[k] - times[cand]
        in_time = (dt > 0.0) & (dt <= time_windows_s[cand])
        cand = cand[in_time]
        if cand.size == 0:
            continue
        d = great_circle_km_arrays(lats[cand], lons[cand], lats[k], lons[k])
        if np.any(d <= dist_windows_km[cand]):
            deleted[k] = True

    kept = tuple(e for i, e in enumerate(catalog.events) if not deleted[i])
    return DeclusterResult(
        catalog.with_events(kept), tuple(int(i) for i in np.flatnonzero(deleted))
    )


def decluster_stats(before: Catalog, after: Catalog) -> tuple[int, float]:
    """(n_deleted, fraction_deleted) between a catalog and its declustering."""
    from collections import Counter

    before_counts = Counter(before.events)
    after_counts = Counter(after.events)
    if any(after_counts[e] > before_counts[e] for e in after_counts):
        raise ValueError("after is not a subset of before")
    n_deleted = len(before) - len(after)
    fraction = n_deleted / len(before) if len(before) else 0.0
    return n_deleted, fraction
