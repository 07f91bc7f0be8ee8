"""Alarm generation and scoring.

An alarm is a spherical cap crossed with a half-open time interval and a
magnitude floor. The automatic strategy raises one alarm after every
catalog event at or above a threshold magnitude; the floor is either the
threshold itself (``FloorRule.THRESHOLD``) or the triggering event's own
magnitude (``FloorRule.TRIGGER``). An event counts as predicted when some
alarm covers it in space and time and its magnitude reaches the largest
floor among the covering alarms; with trigger floors that max-floor rule
is exactly "no stronger trigger nearby outranks it". An alarm never covers
its own trigger: the interval excludes the trigger instant, and trigger
identity is excluded outright so the guarantee survives reassigned times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from enum import Enum

import numpy as np

from ._random import as_generator
from .catalog import Catalog, Event, StudyVolume, _as_utc
from .geo import GeoPoint, cap_area_km2, great_circle_km, great_circle_km_arrays

SECONDS_PER_DAY = 86400.0


class FloorRule(str, Enum):
    """How a generated alarm's magnitude floor is set."""

    THRESHOLD = "threshold"  # floor = the trigger threshold
    TRIGGER = "trigger"      # floor = the triggering event's magnitude

    @classmethod
    def from_cli(cls, label: str) -> "FloorRule":
        """Map the CLI's predictor labels: 'i' -> THRESHOLD, 'ii' -> TRIGGER."""
        mapping = {"i": cls.THRESHOLD, "ii": cls.TRIGGER}
        try:
            return mapping[label]
        except KeyError:
            raise ValueError(f"unknown predictor {label!r}; use 'i' or 'ii'") from None


MODE_EXTERNAL = "external"


@dataclass(frozen=True)
class Alarm:
    """One prediction: cap x half-open time interval (t_start, t_end] x floor."""

    center: GeoPoint
    radius_km: float
    t_start: datetime
    t_end: datetime
    mag_floor: float
    trigger_index: int | None = None
    trigger_id: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "t_start", _as_utc(self.t_start))
        object.__setattr__(self, "t_end", _as_utc(self.t_end))
        if not (math.isfinite(self.radius_km) and self.radius_km > 0.0):
            raise ValueError(f"alarm radius must be positive, got {self.radius_km!r}")
        if not self.t_start < self.t_end:
            raise ValueError("alarm interval is empty")

    @property
    def duration_s(self) -> float:
        return (self.t_end - self.t_start).total_seconds()

    def covers(self, time: datetime, point: GeoPoint) -> bool:
        """Space-time containment; the left time endpoint is excluded."""
        t = _as_utc(time)
        if not (self.t_start < t <= self.t_end):
            return False
        return great_circle_km(self.center, point) <= self.radius_km


@dataclass(frozen=True)
class AlarmConfig:
    """Generation parameters echoed into reports."""

    mag_threshold: float
    window_days: float
    radius_km: float


@dataclass(frozen=True)
class AlarmSet:
    """Ordered collection of alarms plus how they were made."""

    alarms: tuple[Alarm, ...]
    mode: str = MODE_EXTERNAL  # "threshold", "trigger", or "external"
    config: AlarmConfig | None = None

    def __post_init__(self):
        object.__setattr__(self, "alarms", tuple(self.alarms))

    def __len__(self) -> int:
        return len(self.alarms)

    def __iter__(self):
        return iter(self.alarms)


def generate_alarms(
    catalog: Catalog,
    mag_threshold: float,
    window_days: float = 21.0,
    radius_km: float = 50.0,
    floor_rule: FloorRule = FloorRule.THRESHOLD,
) -> AlarmSet:
    """One alarm per event at or above the threshold magnitude.

    The alarm covers a cap of ``radius_km`` around the trigger's epicenter
    for the half-open window of ``window_days`` after the trigger instant.
    Windows are not clipped at the span end: events beyond the span are
    absent from any catalog being scored, and the summed alarm volume is
    defined on full windows.
    """
    if not math.isfinite(mag_threshold):
        raise ValueError(f"mag_threshold must be finite, got {mag_threshold!r}")
    if not (math.isfinite(window_days) and window_days > 0.0):
        raise ValueError(f"window_days must be positive, got {window_days!r}")
    if not (math.isfinite(radius_km) and radius_km > 0.0):
        raise ValueError(f"radius_km must be positive, got {radius_km!r}")
    floor_rule = FloorRule(floor_rule)
    window = timedelta(seconds=window_days * SECONDS_PER_DAY)
    selector = catalog.magnitude_selector
    alarms = []
    for index, event in enumerate(catalog.events):
        magnitude = event.magnitude(selector)
        if magnitude is None or magnitude < mag_threshold:
            continue
        floor = mag_threshold if floor_rule is FloorRule.THRESHOLD else magnitude
        alarms.append(
            Alarm(
                center=event.epicenter,
                radius_km=radius_km,
                t_start=event.time,
                t_end=event.time + window,
                mag_floor=floor,
                trigger_index=index,
                trigger_id=event.source_id,
            )
        )
    return AlarmSet(
        tuple(alarms),
        mode=floor_rule.value,
        config=AlarmConfig(mag_threshold, window_days, radius_km),
    )


def is_predicted(event: Event, alarm_set: AlarmSet, selector: str = "mb") -> bool:
    """Max-floor membership: covered by some alarm and at or above every
    covering alarm's floor. Alarms triggered by this same event (matching
    trigger id) are ignored."""
    covering_floors = [
        a.mag_floor
        for a in alarm_set.alarms
        if not (a.trigger_id is not None and a.trigger_id == event.source_id)
        and a.covers(event.time, event.epicenter)
    ]
    if not covering_floors:
        return False
    magnitude = event.magnitude(selector)
    if magnitude is None:
        return False
    return magnitude >= max(covering_floors)


class AlarmTargetIndex:
    """Precomputed spatial join between a fixed alarm set and target events.

    The spatial containment, floor comparisons, and trigger-identity
    exclusions do not depend on event times, so they are resolved once into
    a pair list; evaluating a new assignment of times is then a few
    vectorised comparisons. This is what makes time-permutation replicates
    cheap.
    """

    def __init__(self, targets: Catalog, alarm_set: AlarmSet, block: int = 512):
        self.n_targets = len(targets)
        self.n_alarms = len(alarm_set)
        t_lat = targets.latitudes()
        t_lon = targets.longitudes()
        t_mag = targets.magnitudes()
        t_ids = targets.source_ids()
        id_of = {s: i for i, s in enumerate(t_ids)}

        a_lat = np.array([a.center.lat for a in alarm_set], dtype=float)
        a_lon = np.array([a.center.lon for a in alarm_set], dtype=float)
        a_radius = np.array([a.radius_km for a in alarm_set], dtype=float)
        self._alarm_start = np.array(
            [a.t_start.timestamp() for a in alarm_set], dtype=float
        )
        self._alarm_end = np.array([a.t_end.timestamp() for a in alarm_set], dtype=float)
        a_floor = np.array([a.mag_floor for a in alarm_set], dtype=float)
        # trigger id resolved to a target position, or -1 when not a target
        a_trig = np.array(
            [
                id_of.get(a.trigger_id, -1) if a.trigger_id is not None else -1
                for a in alarm_set
            ],
            dtype=np.int64,
        )

        pk_parts: list[np.ndarray] = []
        pj_parts: list[np.ndarray] = []
        for lo in range(0, self.n_targets, block):
            hi = min(lo + block, self.n_targets)
            d = great_circle_km_arrays(
                t_lat[lo:hi, None], t_lon[lo:hi, None], a_lat[None, :], a_lon[None, :]
            )
            within = d <= a_radius[None, :]
            if within.any():
                rows, cols = np.nonzero(within)
                keep = a_trig[cols] != rows + lo
                pk_parts.append((rows + lo)[keep].astype(np.int64))
                pj_parts.append(cols[keep].astype(np.int64))
        if pk_parts:
            self._pk = np.concatenate(pk_parts)
            self._pj = np.concatenate(pj_parts)
        else:
            self._pk = np.empty(0, dtype=np.int64)
            self._pj = np.empty(0, dtype=np.int64)
        self._pair_start = self._alarm_start[self._pj]
        self._pair_end = self._alarm_end[self._pj]
        with np.errstate(invalid="ignore"):
            self._pair_floor_ok = t_mag[self._pk] >= a_floor[self._pj]
        # pairs are built in ascending target order; segment boundaries for reduceat
        self._uniq_k, self._seg_idx = np.unique(self._pk, return_index=True)

    @property
    def n_pairs(self) -> int:
        return int(self._pk.size)

    def predicted_mask(self, times_s: np.ndarray) -> np.ndarray:
        """Per-target prediction flags for one assignment of event times."""
        mask = np.zeros(self.n_targets, dtype=bool)
        if self.n_pairs == 0:
            return mask
        t_pair = np.asarray(times_s, dtype=float)[self._pk]
        covered = (t_pair > self._pair_start) & (t_pair <= self._pair_end)
        good = covered & self._pair_floor_ok
        bad = covered & ~self._pair_floor_ok
        good_any = np.logical_or.reduceat(good, self._seg_idx)
        bad_any = np.logical_or.reduceat(bad, self._seg_idx)
        mask[self._uniq_k] = good_any & ~bad_any
        return mask

    def count_predicted(self, times_s: np.ndarray) -> int:
        return int(self.predicted_mask(times_s).sum())

    def counts_for_time_matrix(self, times_matrix: np.ndarray) -> np.ndarray:
        """Predicted-event counts for a batch of time assignments (rows)."""
        times_matrix = np.asarray(times_matrix, dtype=float)
        n_rows = times_matrix.shape[0]
        if self.n_pairs == 0 or n_rows == 0:
            return np.zeros(n_rows, dtype=np.int64)
        counts = np.empty(n_rows, dtype=np.int64)
        chunk = max(1, 32_000_000 // max(self.n_pairs, 1))
        for lo in range(0, n_rows, chunk):
            hi = min(lo + chunk, n_rows)
            t_pair = times_matrix[lo:hi][:, self._pk]
            covered = (t_pair > self._pair_start) & (t_pair <= self._pair_end)
            good = covered & self._pair_floor_ok
            bad = covered & ~self._pair_floor_ok
            good_any = np.logical_or.reduceat(good, self._seg_idx, axis=1)
            bad_any = np.logical_or.reduceat(bad, self._seg_idx, axis=1)
            counts[lo:hi] = (good_any & ~bad_any).sum(axis=1)
        return counts

    def successful_alarms(self, times_s: np.ndarray) -> int:
        """Alarms containing at least one target above their floor."""
        if self.n_pairs == 0:
            return 0
        t_pair = np.asarray(times_s, dtype=float)[self._pk]
        hit = (t_pair > self._pair_start) & (t_pair <= self._pair_end) & self._pair_floor_ok
        return int(np.unique(self._pj[hit]).size)


def count_predicted(targets: Catalog, alarm_set: AlarmSet) -> int:
    """Number of target events predicted by the alarm set.

    Targets are expected to be pre-filtered to the study threshold and
    window; prediction uses the same max-floor rule as :func:`is_predicted`.
    """
    index = AlarmTargetIndex(targets, alarm_set)
    return index.count_predicted(targets.times_s())


def count_successful_alarms(alarm_set: AlarmSet, targets: Catalog) -> int:
    """Number of alarms containing at least one target event.

    Containment is spatial, temporal, and above the alarm's own floor;
    success is binary per alarm, and an alarm's own trigger never counts.
    """
    index = AlarmTargetIndex(targets, alarm_set)
    return index.successful_alarms(targets.times_s())


@dataclass(frozen=True)
class ScoreSummary:
    """Counts and rates of alarm performance against a target catalog.

    F = A - S and M = Q - P by construction; rates with zero denominators
    are reported as 0.
    """

    Q: int
    A: int
    S: int
    P: int
    F: int = field(default=-1)
    M: int = field(default=-1)
    s: float = field(default=-1.0)
    p: float = field(default=-1.0)
    f: float = field(default=-1.0)
    m: float = field(default=-1.0)
    v_upper: float = field(default=0.0)

    def __post_init__(self):
        if min(self.Q, self.A, self.S, self.P) < 0:
            raise ValueError("counts must be nonnegative")
        if self.S > self.A or self.P > self.Q:
            raise ValueError("successes cannot exceed their totals")
        object.__setattr__(self, "F", self.A - self.S)
        object.__setattr__(self, "M", self.Q - self.P)
        object.__setattr__(self, "s", self.S / self.A if self.A else 0.0)
        object.__setattr__(self, "p", self.P / self.Q if self.Q else 0.0)
        object.__setattr__(self, "f", self.F / self.A if self.A else 0.0)
        object.__setattr__(self, "m", self.M / self.Q if self.Q else 0.0)
        if not 0.0 <= self.v_upper <= 1.0:
            raise ValueError(f"v_upper {self.v_upper!r} outside [0, 1]")

    def to_dict(self) -> dict:
        return {
            "Q": self.Q, "A": self.A, "S": self.S, "P": self.P,
            "F": self.F, "M": self.M,
            "s": self.s, "p": self.p, "f": self.f, "m": self.m,
            "v_upper": self.v_upper,
        }


def alarm_volume_fraction(alarm_set: AlarmSet, sv: StudyVolume) -> float:
    """Summed alarm space-time volume over the study volume.

    Overlap between alarms is not subtracted, so this upper-bounds the true
    union fraction (and can exceed 1 for heavily overlapping sets). Each
    alarm contributes its full cap area times its full window duration.
    """
    total = sv.area_km2 * sv.duration_s
    covered = sum(cap_area_km2(a.radius_km) * a.duration_s for a in alarm_set.alarms)
    return covered / total


def score(targets: Catalog, alarm_set: AlarmSet, sv: StudyVolume) -> ScoreSummary:
    """All count and rate statistics for an alarm set against a catalog."""
    index = AlarmTargetIndex(targets, alarm_set)
    times = targets.times_s()
    return ScoreSummary(
        Q=len(targets),
        A=len(alarm_set),
        S=index.successful_alarms(times),
        P=index.count_predicted(times),
        v_upper=min(1.0, alarm_volume_fraction(alarm_set, sv)),
    )


@dataclass(frozen=True)
class VolumeEstimate:
    """Monte-Carlo union-volume estimate with its binomial standard error."""

    estimate: float
    stderr: float
    n_samples: int


def union_volume_fraction_mc(
    alarm_set: AlarmSet, sv: StudyVolume, n_samples: int, rng
) -> VolumeEstimate:
    """Estimate the union alarm fraction of the study volume by sampling.

    Points are drawn area-uniform over the study region and uniform in
    time; the estimate is the hit fraction of "inside at least one alarm".
    Sampling never leaves the study volume, so alarm extent beyond it does
    not contribute.
    """
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    g = as_generator(rng)
    lat, lon = sv.region.sample(n_samples, g)
    t0 = sv.t_start.timestamp()
    times = t0 + g.uniform(0.0, sv.duration_s, size=n_samples)
    hit = np.zeros(n_samples, dtype=bool)
    for a in alarm_set.alarms:
        in_time = (times > a.t_start.timestamp()) & (times <= a.t_end.timestamp())
        if not in_time.any():
            continue
        idx = np.nonzero(in_time & ~hit)[0]
        if idx.size == 0:
            continue
        d = great_circle_km_arrays(lat[idx], lon[idx], a.center.lat, a.center.lon)
        hit[idx[d <= a.radius_km]] = True
    p_hat = float(hit.mean())
    stderr = math.sqrt(p_hat * (1.0 - p_hat) / n_samples)
    return VolumeEstimate(p_hat, stderr, n_samples)


def dumps_alarms_csv(alarm_set: AlarmSet) -> str:
    """Serialize alarms to CSV: trigger_time,lat,lon,radius_km,t_start,t_end,mag_floor."""
    from .catalog import format_instant

    lines = ["trigger_time,lat,lon,radius_km,t_start,t_end,mag_floor"]
    for a in alarm_set.alarms:
        lines.append(
            ",".join(
                (
                    format_instant(a.t_start),
                    repr(a.center.lat),
                    repr(a.center.lon),
                    repr(a.radius_km),
                    format_instant(a.t_start),
                    format_instant(a.t_end),
                    repr(a.mag_floor),
                )
            )
        )
    return "\n".join(lines) + "\n"
