"""Hypothesis-test engines for alarm-based predictions.

The headline engine scores a fixed alarm set against random reassignments
of the catalog's event times (times exchangeable given locations,
magnitudes, and the predictions). The observed statistic is the number of
predicted events; the p-estimate is the plain fraction of replicates whose
simulated count reaches the observed one, with zero exceedances flagged as
"< 1/N". Also here: exact enumeration over all Q! time assignments (the
oracle for the Monte-Carlo engine), the binomial tail used with a
normalized alarm measure, Poisson-binomial tails for sums of independent
alarm successes, and the grid R-score with its three randomized baselines.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from datetime import datetime
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy import stats

from ._random import Rng, as_generator, substream
from .alarm import AlarmSet, AlarmTargetIndex, FloorRule, generate_alarms
from .catalog import Catalog, _as_utc, filter_catalog
from .geo import GeoPoint, great_circle_km

MAX_EXACT_EVENTS = 8


@dataclass(frozen=True)
class TestReport:
    """Outcome of a simulation test, with enough context to rerun it.

    p_estimate is sims_geq / sim_count; when no replicate reaches the
    observed statistic it is 0.0 and p_is_upper_bound marks that the true
    p-value is below 1 / sim_count.
    """

    observed: float
    sim_count: int
    sims_geq: int
    p_estimate: float
    p_is_upper_bound: bool
    max_sim: float
    seed: int
    config: dict

    def p_display(self) -> str:
        if self.p_is_upper_bound:
            return f"<{1.0 / self.sim_count:.3g}"
        return f"{self.p_estimate:.6g}"

    def to_json_dict(self) -> dict:
        return {
            "observed": self.observed,
            "n_reps": self.sim_count,
            "sims_geq": self.sims_geq,
            "p_estimate": self.p_estimate,
            "p_is_upper_bound": self.p_is_upper_bound,
            "max_sim": self.max_sim,
            "seed": self.seed,
            "config": self.config,
        }


def _resolve_key(rng) -> Rng:
    if isinstance(rng, Rng):
        return rng
    if isinstance(rng, (int, np.integer)):
        return Rng(int(rng))
    raise TypeError("permutation engines need an Rng key or an integer seed")


def _simulated_counts(
    index: AlarmTargetIndex, times_s: np.ndarray, n_reps: int, key: Rng
) -> np.ndarray:
    """Predicted-event counts under n_reps random time permutations.

    Replicate r draws its permutation from the stream keyed by
    (seed, stream_id, r), so results are independent of evaluation order
    and safe to split across workers.
    """
    n = times_s.size
    counts = np.empty(n_reps, dtype=np.int64)
    chunk = max(1, 32_000_000 // max(index.n_pairs, 1))
    for lo in range(0, n_reps, chunk):
        hi = min(lo + chunk, n_reps)
        block = np.empty((hi - lo, n), dtype=float)
        for r in range(lo, hi):
            g = substream(key.seed, key.stream_id, r)
            block[r - lo] = times_s[g.permutation(n)]
        counts[lo:hi] = index.counts_for_time_matrix(block)
    return counts


def permutation_test_fixed_alarms(
    targets: Catalog,
    alarm_set: AlarmSet,
    n_reps: int,
    rng,
    config: dict | None = None,
    return_sims: bool = False,
):
    """Permutation test of a fixed alarm set against the target catalog.

    The alarms stay exactly as given; each replicate permutes the targets'
    times (locations and magnitudes fixed) and recounts predicted events
    with the max-floor membership rule. An alarm never predicts its own
    trigger under any time assignment.
    """
    if n_reps < 1:
        raise ValueError(f"n_reps must be >= 1, got {n_reps}")
    key = _resolve_key(rng)
    index = AlarmTargetIndex(targets, alarm_set)
    times = targets.times_s()
    observed = index.count_predicted(times)
    sims = _simulated_counts(index, times, n_reps, key)
    sims_geq = int((sims >= observed).sum())
    report = TestReport(
        observed=float(observed),
        sim_count=n_reps,
        sims_geq=sims_geq,
        p_estimate=sims_geq / n_reps,
        p_is_upper_bound=sims_geq == 0,
        max_sim=float(sims.max()) if n_reps else 0.0,
        seed=key.seed,
        config=dict(config or {}),
    )
    if return_sims:
        return report, sims
    return report


def permutation_test(
    catalog: Catalog,
    mag_threshold: float,
    window_days: float = 21.0,
    radius_km: float = 50.0,
    floor_rule: FloorRule = FloorRule.TRIGGER,
    n_reps: int = 1000,
    rng: Rng | int = 0,
) -> TestReport:
    """Generate alarms from the catalog once, then test them on permuted times.

    The statistic is the number of predicted events among the events at or
    above the threshold within the catalog span.
    """
    floor_rule = FloorRule(floor_rule)
    targets = filter_catalog(catalog, mag_threshold)
    alarm_set = generate_alarms(targets, mag_threshold, window_days, radius_km, floor_rule)
    key = _resolve_key(rng)
    config = {
        "mag_threshold": mag_threshold,
        "window_days": window_days,
        "radius_km": radius_km,
        "floor_rule": floor_rule.value,
        "n_reps": n_reps,
        "seed": key.seed,
        "stream_id": key.stream_id,
        "n_targets": len(targets),
        "n_alarms": len(alarm_set),
    }
    return permutation_test_fixed_alarms(targets, alarm_set, n_reps, key, config)


def exact_permutation_pvalue(
    catalog: Catalog,
    mag_threshold: float,
    window_days: float = 21.0,
    radius_km: float = 50.0,
    floor_rule: FloorRule = FloorRule.TRIGGER,
) -> Fraction:
    """Exact p-value by enumerating every assignment of times to events.

    All Q! permutations are equally likely under the exchangeable-times
    null; the result is the exact fraction whose predicted-event count
    reaches the observed count. Guarded to Q <= 8 events, beyond which the
    enumeration is not attempted.
    """
    targets = filter_catalog(catalog, mag_threshold)
    n = len(targets)
    if n > MAX_EXACT_EVENTS:
        raise ValueError(
            f"exact enumeration guard: {n} events exceed the limit of "
            f"{MAX_EXACT_EVENTS} (use the Monte-Carlo test instead)"
        )
    alarm_set = generate_alarms(
        targets, mag_threshold, window_days, radius_km, FloorRule(floor_rule)
    )
    index = AlarmTargetIndex(targets, alarm_set)
    times = targets.times_s()
    observed = index.count_predicted(times)
    if n == 0:
        return Fraction(1, 1)
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
    counts = index.counts_for_time_matrix(times[perms])
    return Fraction(int((counts >= observed).sum()), len(perms))


def binomial_tail_pvalue(s: int, q: int, pi: float) -> float:
    """P(X >= s) for X ~ Binomial(q, pi): the chance that s or more of q
    events fall inside alarms of normalized measure pi."""
    if s < 0 or q < 0 or s > q:
        raise ValueError(f"need 0 <= s <= q, got s={s}, q={q}")
    if not (0.0 <= pi <= 1.0):
        raise ValueError(f"pi must be in [0, 1], got {pi!r}")
    if s == 0:
        return 1.0
    return float(stats.binom.sf(s - 1, q, pi))


def poisson_binomial_pvalue(
    s_obs: int,
    probs: Sequence[float],
    method: str = "exact_dp",
    n_reps: int = 100_000,
    rng=0,
) -> float:
    """P(S >= s_obs) where S sums independent Bernoulli(p_j) alarm successes.

    Methods: ``exact_dp`` runs the O(A^2) convolution of the probability
    mass function; ``simulate`` draws the Bernoulli sums; ``poisson_approx``
    uses a Poisson tail with mean sum(p_j).
    """
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 1:
        raise ValueError("probs must be a flat sequence")
    if np.any((probs < 0.0) | (probs > 1.0) | ~np.isfinite(probs)):
        raise ValueError("every probability must lie in [0, 1]")
    if s_obs < 0 or s_obs > probs.size:
        raise ValueError(f"need 0 <= s_obs <= {probs.size}, got {s_obs}")
    if s_obs == 0:
        return 1.0
    if method == "exact_dp":
        pmf = np.array([1.0])
        for p in probs:
            nxt = np.zeros(pmf.size + 1)
            nxt[:-1] = pmf * (1.0 - p)
            nxt[1:] += pmf * p
            pmf = nxt
        return float(pmf[s_obs:].sum())
    if method == "simulate":
        if n_reps < 1:
            raise ValueError("n_reps must be >= 1")
        g = as_generator(rng)
        sums = (g.random((n_reps, probs.size)) < probs).sum(axis=1)
        return float((sums >= s_obs).mean())
    if method == "poisson_approx":
        return float(stats.poisson.sf(s_obs - 1, probs.sum()))
    raise ValueError(f"unknown method {method!r}")


def alarm_measure_pi(
    alarm_set: AlarmSet,
    historical_epicenters: Sequence[GeoPoint],
    t_interval: tuple[datetime, datetime],
) -> float:
    """Normalized alarm measure: counting measure in space, uniform in time.

    For each historical epicenter, the fraction of the interval during
    which some alarm covers that point, by exact interval-union arithmetic;
    pi is the average of those fractions over the epicenters.
    """
    if not historical_epicenters:
        raise ValueError("historical_epicenters must be nonempty")
    t_start, t_end = (_as_utc(t) for t in t_interval)
    t0 = t_start.timestamp()
    t1 = t_end.timestamp()
    if not t0 < t1:
        raise ValueError("t_interval is empty")
    total = 0.0
    for point in historical_epicenters:
        segments = []
        for a in alarm_set.alarms:
            lo = max(a.t_start.timestamp(), t0)
            hi = min(a.t_end.timestamp(), t1)
            if hi <= lo:
                continue
            if great_circle_km(a.center, point) <= a.radius_km:
                segments.append((lo, hi))
        covered = 0.0
        end = -math.inf
        for lo, hi in sorted(segments):
            if lo > end:
                covered += hi - lo
                end = hi
            elif hi > end:
                covered += hi - end
                end = hi
        total += covered / (t1 - t0)
    return total / len(historical_epicenters)


@dataclass(frozen=True)
class GridOutcome:
    """Per-cell prediction and occurrence flags for one evaluation period."""

    predicted: tuple[bool, ...]
    occurred: tuple[bool, ...]

    def __post_init__(self):
        object.__setattr__(self, "predicted", tuple(bool(x) for x in self.predicted))
        object.__setattr__(self, "occurred", tuple(bool(x) for x in self.occurred))
        if len(self.predicted) != len(self.occurred):
            raise ValueError("predicted and occurred must have equal length")

    @property
    def n_cells(self) -> int:
        return len(self.predicted)


def r_score(outcome: GridOutcome) -> float:
    """Hit rate over occupied cells minus false-alarm rate over aseismic cells."""
    predicted = np.asarray(outcome.predicted)
    occurred = np.asarray(outcome.occurred)
    n_occurred = int(occurred.sum())
    n_aseismic = int((~occurred).sum())
    if n_occurred == 0:
        raise ValueError("no cells with earthquakes: hit-rate denominator is zero")
    if n_aseismic == 0:
        raise ValueError("no aseismic cells: false-alarm denominator is zero")
    hits = int((predicted & occurred).sum())
    false_alarms = int((predicted & ~occurred).sum())
    return hits / n_occurred - false_alarms / n_aseismic


@dataclass(frozen=True)
class BaselineReport:
    """Simulated R-score distribution for one random-prediction scheme."""

    scheme: int
    n_reps: int
    mean: float
    sd: float
    quantiles: dict[str, float]
    p_estimate: float | None
    observed_r: float | None
    mean_predicted_cells: float
    n_clipped_probs: int
    seed: int
    config: dict = field(default_factory=dict)


def _scheme_probs(
    rates: np.ndarray, n_predicted: int, avg_occupied_cells: float | None
) -> tuple[np.ndarray, int]:
    """Per-cell prediction probabilities proportional to historical rates.

    The proportionality constant is n_predicted over the historical annual
    average number of occupied cells; when that average is not supplied it
    is estimated as sum(1 - exp(-rate)) from per-year rates. Probabilities
    pushed past 1 are clipped and counted.
    """
    if avg_occupied_cells is None:
        avg_occupied_cells = float(np.sum(1.0 - np.exp(-rates)))
    if avg_occupied_cells <= 0.0:
        raise ValueError("average number of occupied cells must be positive")
    raw = rates * (n_predicted / avg_occupied_cells)
    clipped = int((raw > 1.0).sum())
    return np.clip(raw, 0.0, 1.0), clipped


def _weighted_sample_without_replacement(
    weights: np.ndarray, k: int, g: np.random.Generator
) -> np.ndarray:
    """Sequential draws with renormalization among the remaining cells."""
    weights = weights.astype(float).copy()
    chosen = np.empty(k, dtype=np.int64)
    for i in range(k):
        total = weights.sum()
        if total <= 0.0:
            remaining = np.flatnonzero(weights >= 0.0)
            pool = np.setdiff1d(remaining, chosen[:i], assume_unique=False)
            chosen[i:] = g.choice(pool, size=k - i, replace=False)
            break
        pick = int(g.choice(weights.size, p=weights / total))
        chosen[i] = pick
        weights[pick] = 0.0
    return chosen


def r_score_baseline(
    scheme: int,
    rates: Sequence[float] | None,
    n_predicted: int,
    outcomes: Sequence[bool],
    n_reps: int,
    rng,
    observed_r: float | None = None,
    avg_occupied_cells: float | None = None,
) -> BaselineReport:
    """Simulate the R-score of random predictions against fixed outcomes.

    Scheme 1 predicts n_predicted cells uniformly without replacement;
    scheme 2 tosses an independent coin per cell with probability
    proportional to its historical rate; scheme 3 draws n_predicted cells
    without replacement with those same probabilities as weights
    (sequential renormalized draws).
    """
    if n_reps < 1:
        raise ValueError(f"n_reps must be >= 1, got {n_reps}")
    occurred = np.asarray(outcomes, dtype=bool)
    n_cells = occurred.size
    if scheme not in (1, 2, 3):
        raise ValueError(f"scheme must be 1, 2, or 3, got {scheme!r}")
    if scheme in (1, 3) and not 0 <= n_predicted <= n_cells:
        raise ValueError(f"n_predicted {n_predicted} outside [0, {n_cells}]")
    probs = None
    n_clipped = 0
    if scheme in (2, 3):
        if rates is None:
            raise ValueError(f"scheme {scheme} needs per-cell historical rates")
        rates_arr = np.asarray(rates, dtype=float)
        if rates_arr.size != n_cells:
            raise ValueError("rates and outcomes differ in length")
        probs, n_clipped = _scheme_probs(rates_arr, n_predicted, avg_occupied_cells)

    key = _resolve_key(rng) if not isinstance(rng, np.random.Generator) else None
    g = as_generator(rng)
    scores = np.empty(n_reps, dtype=float)
    n_predicted_cells = np.empty(n_reps, dtype=np.int64)
    for rep in range(n_reps):
        predicted = np.zeros(n_cells, dtype=bool)
        if scheme == 1:
            predicted[g.choice(n_cells, size=n_predicted, replace=False)] = True
        elif scheme == 2:
            predicted = g.random(n_cells) < probs
        else:
            predicted[_weighted_sample_without_replacement(probs, n_predicted, g)] = True
        n_predicted_cells[rep] = predicted.sum()
        scores[rep] = r_score(GridOutcome(tuple(predicted), tuple(occurred)))

    quantile_levels = {"q025": 0.025, "q25": 0.25, "q50": 0.5, "q75": 0.75, "q975": 0.975}
    return BaselineReport(
        scheme=scheme,
        n_reps=n_reps,
        mean=float(scores.mean()),
        sd=float(scores.std(ddof=1)) if n_reps > 1 else 0.0,
        quantiles={k: float(np.quantile(scores, q)) for k, q in quantile_levels.items()},
        p_estimate=(
            float((scores >= observed_r).mean()) if observed_r is not None else None
        ),
        observed_r=observed_r,
        mean_predicted_cells=float(n_predicted_cells.mean()),
        n_clipped_probs=n_clipped,
        seed=key.seed if key is not None else -1,
        config={
            "scheme": scheme,
            "n_predicted": n_predicted,
            "n_cells": n_cells,
            "avg_occupied_cells": avg_occupied_cells,
            "sampling": "sequential-renormalized" if scheme == 3 else None,
        },
    )
