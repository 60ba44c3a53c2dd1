"""Prefix densities, limit estimation, and the interval-density criterion.

A set has density D exactly when, for every width ratio m > 1 and every
tolerance, the local densities of sufficiently far-out intervals wider than
ratio m all sit within the tolerance of D.  ``check_thm1`` probes that
criterion over a finite scan range; ``estimate_limits`` estimates the
limsup/liminf of prefix densities from a sample grid that always includes
the dyadic oscillation points where block-structured sets peak and trough.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from .core import (
    Interval,
    NatSet,
    _require_ratio_above_1,
    as_nat,
    count_in,
)

EXHAUSTIVE_CUTOFF = 4096
_GRID_RATIO = Fraction(21, 20)  # 1.05 steps for sampled scans


def prefix_density(nat_set: NatSet, n: int) -> Fraction:
    """Exact |S ∩ [1,n]| / n."""
    as_nat(n, "n")
    return Fraction(nat_set.count_leq(n), n)


def interval_density(nat_set: NatSet, interval: Interval) -> Fraction:
    """Exact |S ∩ I| / |I|."""
    return Fraction(count_in(nat_set, interval), interval.size)


@dataclass(frozen=True)
class DensityProfile:
    samples: tuple[tuple[int, Fraction], ...]
    limsup_est: Fraction
    liminf_est: Fraction


def _sample_points(n_max: int, grid: int) -> list[int]:
    points = {1, n_max}
    # dyadic oscillation anchors: floor(c * 2^j) and its predecessor, for
    # c in {1, 3/2}; block-structured sets attain their extrema at the
    # predecessors, so both are kept.
    for num, den in ((1, 1), (3, 2)):
        j = 0
        while True:
            v = (num << j) // den
            if v > n_max:
                break
            if v >= 2:
                points.add(v)
                points.add(v - 1)
            j += 1
    # geometric grid
    lo = min(16, n_max)
    ratio = (n_max / lo) ** (1.0 / max(grid - 1, 1))
    x = float(lo)
    for _ in range(grid):
        points.add(min(n_max, max(1, round(x))))
        x *= ratio
    return sorted(points)


def estimate_limits(nat_set: NatSet, n_max: int,
                    tail_fraction: Fraction = Fraction(1, 4),
                    grid: int = 64) -> DensityProfile:
    """Estimate limsup/liminf of prefix densities from tail samples.

    This is an estimator, not a proof: the estimates are the max/min of
    exact prefix densities over sampled n >= tail_fraction * n_max.
    """
    as_nat(n_max, "n_max")
    if n_max < 16:
        raise ValueError("n_max must be >= 16")
    tail_fraction = Fraction(tail_fraction)
    if not 0 < tail_fraction < 1:
        raise ValueError("tail_fraction must lie in (0, 1)")
    if grid < 8:
        raise ValueError("grid must be >= 8")

    samples = tuple((n, prefix_density(nat_set, n)) for n in _sample_points(n_max, grid))
    tn, td = tail_fraction.numerator, tail_fraction.denominator
    tail = [d for n, d in samples if n * td >= tn * n_max]
    return DensityProfile(samples=samples, limsup_est=max(tail), liminf_est=min(tail))


# --------------------------------------------------------------------------
# the interval-density criterion checker
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Thm1Report:
    m: Fraction
    epsilon: Fraction
    N: int
    scan_limit: int
    worst_interval: Interval
    worst_deviation: Fraction
    mode: str  # "exhaustive" | "sampled"
    passed: bool


class EmptyScanError(ValueError):
    """No candidate interval fits in (N, scan_limit]."""


def thm1_constants(epsilon: Fraction, m: Fraction) -> tuple[Fraction, Fraction]:
    """Proof constants: the epsilon' bound ((m-1)/(m+1))*eps and 3/eps."""
    m = _require_ratio_above_1(m)
    epsilon = Fraction(epsilon)
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    return (Fraction(m - 1, m + 1) * epsilon, 3 / epsilon)


def _geometric_steps(start: int, limit: int) -> list[int]:
    out = []
    x = start
    num, den = _GRID_RATIO.numerator, _GRID_RATIO.denominator
    while x <= limit:
        out.append(x)
        x = max(x + 1, -((-x * num) // den))
    return out


def _min_plus_b(a: int, m: Fraction) -> int:
    """Smallest b with b/a > m."""
    return (m.numerator * a) // m.denominator + 1


@dataclass
class _Best:
    deviation: Fraction
    interval: Optional[Interval]

    def offer(self, deviation: Fraction, interval: Interval) -> None:
        # strict improvement only: the earlier (lexicographically smaller)
        # witness wins exact ties because candidates arrive in order
        if self.interval is None or deviation > self.deviation:
            self.deviation = deviation
            self.interval = interval


def _scan_exhaustive_rows(prefix: np.ndarray, D: Fraction, m: Fraction,
                          a_lo: int, a_hi: int, limit: int) -> _Best:
    """Exact worst deviation over all [a, b], a in (a_lo, a_hi], b <= limit."""
    best = _Best(Fraction(0), None)
    d_num, d_den = D.numerator, D.denominator
    for a in range(a_lo + 1, a_hi + 1):
        b0 = _min_plus_b(a, m)
        if b0 > limit:
            continue
        bs = np.arange(b0, limit + 1, dtype=np.int64)
        counts = prefix[bs] - int(prefix[a - 1])
        lengths = bs - (a - 1)
        nums = np.abs(counts * d_den - lengths * d_num)
        devs = nums / (lengths * d_den)
        row_max = float(devs.max())
        # exact comparison on the near-max band only; the float preselect is
        # safe because distinct deviations differ by far more than 1e-12 here
        for idx in np.nonzero(devs >= row_max - 1e-12)[0]:
            dev = Fraction(int(nums[idx]), int(lengths[idx]) * d_den)
            best.offer(dev, Interval(a, int(bs[idx])))
    return best


def _scan_sampled(nat_set: NatSet, D: Fraction, m: Fraction,
                  a_values: list[int], limit: int) -> _Best:
    best = _Best(Fraction(0), None)
    for a in a_values:
        b0 = _min_plus_b(a, m)
        if b0 > limit:
            continue
        left = nat_set.count_leq(a - 1)
        for b in _geometric_steps(b0, limit):
            dev = abs(Fraction(nat_set.count_leq(b) - left, b - a + 1) - D)
            best.offer(dev, Interval(a, b))
    return best


def check_thm1(nat_set: NatSet, D: Fraction, m: Fraction, epsilon: Fraction,
               N: int, scan_limit: int, mode: str = "auto",
               threads: int = 1) -> Thm1Report:
    """Probe the interval-density criterion over a finite range.

    Exhaustive mode checks every wider-than-m interval [a, b] with
    N < a <= b <= scan_limit (forced whenever scan_limit <= 4096; refused
    above it).  Sampled mode walks a on a 1.05-ratio geometric grid and,
    per a, b over the minimal widening plus a geometric grid.  The report
    carries the worst |interval density - D| and its witness interval;
    pass means strict worst < epsilon.
    """
    m = _require_ratio_above_1(m)
    D = Fraction(D)
    epsilon = Fraction(epsilon)
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    if N < 0:
        raise ValueError("N must be >= 0")
    as_nat(scan_limit, "scan_limit")
    if N >= scan_limit:
        raise EmptyScanError(f"empty scan range: N={N} >= scan_limit={scan_limit}")

    if mode == "auto":
        mode = "exhaustive" if scan_limit <= EXHAUSTIVE_CUTOFF else "sampled"
    if mode == "exhaustive" and scan_limit > EXHAUSTIVE_CUTOFF:
        raise ValueError(f"exhaustive mode is limited to scan_limit <= {EXHAUSTIVE_CUTOFF}")
    if mode not in ("exhaustive", "sampled"):
        raise ValueError(f"unknown mode {mode!r}")

    if mode == "exhaustive":
        flags = np.zeros(scan_limit + 1, dtype=np.int64)
        members = nat_set.members_in(Interval(1, scan_limit))
        flags[members] = 1
        prefix = np.cumsum(flags)
        ranges = _split_range(N, scan_limit, threads)
        results = _run_parts(
            [(lambda lo=lo, hi=hi: _scan_exhaustive_rows(prefix, D, m, lo, hi, scan_limit))
             for lo, hi in ranges],
            threads)
    else:
        a_values = _geometric_steps(N + 1, scan_limit)
        chunks = _split_list(a_values, threads)
        results = _run_parts(
            [(lambda chunk=chunk: _scan_sampled(nat_set, D, m, chunk, scan_limit))
             for chunk in chunks],
            threads)

    best = _merge_best(results)
    if best.interval is None:
        raise EmptyScanError(f"no interval wider than {m} fits in ({N}, {scan_limit}]")
    return Thm1Report(
        m=m, epsilon=epsilon, N=N, scan_limit=scan_limit,
        worst_interval=best.interval, worst_deviation=best.deviation,
        mode=mode, passed=best.deviation < epsilon,
    )


def _split_range(n_floor: int, limit: int, parts: int) -> list[tuple[int, int]]:
    if parts <= 1:
        return [(n_floor, limit)]
    span = limit - n_floor
    edges = [n_floor + (span * i) // parts for i in range(parts + 1)]
    return [(edges[i], edges[i + 1]) for i in range(parts) if edges[i] < edges[i + 1]]


def _split_list(values: list, parts: int) -> list[list]:
    if parts <= 1 or len(values) <= 1:
        return [values]
    size = -(-len(values) // parts)
    return [values[i:i + size] for i in range(0, len(values), size)]


def _run_parts(jobs, threads: int):
    if threads <= 1 or len(jobs) == 1:
        return [job() for job in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return [future.result() for future in [pool.submit(job) for job in jobs]]


def _merge_best(parts: list[_Best]) -> _Best:
    # deterministic merge: maximum deviation, lexicographically smallest
    # witness interval on exact ties
    best = _Best(Fraction(0), None)
    for part in parts:
        if part.interval is None:
            continue
        if (best.interval is None or part.deviation > best.deviation or
                (part.deviation == best.deviation and
                 (part.interval.a, part.interval.b) < (best.interval.a, best.interval.b))):
            best = part
    return best
