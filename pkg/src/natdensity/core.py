"""Exact building blocks: naturals, rationals, intervals, and integer sets.

Everything in this package works over the naturals starting at 1.  Three
ground rules are enforced here and assumed everywhere else:

* naturals are validated ints in [1, 2**64 - 1]; arithmetic that would
  leave that range raises ``NatOverflowError`` instead of wrapping,
* ratio-like parameters (m, p, q, r, epsilon, D) are ``fractions.Fraction``
  values, so interval classifications and threshold comparisons are decided
  exactly by cross-multiplication,
* a set of naturals is anything with the ``NatSet`` contract
  (``contains(n)`` and ``count_leq(n)``); counting code never needs to know
  which realization it is holding.

Floating point appears only when a report is formatted for humans.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

U64_MAX = 2**64 - 1

#: cache granularity for PredicateSet prefix counts
PREFIX_BLOCK = 1 << 16


class NatError(ValueError):
    """A value that should be a natural (>= 1) is not."""


class NatOverflowError(NatError):
    """A computation left the unsigned 64-bit range."""


def as_nat(value, what: str = "value") -> int:
    """Validate that ``value`` is a natural in [1, 2**64 - 1] and return it."""
    if not isinstance(value, int) or isinstance(value, bool):
        raise NatError(f"{what} must be an int, got {type(value).__name__}")
    if value < 1:
        raise NatError(f"{what} must be >= 1, got {value}")
    if value > U64_MAX:
        raise NatOverflowError(f"{what} = {value} exceeds 64-bit range")
    return value


def check_u64(value: int, what: str = "result") -> int:
    """Reject results outside [0, 2**64 - 1]; never wrap silently."""
    if value < 0:
        raise NatError(f"{what} underflowed below 0 ({value})")
    if value > U64_MAX:
        raise NatOverflowError(f"{what} = {value} exceeds 64-bit range")
    return value


# --------------------------------------------------------------------------
# rationals
# --------------------------------------------------------------------------

def parse_rational(text: str) -> Fraction:
    """Parse "num/den", a decimal like "0.49", or a plain integer, exactly."""
    try:
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"not a rational: {text!r}") from exc


def format_rational(q: Fraction) -> str:
    """Canonical "num/den" form (lowest terms; "n/1" collapses to "n")."""
    if q.denominator == 1:
        return str(q.numerator)
    return f"{q.numerator}/{q.denominator}"


def rational_to_float_str(q: Fraction, digits: int = 12) -> str:
    """Decimal rendering with ``digits`` significant digits (reports only)."""
    return format(float(q), f".{digits}g")


def floor_frac(q: Fraction) -> int:
    return q.numerator // q.denominator


def ceil_frac(q: Fraction) -> int:
    return -((-q.numerator) // q.denominator)


# --------------------------------------------------------------------------
# intervals
# --------------------------------------------------------------------------

@dataclass(frozen=True, order=True)
class Interval:
    """Closed integer interval [a, b] of naturals, 1 <= a <= b."""

    a: int
    b: int

    def __post_init__(self):
        as_nat(self.a, "interval left endpoint")
        as_nat(self.b, "interval right endpoint")
        if self.a > self.b:
            raise NatError(f"interval endpoints out of order: [{self.a}, {self.b}]")

    @property
    def size(self) -> int:
        return self.b - self.a + 1

    def contains(self, n: int) -> bool:
        return self.a <= n <= self.b

    def intersect(self, other: "Interval") -> Optional["Interval"]:
        lo, hi = max(self.a, other.a), min(self.b, other.b)
        return Interval(lo, hi) if lo <= hi else None

    def __str__(self) -> str:
        return f"[{self.a},{self.b}]"


def mu(interval: Interval) -> Fraction:
    """Width ratio b/a of the interval, exactly."""
    return Fraction(interval.b, interval.a)


M_INTERVAL = "m-interval"
PLUS_M = "+m-interval"
NEITHER = "neither"


@dataclass(frozen=True)
class Classification:
    """Outcome of classify(): first matching label plus both raw predicates."""

    label: str
    is_m_interval: bool
    is_plus_m: bool


def _require_ratio_above_1(m: Fraction, what: str = "m") -> Fraction:
    if not isinstance(m, Fraction):
        m = Fraction(m)
    if m <= 1:
        raise ValueError(f"{what} must exceed 1, got {m}")
    return m


def is_m_interval(interval: Interval, m: Fraction) -> bool:
    """Exact test of m*a - 1 < b <= m*a via cross-multiplication."""
    m = _require_ratio_above_1(m)
    num, den = m.numerator, m.denominator
    a, b = interval.a, interval.b
    return num * a - den < b * den and b * den <= num * a


def is_plus_m_interval(interval: Interval, m: Fraction) -> bool:
    """Exact test of b/a > m."""
    m = _require_ratio_above_1(m)
    return interval.b * m.denominator > m.numerator * interval.a


def classify(interval: Interval, m: Fraction) -> Classification:
    """Label an interval for ratio ``m`` (m-interval checked first)."""
    m = _require_ratio_above_1(m)
    is_m = is_m_interval(interval, m)
    is_plus = is_plus_m_interval(interval, m)
    if is_m:
        label = M_INTERVAL
    elif is_plus:
        label = PLUS_M
    else:
        label = NEITHER
    return Classification(label, is_m, is_plus)


def m_interval_at(a: int, m: Fraction) -> Interval:
    """The unique m-interval with left endpoint ``a``: [a, floor(m*a)]."""
    as_nat(a, "a")
    m = _require_ratio_above_1(m)
    b = (m.numerator * a) // m.denominator
    check_u64(b, "m-interval right endpoint")
    return Interval(a, b)


def tile_m_intervals(lo: int, hi: int, m: Fraction) -> list[Interval]:
    """Consecutive m-intervals from ``lo`` until one reaches past ``hi``.

    The last tile is never clipped (clipping would destroy the m-interval
    property); callers that need containment filter afterwards.
    """
    as_nat(lo, "lo")
    as_nat(hi, "hi")
    if lo > hi:
        raise NatError(f"empty tiling range [{lo}, {hi}]")
    m = _require_ratio_above_1(m)
    tiles: list[Interval] = []
    a = lo
    while True:
        tile = m_interval_at(a, m)
        tiles.append(tile)
        if tile.b >= hi:
            return tiles
        a = tile.b + 1


@dataclass(frozen=True)
class IntervalUnion:
    """Normalized finite union of intervals: sorted, disjoint, non-adjacent."""

    parts: tuple[Interval, ...]

    @staticmethod
    def from_intervals(intervals: Iterable[Interval]) -> "IntervalUnion":
        parts = sorted(intervals, key=lambda iv: (iv.a, iv.b))
        merged: list[list[int]] = []
        for iv in parts:
            if merged and iv.a <= merged[-1][1] + 1:
                merged[-1][1] = max(merged[-1][1], iv.b)
            else:
                merged.append([iv.a, iv.b])
        return IntervalUnion(tuple(Interval(a, b) for a, b in merged))

    @property
    def size(self) -> int:
        return sum(p.size for p in self.parts)

    def contains(self, n: int) -> bool:
        return any(p.a <= n <= p.b for p in self.parts)

    def span(self) -> Optional[Interval]:
        if not self.parts:
            return None
        return Interval(self.parts[0].a, self.parts[-1].b)

    def members_array(self, clip: Optional[Interval] = None) -> np.ndarray:
        chunks = []
        for p in self.parts:
            piece = p if clip is None else p.intersect(clip)
            if piece is not None:
                chunks.append(np.arange(piece.a, piece.b + 1, dtype=np.int64))
        if not chunks:
            return np.empty(0, dtype=np.int64)
        return np.concatenate(chunks)

    def __iter__(self):
        return iter(self.parts)

    def __len__(self):
        return len(self.parts)

    def __str__(self) -> str:
        return " u ".join(str(p) for p in self.parts) if self.parts else "{}"


# --------------------------------------------------------------------------
# integer sets
# --------------------------------------------------------------------------

class NatSet:
    """Contract: ``contains(n)`` and the prefix count ``count_leq(n)``.

    ``count_leq`` must be monotone, increase by contains(n) at each step,
    and accept n = 0 (returning 0).  Realizations are immutable after
    construction and safe to share across concurrent readers.
    """

    name = "set"

    def contains(self, n: int) -> bool:
        raise NotImplementedError

    def count_leq(self, n: int) -> int:
        raise NotImplementedError

    def members_in(self, interval: Interval) -> np.ndarray:
        """Sorted members inside ``interval``; default is a contains() scan."""
        return np.fromiter(
            (n for n in range(interval.a, interval.b + 1) if self.contains(n)),
            dtype=np.int64,
        )

    def __repr__(self):
        return f"<{type(self).__name__} {self.name}>"


class PredicateSet(NatSet):
    """Membership rule plus a block cache of prefix counts.

    The cache stores, per 2**16-aligned block, the cumulative member count
    within the block; a fill is idempotent, so concurrent readers may race
    without observable torn state.  An optional ``count_fn`` short-circuits
    the cache with a closed form.
    """

    def __init__(self, predicate: Callable[[int], bool], name: str = "predicate",
                 count_fn: Optional[Callable[[int], int]] = None):
        self._pred = predicate
        self.name = name
        self._count_fn = count_fn
        self._block_cum: dict[int, np.ndarray] = {}
        self._block_total: dict[int, int] = {}

    def contains(self, n: int) -> bool:
        if n < 1:
            return False
        return bool(self._pred(n))

    def _block(self, j: int) -> np.ndarray:
        cum = self._block_cum.get(j)
        if cum is None:
            start = j * PREFIX_BLOCK + 1
            flags = np.fromiter(
                (self._pred(n) for n in range(start, start + PREFIX_BLOCK)),
                dtype=np.uint32, count=PREFIX_BLOCK,
            )
            cum = np.cumsum(flags, dtype=np.uint32)
            # assignment is atomic; a racing duplicate fill computes the same array
            self._block_cum[j] = cum
            self._block_total[j] = int(cum[-1])
        return cum

    def count_leq(self, n: int) -> int:
        if n < 1:
            return 0
        if self._count_fn is not None:
            return self._count_fn(n)
        j, offset = divmod(n - 1, PREFIX_BLOCK)
        total = 0
        for jj in range(j):
            if jj not in self._block_total:
                self._block(jj)
            total += self._block_total[jj]
        return total + int(self._block(j)[offset])


class ArithmeticProgressionSet(NatSet):
    """{start, start+step, start+2*step, ...} with closed-form counting."""

    def __init__(self, start: int, step: int, name: Optional[str] = None):
        as_nat(start, "start")
        as_nat(step, "step")
        self.start = start
        self.step = step
        self.name = name or f"progression:{start}+{step}k"

    def contains(self, n: int) -> bool:
        return n >= self.start and (n - self.start) % self.step == 0

    def count_leq(self, n: int) -> int:
        if n < self.start:
            return 0
        return (n - self.start) // self.step + 1

    def members_in(self, interval: Interval) -> np.ndarray:
        first = self.start
        if interval.a > first:
            first = self.start + -((self.start - interval.a) // self.step) * self.step
        if first > interval.b:
            return np.empty(0, dtype=np.int64)
        return np.arange(first, interval.b + 1, self.step, dtype=np.int64)


class IntervalUnionSet(NatSet):
    """Finite union of intervals with prefix counting by bisection."""

    def __init__(self, union: IntervalUnion, name: str = "interval-union"):
        self.union = union
        self.name = name
        self._starts = np.array([p.a for p in union.parts], dtype=np.int64)
        self._ends = np.array([p.b for p in union.parts], dtype=np.int64)
        sizes = self._ends - self._starts + 1
        self._cum = np.concatenate([[0], np.cumsum(sizes)]) if len(union.parts) else np.zeros(1, np.int64)

    def contains(self, n: int) -> bool:
        idx = int(np.searchsorted(self._starts, n, side="right")) - 1
        return idx >= 0 and n <= int(self._ends[idx])

    def count_leq(self, n: int) -> int:
        if n < 1 or len(self._starts) == 0:
            return 0
        idx = int(np.searchsorted(self._starts, n, side="right")) - 1
        if idx < 0:
            return 0
        partial = min(n, int(self._ends[idx])) - int(self._starts[idx]) + 1
        return int(self._cum[idx]) + partial

    def members_in(self, interval: Interval) -> np.ndarray:
        return self.union.members_array(clip=interval)


class LazyIntervalUnionSet(NatSet):
    """Infinite ascending union of disjoint intervals, generated on demand.

    ``part_fn(idx)`` must yield intervals with strictly increasing,
    pairwise disjoint spans as ``idx`` runs over 0, 1, 2, ...
    """

    def __init__(self, part_fn: Callable[[int], Interval], name: str = "lazy-union"):
        self._part_fn = part_fn
        self.name = name
        self._parts: list[Interval] = []

    def _parts_through(self, n: int) -> list[Interval]:
        parts = self._parts
        while not parts or parts[-1].a <= n:
            nxt = self._part_fn(len(parts))
            if parts and nxt.a <= parts[-1].b:
                raise NatError(f"{self.name}: generated parts not ascending at {nxt}")
            parts.append(nxt)
        return parts

    def contains(self, n: int) -> bool:
        if n < 1:
            return False
        for p in self._parts_through(n):
            if p.a <= n <= p.b:
                return True
            if p.a > n:
                break
        return False

    def count_leq(self, n: int) -> int:
        if n < 1:
            return 0
        total = 0
        for p in self._parts_through(n):
            if p.a > n:
                break
            total += min(n, p.b) - p.a + 1
        return total

    def members_in(self, interval: Interval) -> np.ndarray:
        chunks = []
        for p in self._parts_through(interval.b):
            piece = p.intersect(interval)
            if piece is not None:
                chunks.append(np.arange(piece.a, piece.b + 1, dtype=np.int64))
            if p.a > interval.b:
                break
        if not chunks:
            return np.empty(0, dtype=np.int64)
        return np.concatenate(chunks)


class BitWindowSet(NatSet):
    """Explicit members on a window [1, L]; empty beyond the window."""

    def __init__(self, members, window: Interval, name: str = "bit-window"):
        arr = np.asarray(members, dtype=np.int64)
        arr = np.unique(arr)
        if arr.size and (arr[0] < 1 or arr[-1] > window.b):
            raise NatError(f"{name}: members outside window [1, {window.b}]")
        self._members = arr
        self.window = window
        self.name = name

    @classmethod
    def from_file(cls, path, window: Optional[Interval] = None, name: Optional[str] = None):
        values = []
        with open(path, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                text = line.strip()
                if not text or text.startswith("#"):
                    continue
                try:
                    values.append(as_nat(int(text), f"line {line_no}"))
                except ValueError as exc:
                    raise NatError(f"{path}: bad member on line {line_no}: {text!r}") from exc
        if window is None:
            hi = max(values) if values else 1
            window = Interval(1, hi)
        return cls(values, window, name=name or f"bits:{path}")

    @property
    def members(self) -> np.ndarray:
        return self._members

    def contains(self, n: int) -> bool:
        idx = int(np.searchsorted(self._members, n))
        return idx < self._members.size and int(self._members[idx]) == n

    def count_leq(self, n: int) -> int:
        if n < 1:
            return 0
        return int(np.searchsorted(self._members, n, side="right"))

    def members_in(self, interval: Interval) -> np.ndarray:
        lo = int(np.searchsorted(self._members, interval.a))
        hi = int(np.searchsorted(self._members, interval.b, side="right"))
        return self._members[lo:hi]


class ImageSet(BitWindowSet):
    """Image of a base set under a 1-1 map, materialized on a window."""

    def __init__(self, members, window: Interval, map_name: str, base_name: str):
        super().__init__(members, window, name=f"{map_name}({base_name})")
        self.map_name = map_name
        self.base_name = base_name


def count_in(nat_set: NatSet, interval: Interval) -> int:
    """Number of members of ``nat_set`` in a closed interval."""
    return nat_set.count_leq(interval.b) - nat_set.count_leq(interval.a - 1)


# --------------------------------------------------------------------------
# set specification strings
# --------------------------------------------------------------------------

def _parse_interval_list(text: str) -> IntervalUnion:
    parts = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            a_text, b_text = chunk.split("-", 1)
            parts.append(Interval(as_nat(int(a_text), "a"), as_nat(int(b_text), "b")))
        except (ValueError, NatError) as exc:
            raise ValueError(f"bad interval {chunk!r} (want a-b)") from exc
    if not parts:
        raise ValueError("empty interval list")
    return IntervalUnion.from_intervals(parts)


def parse_set_spec(text: str, *, window: Optional[Interval] = None) -> NatSet:
    """Build a NatSet from a specification string.

    Accepted forms: "evens", "odds", "multiples:k", "nodensity",
    "interval-union:a1-b1,a2-b2,...", "bits:FILE", and
    "dsl-image:FILE:BASESET[:SCANBOUND]" (the image of BASESET under the map
    defined in FILE, materialized on ``window``; DSL maps declare no reach
    bound, so the domain scan bound must be given when it cannot default).
    """
    text = text.strip()
    if text == "evens":
        return ArithmeticProgressionSet(2, 2, name="evens")
    if text == "odds":
        return ArithmeticProgressionSet(1, 2, name="odds")
    if text == "nodensity":
        from . import adversary

        return adversary.no_density_example()
    if text.startswith("multiples:"):
        k = as_nat(int(text.split(":", 1)[1]), "multiples step")
        return ArithmeticProgressionSet(k, k, name=f"multiples:{k}")
    if text.startswith("interval-union:"):
        return IntervalUnionSet(_parse_interval_list(text.split(":", 1)[1]),
                                name=text)
    if text.startswith("bits:"):
        return BitWindowSet.from_file(text.split(":", 1)[1])
    if text.startswith("dsl-image:"):
        from . import fndsl, maps

        fields = text.split(":")
        if len(fields) not in (3, 4):
            raise ValueError("dsl-image wants dsl-image:FILE:BASESET[:SCANBOUND]")
        _, path, base_spec = fields[:3]
        scan_bound = as_nat(int(fields[3]), "scan bound") if len(fields) == 4 else None
        if window is None:
            raise ValueError("dsl-image set needs a materialization window")
        base = parse_set_spec(base_spec, window=window)
        dsl_map = fndsl.load_map(path)
        return maps.image_on_window(dsl_map, base, window, scan_bound=scan_bound)
    raise ValueError(f"unknown set specification: {text!r}")
