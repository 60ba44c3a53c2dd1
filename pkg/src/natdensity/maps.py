"""1-1 maps on the naturals: the 2^n shuffle, its inverse, and friends.

The shuffle permutes each dyadic block [2^i, 2^(i+1)-1] (i >= 2) by sending
the lower half to the even positions and the upper half to the odd ones;
its inverse deals the evens of a block to the lower half and the odds to
the upper half.  Both expose structured preimages/reach bounds, which is
what lets interval-level code avoid elementwise scans.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import (
    Interval,
    IntervalUnion,
    ImageSet,
    NatSet,
    as_nat,
)

# numpy float64 block-exponent trick is exact below 2^53
_ARRAY_EXACT_LIMIT = 1 << 53


class MapsError(ValueError):
    pass


def sh(k: int) -> int:
    """The 2^n shuffle: identity below 4, a riffle of each dyadic block."""
    as_nat(k, "k")
    if k < 4:
        return k
    i = k.bit_length() - 1
    base = 1 << i
    half = base >> 1
    j = k - base
    if j < half:
        return base + 2 * j
    return base + 2 * (j - half) + 1


def sh_inv(k: int) -> int:
    """Inverse shuffle: evens of a block go to its lower half, odds upper."""
    as_nat(k, "k")
    if k < 4:
        return k
    i = k.bit_length() - 1
    base = 1 << i
    half = base >> 1
    offset = k - base
    if offset % 2 == 0:
        return base + offset // 2
    return base + half + (offset - 1) // 2


def _block_exponent_array(ks: np.ndarray) -> np.ndarray:
    _, exponents = np.frexp(ks.astype(np.float64))
    return (exponents - 1).astype(np.int64)


def _as_u64_array(ks) -> np.ndarray:
    arr = np.asarray(ks, dtype=np.int64)
    if arr.size and (int(arr.min()) < 1 or int(arr.max()) >= _ARRAY_EXACT_LIMIT):
        raise MapsError("array evaluation supports naturals in [1, 2^53)")
    return arr


def sh_array(ks) -> np.ndarray:
    """Vectorized sh() for int arrays (values below 2^53)."""
    arr = _as_u64_array(ks)
    out = arr.copy()
    big = arr >= 4
    kb = arr[big]
    base = np.int64(1) << _block_exponent_array(kb)
    half = base >> 1
    j = kb - base
    out[big] = np.where(j < half, base + 2 * j, base + 2 * (j - half) + 1)
    return out

def sh_inv_array(ks) -> np.ndarray:
    """Vectorized sh_inv() for int arrays (values below 2^53)."""
    arr = _as_u64_array(ks)
    out = arr.copy()
    big = arr >= 4
    kb = arr[big]
    base = np.int64(1) << _block_exponent_array(kb)
    half = base >> 1
    offset = kb - base
    even = offset % 2 == 0
    out[big] = np.where(even, base + offset // 2, base + half + (offset - 1) // 2)
    return out


def _block_end(n: int) -> int:
    return (1 << n.bit_length()) - 1


def sh_preimage_interval(interval: Interval) -> IntervalUnion:
    """Structured {k : sh(k) in I}: at most 3 intervals per block crossing.

    Within one block the evens of I pull back to a single lower-half
    interval and the odds to a single upper-half interval; full blocks and
    the fixed region [1, 3] pull back to themselves, and normalization
    merges everything that meets at block boundaries.
    """
    parts: list[Interval] = []
    i = interval.a.bit_length() - 1
    i_last = interval.b.bit_length() - 1
    while i <= i_last:
        base = 1 << i
        block_hi = (base << 1) - 1
        lo = max(interval.a, base)
        hi = min(interval.b, block_hi)
        i += 1
        if lo > hi:
            continue
        if base < 4:
            parts.append(Interval(lo, hi))
            continue
        half = base >> 1
        e0 = lo if lo % 2 == 0 else lo + 1
        e1 = hi if hi % 2 == 0 else hi - 1
        if e0 <= e1:
            parts.append(Interval(base + (e0 - base) // 2, base + (e1 - base) // 2))
        o0 = lo if lo % 2 == 1 else lo + 1
        o1 = hi if hi % 2 == 1 else hi - 1
        if o0 <= o1:
            parts.append(Interval(base + half + (o0 - base - 1) // 2,
                                  base + half + (o1 - base - 1) // 2))
    return IntervalUnion.from_intervals(parts)


def sh_image_interval(interval: Interval) -> IntervalUnion:
    """Structured {sh(k) : k in I} (equivalently the preimage under sh_inv)."""
    parts: list[Interval] = []
    i = interval.a.bit_length() - 1
    i_last = interval.b.bit_length() - 1
    while i <= i_last:
        base = 1 << i
        block_hi = (base << 1) - 1
        lo = max(interval.a, base)
        hi = min(interval.b, block_hi)
        i += 1
        if lo > hi:
            continue
        if base < 4:
            parts.append(Interval(lo, hi))
            continue
        half = base >> 1
        mid = base + half
        # lower half of the block maps onto evens, upper half onto odds
        l0, l1 = lo, min(hi, mid - 1)
        if l0 <= l1:
            parts.append(Interval(base + 2 * (l0 - base), base + 2 * (l1 - base)))
        u0, u1 = max(lo, mid), hi
        if u0 <= u1:
            parts.append(Interval(base + 2 * (u0 - mid) + 1, base + 2 * (u1 - mid) + 1))
    return IntervalUnion.from_intervals(parts)


# --------------------------------------------------------------------------
# map objects
# --------------------------------------------------------------------------

class Map1to1:
    """A (claimed) 1-1 map on the naturals.

    ``inverse`` and ``preimage_of_interval`` are optional structured fast
    paths; ``reach_bound(x)`` bounds the largest domain point whose image
    can be <= x (None means undeclared, which bars the map from operations
    that must scan a complete preimage).
    """

    name = "map"

    def apply(self, n: int) -> int:
        raise NotImplementedError

    def inverse(self, n: int) -> Optional[int]:
        return None

    def preimage_of_interval(self, interval: Interval) -> Optional[IntervalUnion]:
        return None

    def reach_bound(self, x: int) -> Optional[int]:
        return None

    def apply_array(self, ks) -> np.ndarray:
        return np.fromiter((self.apply(int(k)) for k in np.asarray(ks).ravel()),
                           dtype=np.int64)

    def __repr__(self):
        return f"<Map1to1 {self.name}>"


class IdentityMap(Map1to1):
    name = "identity"

    def apply(self, n: int) -> int:
        return as_nat(n, "n")

    def inverse(self, n: int) -> Optional[int]:
        return n

    def preimage_of_interval(self, interval: Interval) -> Optional[IntervalUnion]:
        return IntervalUnion.from_intervals([interval])

    def reach_bound(self, x: int) -> Optional[int]:
        return x

    def apply_array(self, ks) -> np.ndarray:
        return np.asarray(ks, dtype=np.int64).copy()


class ShuffleMap(Map1to1):
    name = "sh"

    def apply(self, n: int) -> int:
        return sh(n)

    def inverse(self, n: int) -> Optional[int]:
        return sh_inv(n)

    def preimage_of_interval(self, interval: Interval) -> Optional[IntervalUnion]:
        return sh_preimage_interval(interval)

    def reach_bound(self, x: int) -> Optional[int]:
        return _block_end(x)

    def apply_array(self, ks) -> np.ndarray:
        return sh_array(ks)


class ShuffleInverseMap(Map1to1):
    name = "sh-inv"

    def apply(self, n: int) -> int:
        return sh_inv(n)

    def inverse(self, n: int) -> Optional[int]:
        return sh(n)

    def preimage_of_interval(self, interval: Interval) -> Optional[IntervalUnion]:
        # {k : sh_inv(k) in I} = sh(I), which is interval-structured
        return sh_image_interval(interval)

    def reach_bound(self, x: int) -> Optional[int]:
        return _block_end(x)

    def apply_array(self, ks) -> np.ndarray:
        return sh_inv_array(ks)


class FunctionMap(Map1to1):
    """Wrap an arbitrary callable (mostly for tests and experiments)."""

    def __init__(self, fn: Callable[[int], int], name: str = "fn",
                 reach: Optional[Callable[[int], int]] = None):
        self._fn = fn
        self.name = name
        self._reach = reach

    def apply(self, n: int) -> int:
        return self._fn(as_nat(n, "n"))

    def reach_bound(self, x: int) -> Optional[int]:
        return self._reach(x) if self._reach is not None else None


_BUILTIN_MAPS = {
    "identity": IdentityMap,
    "sh": ShuffleMap,
    "sh-inv": ShuffleInverseMap,
}


def get_map(name: str) -> Map1to1:
    """Look up a builtin map by name ("sh", "sh-inv", "identity")."""
    try:
        return _BUILTIN_MAPS[name]()
    except KeyError:
        raise MapsError(f"unknown map {name!r}; builtins: {sorted(_BUILTIN_MAPS)}") from None


# --------------------------------------------------------------------------
# verification and images
# --------------------------------------------------------------------------

MAX_VERIFY_WINDOW = 1 << 26


@dataclass(frozen=True)
class InjectivityReport:
    window: Interval
    ok: bool
    collision: Optional[tuple[int, int, int]]  # (n1, n2, shared value)


def verify_injective(f: Map1to1, window: Interval) -> InjectivityReport:
    """Scan a window for collisions; the first one in scan order is reported."""
    if window.size > MAX_VERIFY_WINDOW:
        raise MapsError(f"window size {window.size} exceeds {MAX_VERIFY_WINDOW}")
    ks = np.arange(window.a, window.b + 1, dtype=np.int64)
    values = f.apply_array(ks)
    order = np.argsort(values, kind="stable")
    sorted_values = values[order]
    dup = np.nonzero(sorted_values[1:] == sorted_values[:-1])[0]
    if dup.size == 0:
        return InjectivityReport(window, True, None)
    # within each equal-value run the stable sort keeps scan order, so the
    # first collision overall is the duplicate with the smallest second index
    second = order[dup + 1]
    pick = int(np.argmin(second))
    n2 = int(ks[second[pick]])
    n1 = int(ks[order[dup[pick]]])
    value = int(sorted_values[dup[pick]])
    return InjectivityReport(window, False, (n1, n2, value))


def image_on_window(f: Map1to1, base: NatSet, window: Interval,
                    scan_bound: Optional[int] = None) -> ImageSet:
    """Materialize {f(s) : s in base} restricted to ``window``.

    Completeness needs every domain point whose image can land in the
    window: maps with a declared reach bound provide it, otherwise the
    caller must pass ``scan_bound`` explicitly.
    """
    if scan_bound is None:
        scan_bound = f.reach_bound(window.b)
        if scan_bound is None:
            raise MapsError(
                f"map {f.name!r} declares no reach bound; pass scan_bound")
    domain = base.members_in(Interval(1, scan_bound))
    if domain.size:
        values = f.apply_array(domain)
        keep = values[(values >= window.a) & (values <= window.b)]
    else:
        keep = np.empty(0, dtype=np.int64)
    return ImageSet(keep, window, map_name=f.name, base_name=base.name)
