"""Covering-condition machinery for density preservation.

The covering condition asks: whenever the images of disjoint m-intervals
{J_i} cover a wider-than-p interval I, is the part of I covered by images
of badly-fitting J's (inclusion fraction below q) smaller than r*|I|?
This module evaluates that condition exactly on concrete instances,
constructs coverings for the shuffle that meet a target omission factor,
searches for violations over canonical candidate families, and builds the
half-block violation witnesses for the inverse shuffle.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Optional

import numpy as np

from .core import (
    Interval,
    IntervalUnion,
    NatOverflowError,
    _require_ratio_above_1,
    as_nat,
    format_rational,
    is_m_interval,
    is_plus_m_interval,
    mu,
    parse_rational,
    tile_m_intervals,
)
from .maps import Map1to1, ShuffleInverseMap, get_map, sh_preimage_interval


class InstanceError(ValueError):
    """A covering instance violates its structural invariants."""


class WitnessError(ValueError):
    """A constructed witness failed its own violation check."""


@dataclass(frozen=True)
class CoveringInstance:
    f: Map1to1
    I: Interval
    Js: tuple[Interval, ...]
    q: Fraction
    r: Fraction
    m: Fraction
    p: Fraction


@dataclass(frozen=True)
class CoveringReport:
    inclusion: tuple[Fraction, ...]  # per J, |I ∩ f(J)| / |J|
    C: tuple[Interval, ...]          # Js with inclusion >= q
    T_union: IntervalUnion           # union of the remaining Js
    fT_in_I: int                     # |f(T) ∩ I|
    omission: Fraction               # fT_in_I / |I|
    condition_holds: bool            # fT_in_I < r * |I|, strict and exact


def _image_in_interval_count(f: Map1to1, J: Interval, I: Interval) -> int:
    values = f.apply_array(np.arange(J.a, J.b + 1, dtype=np.int64))
    return int(((values >= I.a) & (values <= I.b)).sum())


def _validate_instance(inst: CoveringInstance) -> None:
    if not inst.Js:
        raise InstanceError("covering has no intervals")
    if not 0 < inst.q < 1:
        raise InstanceError(f"q must lie in (0, 1), got {inst.q}")
    if not 0 < inst.r < 1:
        raise InstanceError(f"r must lie in (0, 1), got {inst.r}")
    _require_ratio_above_1(inst.m, "m")
    _require_ratio_above_1(inst.p, "p")
    ordered = sorted(inst.Js, key=lambda J: J.a)
    for first, second in zip(ordered, ordered[1:]):
        if second.a <= first.b:
            raise InstanceError(f"intervals not disjoint: {first} and {second}")
    for J in inst.Js:
        if not is_m_interval(J, inst.m):
            raise InstanceError(f"{J} is not an m-interval for m={inst.m}")
    if not is_plus_m_interval(inst.I, inst.p):
        raise InstanceError(f"I={inst.I} is not a +p-interval for p={inst.p}")
    covered = np.zeros(inst.I.size, dtype=bool)
    for J in inst.Js:
        values = inst.f.apply_array(np.arange(J.a, J.b + 1, dtype=np.int64))
        hits = values[(values >= inst.I.a) & (values <= inst.I.b)]
        covered[hits - inst.I.a] = True
    if not covered.all():
        missing = int(np.nonzero(~covered)[0][0]) + inst.I.a
        raise InstanceError(
            f"I not covered by the images (first uncovered point: {missing})")


def evaluate_covering(inst: CoveringInstance) -> CoveringReport:
    """Exact C/T split, omitted count, and verdict for one instance."""
    _validate_instance(inst)
    q_num, q_den = inst.q.numerator, inst.q.denominator
    inclusion = []
    C: list[Interval] = []
    T: list[Interval] = []
    fT_in_I = 0
    for J in inst.Js:
        hit = _image_in_interval_count(inst.f, J, inst.I)
        inclusion.append(Fraction(hit, J.size))
        if hit * q_den >= q_num * J.size:
            C.append(J)
        else:
            T.append(J)
            fT_in_I += hit  # f is 1-1 and Js disjoint, so per-J counts add up
    size_i = inst.I.size
    holds = fT_in_I * inst.r.denominator < inst.r.numerator * size_i
    return CoveringReport(
        inclusion=tuple(inclusion),
        C=tuple(C),
        T_union=IntervalUnion.from_intervals(T),
        fT_in_I=fT_in_I,
        omission=Fraction(fT_in_I, size_i),
        condition_holds=holds,
    )


def boundary_loss_bound(interval: Interval, m: Fraction) -> Fraction:
    """(m-1)(b+a): a bound on the elements an m-interval tiling misses at
    the two edges of the interval it covers."""
    m = _require_ratio_above_1(m)
    return (m - 1) * (interval.b + interval.a)


# --------------------------------------------------------------------------
# covering construction for the shuffle
# --------------------------------------------------------------------------

class ConstructionError(ValueError):
    pass


@dataclass(frozen=True)
class ComponentReport:
    component: Interval
    mu: Fraction
    discarded: bool
    tiles: int
    omitted: int


@dataclass(frozen=True)
class ShCoveringReport:
    p_prime: Fraction
    m: Fraction
    components: tuple[ComponentReport, ...]
    preimage_size: int
    covered_size: int
    omitted_total: int
    omission_budget: Fraction  # r * ((p-1)/p) * b, the guaranteed bound


def _largest_unit_fraction_m(p_prime: Fraction, r: Fraction) -> Fraction:
    """Largest m = 1 + 1/t with m - 1 < ((p'-1)/(p'+1)) * r/3 and m^3 <= p'."""
    bound = Fraction(p_prime - 1, p_prime + 1) * r / 3
    t_linear = bound.denominator // bound.numerator + 1  # smallest t with 1/t < bound
    lo, hi = 1, 1
    while (1 + Fraction(1, hi)) ** 3 > p_prime:
        hi *= 2
    lo = max(1, hi // 2)
    while lo < hi:
        mid = (lo + hi) // 2
        if (1 + Fraction(1, mid)) ** 3 <= p_prime:
            hi = mid
        else:
            lo = mid + 1
    return 1 + Fraction(1, max(t_linear, lo))


def construct_covering_sh(I: Interval, p: Fraction, r: Fraction,
                          ) -> tuple[list[Interval], Fraction, ShCoveringReport]:
    """Cover the shuffle preimage of I with m-intervals, omission under r*|I|.

    Components of the preimage with width ratio at most
    p' = 1 + ((p-1)/p) * r/9 are discarded outright (they are provably
    small); the rest are tiled with the largest grid ratio m = 1 + 1/t
    satisfying m - 1 < ((p'-1)/(p'+1)) * r/3 and m^3 <= p' (both decided in
    exact rationals), keeping only tiles that fit inside their component.
    """
    from .maps import sh_preimage_interval

    p = _require_ratio_above_1(p, "p")
    r = Fraction(r)
    if not 0 < r < 1:
        raise ConstructionError(f"r must lie in (0, 1), got {r}")
    if not is_plus_m_interval(I, p):
        raise ConstructionError(f"I={I} is not a +p-interval for p={p}")
    threshold = 6 / ((p - 1) * r)
    if I.a * threshold.denominator <= threshold.numerator:
        raise ConstructionError(
            f"left endpoint {I.a} too small: need a > 6/((p-1)r) = {threshold}")

    p_prime = 1 + Fraction(p - 1, 9 * p) * r
    m = _largest_unit_fraction_m(p_prime, r)

    preimage = sh_preimage_interval(I)
    tiles: list[Interval] = []
    comp_reports: list[ComponentReport] = []
    covered = 0
    for comp in preimage.parts:
        comp_mu = mu(comp)
        if comp_mu <= p_prime:
            comp_reports.append(ComponentReport(comp, comp_mu, True, 0, comp.size))
            continue
        inside = [t for t in tile_m_intervals(comp.a, comp.b, m) if t.b <= comp.b]
        kept = sum(t.size for t in inside)
        comp_reports.append(
            ComponentReport(comp, comp_mu, False, len(inside), comp.size - kept))
        tiles.extend(inside)
        covered += kept

    omitted = preimage.size - covered
    budget = r * Fraction(p - 1, p) * I.b
    if omitted * budget.denominator >= budget.numerator:
        raise ConstructionError(
            f"internal: omitted {omitted} is not below the budget {budget}")
    report = ShCoveringReport(
        p_prime=p_prime, m=m, components=tuple(comp_reports),
        preimage_size=preimage.size, covered_size=covered,
        omitted_total=omitted, omission_budget=budget,
    )
    return tiles, m, report


# --------------------------------------------------------------------------
# violation witnesses and bounded search
# --------------------------------------------------------------------------

SHINV_WITNESS_P = Fraction(7, 5)


def witness_shinv(i: int, m: Fraction, q: Fraction,
                  r: Fraction = Fraction(1, 2)) -> CoveringInstance:
    """Half-block violation witness for the inverse shuffle.

    I is the lower half of the dyadic block at exponent i, and the Js tile
    the whole block.  The inverse shuffle sends roughly half of every tile
    (its evens) into I, so no tile reaches an inclusion fraction of q > 1/2
    and the entire interval I is covered by images of discarded tiles.
    The constructed instance is self-checked; if it fails to violate the
    condition (for instance with q <= 1/2), WitnessError is raised.
    """
    from .maps import ShuffleInverseMap

    if i < 4:
        raise ValueError(f"block exponent must be >= 4, got {i}")
    m = _require_ratio_above_1(m)
    if m > 2:
        raise ValueError(f"m must lie in (1, 2], got {m}")
    q = Fraction(q)
    if not 0 < q < 1:
        raise ValueError(f"q must lie in (0, 1), got {q}")
    r = Fraction(r)
    if not 0 < r < 1:
        raise ValueError(f"r must lie in (0, 1), got {r}")

    base = 1 << i
    interval = Interval(base, 3 * (base >> 1) - 1)
    tiles = tuple(tile_m_intervals(base, 2 * base - 1, m))
    if min(t.size for t in tiles) < 4:
        raise ValueError(
            f"2^{i} is too small for m={m}: some tile has fewer than 4 elements")
    inst = CoveringInstance(
        f=ShuffleInverseMap(), I=interval, Js=tiles,
        q=q, r=r, m=m, p=SHINV_WITNESS_P,
    )
    report = evaluate_covering(inst)
    if report.condition_holds:
        raise WitnessError(
            f"not a violation at i={i}, m={m}, q={q}: "
            f"omission {report.omission} is below r={r}")
    return inst


def _candidate_intervals(i: int, p: Fraction) -> Iterator[Interval]:
    """Ordered candidates anchored at block exponent i: the whole block,
    the half blocks, then minimal widenings of three anchors."""
    base = 1 << i
    mid = base + (base >> 1)
    block = Interval(base, 2 * base - 1)
    yield block
    yield Interval(base, mid - 1)
    yield Interval(mid, 2 * base - 1)
    for anchor in (base, base + (base >> 2), mid):
        b = (p.numerator * anchor) // p.denominator + 1
        yield Interval(anchor, b)


def _preimage_span(f: Map1to1, I: Interval) -> Optional[Interval]:
    structured = f.preimage_of_interval(I)
    if structured is not None:
        return structured.span()
    reach = f.reach_bound(I.b)
    if reach is None:
        raise ValueError(
            f"map {f.name!r} has no structured preimage and no reach bound; "
            "it cannot drive the canonical covering search")
    domain = np.arange(1, reach + 1, dtype=np.int64)
    values = f.apply_array(domain)
    hits = domain[(values >= I.a) & (values <= I.b)]
    if hits.size == 0:
        return None
    return Interval(int(hits[0]), int(hits[-1]))


def _canonical_instance(f: Map1to1, I: Interval, p: Fraction, q: Fraction,
                        r: Fraction, m: Fraction) -> Optional[CoveringInstance]:
    """Tile the preimage span and keep tiles whose images touch I; None when
    the resulting family does not cover I."""
    span = _preimage_span(f, I)
    if span is None:
        return None
    kept = [J for J in tile_m_intervals(span.a, span.b, m)
            if _image_in_interval_count(f, J, I) > 0]
    if not kept:
        return None
    inst = CoveringInstance(f=f, I=I, Js=tuple(kept), q=q, r=r, m=m, p=p)
    try:
        _validate_instance(inst)
    except InstanceError:
        return None
    return inst


def search_violation(f: Map1to1, p: Fraction, q: Fraction, r: Fraction,
                     m: Fraction, N: int, budget: int,
                     threads: int = 1) -> Optional[CoveringInstance]:
    """Bounded falsifier for the covering condition.

    Enumerates dyadic-anchored candidate intervals past N in a fixed order,
    forms the canonical covering for each, and returns the first instance
    whose evaluation fails the condition.  ``None`` means no violation was
    found within the budget, not that none exists.
    """
    p = _require_ratio_above_1(p, "p")
    m = _require_ratio_above_1(m)
    as_nat(budget, "budget")
    candidates: list[Interval] = []
    i = max(2, N.bit_length())
    while len(candidates) < budget:
        for cand in _candidate_intervals(i, p):
            if cand.a > N and is_plus_m_interval(cand, p):
                candidates.append(cand)
                if len(candidates) == budget:
                    break
        i += 1

    def probe(cand: Interval) -> Optional[CoveringInstance]:
        inst = _canonical_instance(f, cand, p, q, r, m)
        if inst is None:
            return None
        if not evaluate_covering(inst).condition_holds:
            return inst
        return None

    if threads <= 1:
        for cand in candidates:
            found = probe(cand)
            if found is not None:
                return found
        return None
    # deterministic under parallelism: evaluate in chunks, keep the first hit
    chunk = max(1, threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for start in range(0, len(candidates), chunk):
            batch = candidates[start:start + chunk]
            for result in pool.map(probe, batch):
                if result is not None:
                    return result
    return None


# --------------------------------------------------------------------------
# instance files
# --------------------------------------------------------------------------

def instance_to_dict(inst: CoveringInstance) -> dict:
    return {
        "map": inst.f.name,
        "p": format_rational(inst.p),
        "q": format_rational(inst.q),
        "r": format_rational(inst.r),
        "m": format_rational(inst.m),
        "I": [inst.I.a, inst.I.b],
        "Js": [[J.a, J.b] for J in inst.Js],
    }


def instance_from_dict(data: dict, map_loader=None) -> CoveringInstance:
    try:
        name = data["map"]
        if map_loader is not None:
            f = map_loader(name)
        elif name.startswith("dsl:"):
            from .fndsl import load_map

            f = load_map(name.split(":", 1)[1])
        else:
            f = get_map(name)
        return CoveringInstance(
            f=f,
            I=Interval(int(data["I"][0]), int(data["I"][1])),
            Js=tuple(Interval(int(a), int(b)) for a, b in data["Js"]),
            q=parse_rational(str(data["q"])),
            r=parse_rational(str(data["r"])),
            m=parse_rational(str(data["m"])),
            p=parse_rational(str(data["p"])),
        )
    except (KeyError, IndexError, TypeError) as exc:
        raise InstanceError(f"malformed instance object: {exc}") from exc


def load_instance(path) -> CoveringInstance:
    with open(path, "r", encoding="utf-8") as fh:
        return instance_from_dict(json.load(fh))


def save_instance(inst: CoveringInstance, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(instance_to_dict(inst), fh, indent=2)
        fh.write("\n")
