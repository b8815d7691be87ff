"""Circuit vulnerability assessment against correlating network observers.

A circuit (src, entry, exit, dst) is vulnerable when some colluder class
can observe both legs: the class appears among the ASes of the
bidirectional path set between client and entry relay and among those of
the bidirectional path set between exit relay and destination. Endpoint
ASes count as on-path observers; in particular the client's own AS
appearing on the exit leg marks the circuit vulnerable.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

from .routing import (DEFAULT_CACHE_CAPACITY, DEFAULT_ENUMERATE_CAP,
                      RoutingTreeCache, bidirectional_path_set,
                      enumerate_paths)
from .topology import (UNKNOWN_COUNTRY, AdversaryMode, AsGraph, ClassKey,
                       CountryMap, OrgMap, colluder_class)


@dataclass(frozen=True)
class ThreatConfig:
    """Assessment options.

    exclude_src_dst_ases drops the client and destination ASes from the
    observer sets (sensitivity analysis only; by default they count).
    state_country, when set, restricts state-level assessment to that one
    country instead of treating every country as a candidate attacker.
    """

    exclude_src_dst_ases: bool = False
    state_country: str | None = None


@dataclass(frozen=True)
class CircuitSpec:
    """Client AS, entry-relay AS, exit-relay AS, destination AS."""

    src: int
    entry: int
    exit: int
    dst: int


@dataclass(frozen=True)
class ThreatAssessment:
    vulnerable: bool
    attackers: frozenset = frozenset()
    assessable: bool = True

    def __post_init__(self):
        if self.vulnerable and not self.attackers:
            raise ValueError("vulnerable assessment requires attackers")
        if not self.assessable and self.attackers:
            raise ValueError("unassessable assessment cannot name attackers")


UNASSESSABLE = ThreatAssessment(vulnerable=False, attackers=frozenset(),
                                assessable=False)


@dataclass
class ThreatContext:
    """Immutable topology inputs plus the shared routing-tree cache."""

    graph: AsGraph
    org: OrgMap
    cc: CountryMap
    cache: RoutingTreeCache
    cfg: ThreatConfig = field(default_factory=ThreatConfig)

    @classmethod
    def build(cls, graph: AsGraph, org: OrgMap | None = None,
              cc: CountryMap | None = None, cfg: ThreatConfig | None = None,
              cache_capacity: int = DEFAULT_CACHE_CAPACITY) -> "ThreatContext":
        return cls(graph=graph,
                   org=org if org is not None else OrgMap(),
                   cc=cc if cc is not None else CountryMap(),
                   cache=RoutingTreeCache(graph, cache_capacity),
                   cfg=cfg if cfg is not None else ThreatConfig())

    def with_cfg(self, cfg: ThreatConfig) -> "ThreatContext":
        return replace(self, cfg=cfg)


def _ases_to_classes(ctx: ThreatContext, ases: frozenset, mode: AdversaryMode,
                     drop: frozenset) -> frozenset:
    if drop:
        ases = ases - drop
    classes = {colluder_class(a, mode, ctx.org, ctx.cc) for a in ases}
    if mode is AdversaryMode.STATE:
        # Unknown countries never collide: no phantom adversaries.
        classes.discard(UNKNOWN_COUNTRY)
    return frozenset(classes)


def leg_observer_classes(ctx: ThreatContext, a: int, b: int,
                         mode: AdversaryMode,
                         drop: frozenset = frozenset()) -> frozenset | None:
    """Colluder classes observing the bidirectional leg between a and b.

    Returns None when the leg is unreachable in both directions, which
    makes any circuit using it unassessable.
    """
    ases = bidirectional_path_set(ctx.cache, a, b)
    if not ases:
        return None
    return _ases_to_classes(ctx, ases, mode, drop)


def combine_leg_classes(ctx: ThreatContext, entry_classes: frozenset,
                        exit_classes: frozenset,
                        mode: AdversaryMode) -> frozenset:
    """Attacker classes present on both legs, honoring the state filter."""
    attackers = entry_classes & exit_classes
    if mode is AdversaryMode.STATE and ctx.cfg.state_country is not None:
        attackers &= {ctx.cfg.state_country}
    return attackers


def _drop_set(ctx: ThreatContext, src: int, dst: int) -> frozenset:
    if ctx.cfg.exclude_src_dst_ases:
        return frozenset((src, dst))
    return frozenset()


def assess(ctx: ThreatContext, circuit: CircuitSpec,
           mode: AdversaryMode) -> ThreatAssessment:
    """Assess one circuit. Unreachable legs yield assessable=False."""
    for asn in (circuit.src, circuit.entry, circuit.exit, circuit.dst):
        if asn not in ctx.graph:
            raise ValueError(f"circuit AS {asn} not in graph")
    drop = _drop_set(ctx, circuit.src, circuit.dst)
    entry_classes = leg_observer_classes(ctx, circuit.src, circuit.entry,
                                         mode, drop)
    exit_classes = leg_observer_classes(ctx, circuit.exit, circuit.dst,
                                        mode, drop)
    if entry_classes is None or exit_classes is None:
        return UNASSESSABLE
    attackers = combine_leg_classes(ctx, entry_classes, exit_classes, mode)
    return ThreatAssessment(vulnerable=bool(attackers),
                            attackers=frozenset(attackers))


class PairVerdict(Enum):
    SAFE = "safe"
    VULNERABLE = "vulnerable"
    UNASSESSABLE = "unassessable"
    EXCLUDED = "excluded"


@dataclass(frozen=True)
class AttackerFreeResult:
    """Grid assessment over candidate entry and exit ASes.

    fraction is safe/assessable, or None when no pair is assessable
    (undefined, never reported as zero). assessments is indexed
    [entry index][exit index]; excluded pairs hold None.
    """

    fraction: float | None
    safe_count: int
    assessable_count: int
    entries: tuple[int, ...]
    exits: tuple[int, ...]
    assessments: tuple[tuple[ThreatAssessment | None, ...], ...]

    def verdict(self, i: int, j: int) -> PairVerdict:
        a = self.assessments[i][j]
        if a is None:
            return PairVerdict.EXCLUDED
        if not a.assessable:
            return PairVerdict.UNASSESSABLE
        return PairVerdict.VULNERABLE if a.vulnerable else PairVerdict.SAFE


def attacker_free_fraction(ctx: ThreatContext, src: int, dst: int,
                           entries: Sequence[int], exits: Sequence[int],
                           mode: AdversaryMode,
                           exclude_same_as_pairs: bool = False) -> AttackerFreeResult:
    """Fraction of attacker-free (entry, exit) options for one src/dst pair.

    Legs are assessed once per distinct entry or exit AS, then combined
    over the full grid. Pairs with entry AS equal to exit AS are included
    unless the caller excludes them.
    """
    if not entries or not exits:
        raise ValueError("entry and exit candidate lists must be nonempty")
    drop = _drop_set(ctx, src, dst)
    entry_classes = {asn: leg_observer_classes(ctx, src, asn, mode, drop)
                     for asn in set(entries)}
    exit_classes = {asn: leg_observer_classes(ctx, asn, dst, mode, drop)
                    for asn in set(exits)}
    rows = []
    safe = 0
    assessable = 0
    for en in entries:
        row: list[ThreatAssessment | None] = []
        for ex in exits:
            if exclude_same_as_pairs and en == ex:
                row.append(None)
                continue
            c1 = entry_classes[en]
            c2 = exit_classes[ex]
            if c1 is None or c2 is None:
                row.append(UNASSESSABLE)
                continue
            attackers = combine_leg_classes(ctx, c1, c2, mode)
            assessable += 1
            if attackers:
                row.append(ThreatAssessment(True, frozenset(attackers)))
            else:
                safe += 1
                row.append(ThreatAssessment(False))
        rows.append(tuple(row))
    fraction = safe / assessable if assessable else None
    return AttackerFreeResult(fraction=fraction, safe_count=safe,
                              assessable_count=assessable,
                              entries=tuple(entries), exits=tuple(exits),
                              assessments=tuple(rows))


def _leg_concrete_paths(ctx: ThreatContext, a: int, b: int,
                        cap: int) -> tuple[list[tuple[int, ...]], bool]:
    """Distinct best paths of a leg, merged over both directions.

    Paths are canonicalized as undirected AS sequences so a route and its
    exact reverse count once.
    """
    forward, trunc_f = enumerate_paths(ctx.cache.tree(b), a, cap)
    reverse, trunc_r = enumerate_paths(ctx.cache.tree(a), b, cap)
    seen = set()
    merged = []
    for path in map(tuple, forward + reverse):
        canon = min(path, path[::-1])
        if canon not in seen:
            seen.add(canon)
            merged.append(canon)
    return sorted(merged), trunc_f or trunc_r


def vulnerable_path_fraction(ctx: ThreatContext, circuit: CircuitSpec,
                             mode: AdversaryMode,
                             cap: int = DEFAULT_ENUMERATE_CAP) -> tuple[float, bool]:
    """Fraction of concrete path pairs of a vulnerable circuit that intersect.

    Each pair combines one forward-or-reverse path per leg; both legs'
    enumerations are capped, and the returned flag reports truncation.
    Raises ValueError unless the circuit assesses as vulnerable.
    """
    base = assess(ctx, circuit, mode)
    if not base.assessable:
        raise ValueError("circuit has an unreachable leg; fraction undefined")
    if not base.vulnerable:
        raise ValueError("circuit is not vulnerable; fraction undefined")
    drop = _drop_set(ctx, circuit.src, circuit.dst)
    leg1, trunc1 = _leg_concrete_paths(ctx, circuit.src, circuit.entry, cap)
    leg2, trunc2 = _leg_concrete_paths(ctx, circuit.exit, circuit.dst, cap)
    # Pairs with identical class sets share a verdict; count by multiplicity.
    counts1 = Counter(_ases_to_classes(ctx, frozenset(p), mode, drop)
                      for p in leg1)
    counts2 = Counter(_ases_to_classes(ctx, frozenset(p), mode, drop)
                      for p in leg2)
    total = len(leg1) * len(leg2)
    vulnerable = 0
    for c1, n1 in counts1.items():
        for c2, n2 in counts2.items():
            if combine_leg_classes(ctx, c1, c2, mode):
                vulnerable += n1 * n2
    return vulnerable / total, trunc1 or trunc2
