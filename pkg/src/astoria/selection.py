"""Relay directory model and circuit selection strategies.

Four strategies are provided: the stock bandwidth-weighted selector, a
uniform selector, the AS-aware selector (safe bandwidth-weighted choice
with a minimax-LP fallback), and the hypothetical perfectly load-balanced
selector used as a reference in load reports. Circuits respect the usual
constraints: no two relays on a circuit may share a /16 prefix or a
declared family, and all three relays are distinct.
"""

from __future__ import annotations

import csv
import enum
import random
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence, Union

from .lp import SelectionProblem, solve_minimax
from .threat import ThreatContext, combine_leg_classes, leg_observer_classes
from .topology import AdversaryMode, ClassKey, ParseError, _parse_asn

PROVENANCE_BW = "D_bw"
PROVENANCE_LP = "D_lp"


class SelectionError(RuntimeError):
    """Relay selection could not satisfy its constraints."""


class Flag(enum.Enum):
    GUARD = "Guard"
    EXIT = "Exit"
    FAST = "Fast"
    STABLE = "Stable"


@dataclass(frozen=True)
class Relay:
    fingerprint: str
    asn: int
    bandwidth: float
    flags: frozenset = frozenset()
    net16: str = ""
    family: str | None = None

    def __post_init__(self):
        if self.bandwidth < 0:
            raise ValueError(f"relay {self.fingerprint}: negative bandwidth")

    def is_guard(self) -> bool:
        return Flag.GUARD in self.flags

    def is_exit(self) -> bool:
        return Flag.EXIT in self.flags


def conflicts(a: Relay, b: Relay) -> bool:
    """Whether two relays may not share a circuit."""
    if a.fingerprint == b.fingerprint:
        return True
    if a.net16 and a.net16 == b.net16:
        return True
    if a.family is not None and a.family == b.family:
        return True
    return False


class Consensus:
    """A relay directory snapshot."""

    def __init__(self, relays: Iterable[Relay], timestamp: str = ""):
        self.relays: tuple[Relay, ...] = tuple(relays)
        self.timestamp = timestamp
        if not self.relays:
            raise ValueError("consensus must contain at least one relay")
        self._by_fp = {r.fingerprint: r for r in self.relays}
        if len(self._by_fp) != len(self.relays):
            raise ValueError("duplicate relay fingerprints in consensus")

    def relay(self, fingerprint: str) -> Relay:
        return self._by_fp[fingerprint]

    def guard_relays(self) -> tuple[Relay, ...]:
        return tuple(r for r in self.relays if r.is_guard())

    def exit_relays(self) -> tuple[Relay, ...]:
        return tuple(r for r in self.relays if r.is_exit())

    def __len__(self) -> int:
        return len(self.relays)


def load_consensus(reader: Union[IO, Iterable], source: str | None = None) -> Consensus:
    """Load a consensus CSV: fingerprint,asn,bandwidth,flags,net16,family.

    Flags are semicolon-separated names from Guard/Exit/Fast/Stable; the
    family column may be empty.
    """
    rows = csv.reader(line.decode("utf-8") if isinstance(line, bytes) else line
                      for line in reader)
    relays = []
    header = None
    for lineno, row in enumerate(rows, start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if header is None:
            header = [col.strip() for col in row]
            expected = ["fingerprint", "asn", "bandwidth", "flags", "net16",
                        "family"]
            if header != expected:
                raise ParseError(f"expected header {','.join(expected)}",
                                 source=source, line=lineno)
            continue
        if len(row) != 6:
            raise ParseError(f"expected 6 columns, got {len(row)}",
                             source=source, line=lineno)
        fingerprint, asn_s, bw_s, flags_s, net16, family = (c.strip() for c in row)
        if not fingerprint:
            raise ParseError("empty fingerprint", source=source, line=lineno)
        asn = _parse_asn(asn_s, source, lineno)
        try:
            bandwidth = float(bw_s)
        except ValueError:
            raise ParseError(f"invalid bandwidth {bw_s!r}",
                             source=source, line=lineno) from None
        if bandwidth < 0:
            raise ParseError("bandwidth must be nonnegative",
                             source=source, line=lineno)
        flags = set()
        for name in filter(None, (f.strip() for f in flags_s.split(";"))):
            try:
                flags.add(Flag(name))
            except ValueError:
                raise ParseError(f"unknown flag {name!r}",
                                 source=source, line=lineno) from None
        relays.append(Relay(fingerprint=fingerprint, asn=asn,
                            bandwidth=bandwidth, flags=frozenset(flags),
                            net16=net16, family=family or None))
    if header is None:
        raise ParseError("missing header row", source=source, line=1)
    try:
        return Consensus(relays, timestamp=source or "")
    except ValueError as exc:
        raise ParseError(str(exc), source=source) from None


@dataclass(frozen=True)
class GuardSet:
    """Ordered set of 1-3 pinned entry relays."""

    fingerprints: tuple[str, ...]

    def __post_init__(self):
        if not 1 <= len(self.fingerprints) <= 3:
            raise ValueError("guard set must hold 1 to 3 relays")
        if len(set(self.fingerprints)) != len(self.fingerprints):
            raise ValueError("guard fingerprints must be distinct")

    def relays(self, consensus: Consensus) -> tuple[Relay, ...]:
        return tuple(consensus.relay(fp) for fp in self.fingerprints)


@dataclass(frozen=True)
class SelectionConfig:
    max_attempts: int = 100
    max_requests_per_circuit: int = 50
    #: Minimum safe-pair share required to trust the safe pairs at all;
    #: below it the LP path is used even when a few safe pairs exist.
    #: 0 disables the defense (choosing a threshold is an open problem).
    safe_threshold: float = 0.0


def _weighted_choice(relays: Sequence[Relay], rng: random.Random,
                     uniform: bool = False) -> Relay:
    if not relays:
        raise SelectionError("no candidate relays")
    if uniform:
        return relays[rng.randrange(len(relays))]
    weights = [r.bandwidth for r in relays]
    if not any(w > 0 for w in weights):
        raise SelectionError("all candidate relays have zero bandwidth")
    return rng.choices(relays, weights=weights, k=1)[0]


def _pick_with_rejection(relays: Sequence[Relay], rng: random.Random,
                         chosen: Sequence[Relay], max_attempts: int,
                         uniform: bool = False) -> Relay:
    for _ in range(max_attempts):
        candidate = _weighted_choice(relays, rng, uniform=uniform)
        if not any(conflicts(candidate, c) for c in chosen):
            return candidate
    raise SelectionError(
        f"could not satisfy circuit constraints after {max_attempts} attempts")


def choose_guards(consensus: Consensus, k: int, rng: random.Random) -> GuardSet:
    """Sample k guards, bandwidth-weighted without replacement.

    Candidates conflicting with already-chosen guards (shared /16 or
    family) are rejected. Deterministic for a fixed seed.
    """
    if not 1 <= k <= 3:
        raise ValueError("guard-set size must be between 1 and 3")
    chosen: list[Relay] = []
    for _ in range(k):
        eligible = [r for r in consensus.guard_relays()
                    if r.bandwidth > 0
                    and not any(conflicts(r, c) for c in chosen)]
        if not eligible:
            raise SelectionError(
                f"insufficient eligible guards for a set of {k}")
        chosen.append(_weighted_choice(eligible, rng))
    return GuardSet(tuple(r.fingerprint for r in chosen))


def vanilla_select(consensus: Consensus, guards: GuardSet, rng: random.Random,
                   cfg: SelectionConfig = SelectionConfig()) -> tuple[Relay, Relay, Relay]:
    """Stock strategy: every role bandwidth-weighted, entry from the guards."""
    entry = _weighted_choice(guards.relays(consensus), rng)
    exits = consensus.exit_relays()
    if not exits:
        raise SelectionError("consensus has no exit relays")
    exit_relay = _pick_with_rejection(exits, rng, [entry], cfg.max_attempts)
    middle = _pick_with_rejection(consensus.relays, rng, [entry, exit_relay],
                                  cfg.max_attempts)
    return entry, middle, exit_relay


def uniform_select(consensus: Consensus, rng: random.Random,
                   cfg: SelectionConfig = SelectionConfig()) -> tuple[Relay, Relay, Relay]:
    """Equal-weight strategy; role flags are still respected."""
    guards = consensus.guard_relays()
    if not guards:
        raise SelectionError("consensus has no guard relays")
    entry = _weighted_choice(guards, rng, uniform=True)
    exits = consensus.exit_relays()
    if not exits:
        raise SelectionError("consensus has no exit relays")
    exit_relay = _pick_with_rejection(exits, rng, [entry], cfg.max_attempts,
                                      uniform=True)
    middle = _pick_with_rejection(consensus.relays, rng, [entry, exit_relay],
                                  cfg.max_attempts, uniform=True)
    return entry, middle, exit_relay


@dataclass(frozen=True)
class _PairOption:
    entry: Relay
    exit: Relay
    attackers: frozenset


def _assess_pair_grid(ctx: ThreatContext, src: int, dst: int,
                      entries: Sequence[Relay], exits: Sequence[Relay],
                      mode: AdversaryMode) -> list[_PairOption | None]:
    """Per-pair attacker sets over conflict-free (entry, exit) combinations.

    Returns one element per surviving pair: a _PairOption when assessable,
    None when a leg is unreachable.
    """
    if src not in ctx.graph:
        raise ValueError(f"client AS {src} not in graph")
    if dst not in ctx.graph:
        raise ValueError(f"destination AS {dst} not in graph")
    drop = (frozenset((src, dst)) if ctx.cfg.exclude_src_dst_ases
            else frozenset())
    entry_classes = {asn: leg_observer_classes(ctx, src, asn, mode, drop)
                     for asn in {r.asn for r in entries}}
    exit_classes = {asn: leg_observer_classes(ctx, asn, dst, mode, drop)
                    for asn in {r.asn for r in exits}}
    grid: list[_PairOption | None] = []
    for en in entries:
        for ex in exits:
            if conflicts(en, ex):
                continue
            c1 = entry_classes[en.asn]
            c2 = exit_classes[ex.asn]
            if c1 is None or c2 is None:
                grid.append(None)
                continue
            attackers = combine_leg_classes(ctx, c1, c2, mode)
            grid.append(_PairOption(en, ex, frozenset(attackers)))
    return grid


def astoria_select(ctx: ThreatContext, consensus: Consensus, guards: GuardSet,
                   src: int, dst: int, mode: AdversaryMode, rng: random.Random,
                   cfg: SelectionConfig = SelectionConfig()
                   ) -> tuple[Relay, Relay, Relay, str]:
    """AS-aware strategy; returns (entry, middle, exit, provenance).

    Assesses every conflict-free (guard, exit) pair against the adversary
    mode. With safe pairs available (and above the optional threshold), a
    pair is drawn with probability proportional to the product of the two
    relays' bandwidths over the safe pairs; otherwise the minimax program
    over the vulnerable pairs supplies the distribution.
    """
    entries = guards.relays(consensus)
    exits = consensus.exit_relays()
    if not exits:
        raise SelectionError("consensus has no exit relays")
    grid = _assess_pair_grid(ctx, src, dst, entries, exits, mode)
    assessable = [p for p in grid if p is not None]
    if not assessable:
        raise SelectionError("no assessable entry-exit pairs")
    safe = [p for p in assessable if not p.attackers]

    below_threshold = (cfg.safe_threshold > 0
                       and len(safe) / len(assessable) < cfg.safe_threshold)
    if safe and not below_threshold:
        weights = [p.entry.bandwidth * p.exit.bandwidth for p in safe]
        if any(w > 0 for w in weights):
            pick = rng.choices(safe, weights=weights, k=1)[0]
        else:
            pick = safe[rng.randrange(len(safe))]
        assert not pick.attackers
        provenance = PROVENANCE_BW
    else:
        # Safe pairs below the threshold are discarded, not trusted.
        vulnerable = [p for p in assessable if p.attackers]
        if not vulnerable:
            raise SelectionError("threshold discarded every assessable pair")
        problem = SelectionProblem.from_attacker_sets(
            pairs=tuple((p.entry.fingerprint, p.exit.fingerprint)
                        for p in vulnerable),
            attacker_sets=tuple(p.attackers for p in vulnerable))
        dist = solve_minimax(problem)
        idx = rng.choices(range(len(vulnerable)), weights=dist.probs, k=1)[0]
        pick = vulnerable[idx]
        provenance = PROVENANCE_LP

    middle = _pick_with_rejection(consensus.relays, rng,
                                  [pick.entry, pick.exit], cfg.max_attempts)
    return pick.entry, middle, pick.exit, provenance


def perfect_balance_distribution(consensus: Consensus) -> dict[str, float]:
    """Per-relay traffic share of the ideal load-balancing client."""
    total = sum(r.bandwidth for r in consensus.relays)
    if total <= 0:
        raise ValueError("total consensus bandwidth is zero")
    return {r.fingerprint: r.bandwidth / total for r in consensus.relays}


@dataclass
class Circuit:
    entry: Relay
    middle: Relay
    exit: Relay
    dst_asn: int | None
    provenance: str
    created_at: int
    requests_served: int = 0


class CircuitPool:
    """Live circuits of one client, newest first for reuse decisions."""

    def __init__(self):
        self._circuits: list[Circuit] = []

    def insert(self, circuit: Circuit) -> None:
        relays = (circuit.entry, circuit.middle, circuit.exit)
        for i in range(3):
            for j in range(i + 1, 3):
                if conflicts(relays[i], relays[j]):
                    raise SelectionError(
                        "circuit violates relay distinctness constraints")
        self._circuits.append(circuit)

    def circuits(self) -> tuple[Circuit, ...]:
        return tuple(self._circuits)

    def __len__(self) -> int:
        return len(self._circuits)


class CircuitSelector:
    """Builds circuits for a pool; concrete strategies subclass this."""

    kind = "abstract"
    #: Destination-aware selectors bind circuits to a destination AS and
    #: reuse them only for that AS; others reuse any circuit under the
    #: per-circuit request cap.
    destination_aware = False

    def build(self, dst_asn: int) -> tuple[Relay, Relay, Relay, str]:
        raise NotImplementedError


class VanillaSelector(CircuitSelector):
    kind = "vanilla"

    def __init__(self, consensus: Consensus, guards: GuardSet,
                 rng: random.Random, cfg: SelectionConfig = SelectionConfig()):
        self.consensus = consensus
        self.guards = guards
        self.rng = rng
        self.cfg = cfg

    def build(self, dst_asn: int) -> tuple[Relay, Relay, Relay, str]:
        entry, middle, exit_relay = vanilla_select(
            self.consensus, self.guards, self.rng, self.cfg)
        return entry, middle, exit_relay, self.kind


class UniformSelector(CircuitSelector):
    kind = "uniform"

    def __init__(self, consensus: Consensus, rng: random.Random,
                 cfg: SelectionConfig = SelectionConfig()):
        self.consensus = consensus
        self.rng = rng
        self.cfg = cfg

    def build(self, dst_asn: int) -> tuple[Relay, Relay, Relay, str]:
        entry, middle, exit_relay = uniform_select(
            self.consensus, self.rng, self.cfg)
        return entry, middle, exit_relay, self.kind


class PerfectBalanceSelector(CircuitSelector):
    kind = "perfect-balance"

    def __init__(self, consensus: Consensus, rng: random.Random,
                 cfg: SelectionConfig = SelectionConfig()):
        self.consensus = consensus
        self.rng = rng
        self.cfg = cfg

    def build(self, dst_asn: int) -> tuple[Relay, Relay, Relay, str]:
        entry = _weighted_choice(self.consensus.relays, self.rng)
        exit_relay = _pick_with_rejection(self.consensus.relays, self.rng,
                                          [entry], self.cfg.max_attempts)
        middle = _pick_with_rejection(self.consensus.relays, self.rng,
                                      [entry, exit_relay], self.cfg.max_attempts)
        return entry, middle, exit_relay, self.kind


class AstoriaSelector(CircuitSelector):
    kind = "astoria"
    destination_aware = True

    def __init__(self, ctx: ThreatContext, consensus: Consensus,
                 guards: GuardSet, src: int, mode: AdversaryMode,
                 rng: random.Random, cfg: SelectionConfig = SelectionConfig()):
        self.ctx = ctx
        self.consensus = consensus
        self.guards = guards
        self.src = src
        self.mode = mode
        self.rng = rng
        self.cfg = cfg

    def build(self, dst_asn: int) -> tuple[Relay, Relay, Relay, str]:
        return astoria_select(self.ctx, self.consensus, self.guards,
                              self.src, dst_asn, self.mode, self.rng, self.cfg)


def get_or_build_circuit(pool: CircuitPool, selector: CircuitSelector,
                         dst_asn: int, event: int,
                         cfg: SelectionConfig = SelectionConfig()
                         ) -> tuple[Circuit, bool]:
    """Serve one request: reuse a live circuit if possible, else build.

    Destination-aware selectors reuse the most recently created circuit
    bound to the same destination AS; others reuse the most recent circuit
    still under the request cap.
    """
    for circuit in reversed(pool._circuits):
        if selector.destination_aware:
            if circuit.dst_asn == dst_asn:
                circuit.requests_served += 1
                return circuit, False
        elif circuit.requests_served < cfg.max_requests_per_circuit:
            circuit.requests_served += 1
            return circuit, False
    entry, middle, exit_relay, provenance = selector.build(dst_asn)
    circuit = Circuit(entry=entry, middle=middle, exit=exit_relay,
                      dst_asn=dst_asn if selector.destination_aware else None,
                      provenance=provenance, created_at=event,
                      requests_served=1)
    pool.insert(circuit)
    return circuit, True
