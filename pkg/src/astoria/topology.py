"""AS-level topology: relationship graph, sibling organizations, country map.

The graph follows the two-kind relationship convention used by public
AS-relationship datasets: ``provider|customer|-1`` for (directed)
customer-provider edges and ``peer|peer|0`` for settlement-free peering.
Sibling organizations and AS country assignments are loaded from separate
pipe-delimited files. All structures are immutable after load and safe for
unsynchronized concurrent reads.
"""

from __future__ import annotations

import enum
import re
from typing import IO, Iterable, Iterator, Mapping, Union

MAX_ASN = 2**32 - 1

#: Reserved country code for ASes with no known country. Never treated as a
#: match when intersecting state-level adversary classes.
UNKNOWN_COUNTRY = "ZZ"

_COUNTRY_RE = re.compile(r"^[A-Z]{2}$")

#: A colluder-class key: the ASN itself, an organization label, or a country
#: code depending on the adversary mode.
ClassKey = Union[int, str]


class ParseError(ValueError):
    """An input file does not match its expected format."""

    def __init__(self, message: str, *, source: str | None = None,
                 line: int | None = None):
        self.source = source
        self.line = line
        prefix = ""
        if source is not None:
            prefix += f"{source}: "
        if line is not None:
            prefix += f"line {line}: "
        super().__init__(prefix + message)


class AdversaryMode(enum.Enum):
    """Granularity at which on-path ASes are assumed to collude."""

    SINGLE_AS = "single-as"
    SIBLING = "sibling"
    STATE = "state"


class RelKind(enum.Enum):
    PROVIDER_CUSTOMER = -1
    PEER_PEER = 0


def _iter_text_lines(reader: Union[IO, Iterable]) -> Iterator[str]:
    for raw in reader:
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        yield raw


def _parse_asn(token: str, source: str | None, lineno: int) -> int:
    try:
        value = int(token)
    except ValueError:
        raise ParseError(f"invalid AS number {token!r}",
                         source=source, line=lineno) from None
    if not 1 <= value <= MAX_ASN:
        raise ParseError(f"AS number {value} out of range",
                         source=source, line=lineno)
    return value


class AsGraph:
    """Immutable AS graph with customer-provider and peer-peer edges.

    At most one relationship may exist per unordered AS pair, and
    self-loops are rejected. Adjacency queries return sorted tuples so
    that every traversal of the graph is deterministic.
    """

    __slots__ = ("_providers", "_customers", "_peers", "_nodes", "_num_edges")

    def __init__(self, edges: Iterable[tuple[int, int, RelKind]]):
        providers: dict[int, list[int]] = {}
        customers: dict[int, list[int]] = {}
        peers: dict[int, list[int]] = {}
        nodes: set[int] = set()
        seen: dict[frozenset, tuple] = {}
        num_edges = 0
        for a, b, kind in edges:
            if a == b:
                raise ValueError(f"self-loop edge on AS {a}")
            if not (1 <= a <= MAX_ASN and 1 <= b <= MAX_ASN):
                raise ValueError(f"AS number out of range in edge {a}-{b}")
            if kind is RelKind.PEER_PEER:
                canon = (RelKind.PEER_PEER, None)
            else:
                canon = (RelKind.PROVIDER_CUSTOMER, a)
            key = frozenset((a, b))
            if key in seen:
                if seen[key] != canon:
                    raise ValueError(
                        f"contradictory relationship for AS pair {a}-{b}")
                continue
            seen[key] = canon
            num_edges += 1
            nodes.add(a)
            nodes.add(b)
            if kind is RelKind.PEER_PEER:
                peers.setdefault(a, []).append(b)
                peers.setdefault(b, []).append(a)
            else:
                customers.setdefault(a, []).append(b)
                providers.setdefault(b, []).append(a)
        self._providers = {u: tuple(sorted(v)) for u, v in providers.items()}
        self._customers = {u: tuple(sorted(v)) for u, v in customers.items()}
        self._peers = {u: tuple(sorted(v)) for u, v in peers.items()}
        self._nodes = frozenset(nodes)
        self._num_edges = num_edges

    @property
    def nodes(self) -> frozenset:
        return self._nodes

    @property
    def num_nodes(self) -> int:
        return len(self._nodes)

    @property
    def num_edges(self) -> int:
        return self._num_edges

    def __contains__(self, asn: int) -> bool:
        return asn in self._nodes

    def providers(self, asn: int) -> tuple[int, ...]:
        return self._providers.get(asn, ())

    def customers(self, asn: int) -> tuple[int, ...]:
        return self._customers.get(asn, ())

    def peers(self, asn: int) -> tuple[int, ...]:
        return self._peers.get(asn, ())

    def degree(self, asn: int) -> int:
        return (len(self.providers(asn)) + len(self.customers(asn))
                + len(self.peers(asn)))

    def relationship(self, a: int, b: int) -> RelKind | None:
        """Relationship on the unordered pair {a, b}, or None if absent."""
        if b in self._peers.get(a, ()):
            return RelKind.PEER_PEER
        if b in self._customers.get(a, ()) or b in self._providers.get(a, ()):
            return RelKind.PROVIDER_CUSTOMER
        return None

    def edges(self) -> Iterator[tuple[int, int, RelKind]]:
        """Canonical edge listing: (provider, customer, -1) and (a, b, 0) with a < b."""
        for u in sorted(self._customers):
            for v in self._customers[u]:
                yield u, v, RelKind.PROVIDER_CUSTOMER
        for u in sorted(self._peers):
            for v in self._peers[u]:
                if u < v:
                    yield u, v, RelKind.PEER_PEER

    def __eq__(self, other) -> bool:
        if not isinstance(other, AsGraph):
            return NotImplemented
        return (self._nodes == other._nodes
                and self._customers == other._customers
                and self._peers == other._peers)

    def __repr__(self) -> str:
        return f"AsGraph(nodes={self.num_nodes}, edges={self.num_edges})"


def load_topology(reader: Union[IO, Iterable], source: str | None = None) -> AsGraph:
    """Load an AS graph from ``<asn>|<asn>|<rel>`` relationship lines.

    ``rel`` is -1 (first field is provider of second) or 0 (peers).
    Lines starting with ``#`` and blank lines are ignored; duplicate
    identical lines are tolerated. Contradictory relationships for the
    same pair and self-loops are errors.
    """
    edges: list[tuple[int, int, RelKind]] = []
    seen: dict[frozenset, tuple] = {}
    for lineno, raw in enumerate(_iter_text_lines(reader), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("|")
        if len(parts) != 3:
            raise ParseError(f"expected 3 '|'-separated fields, got {len(parts)}",
                             source=source, line=lineno)
        a = _parse_asn(parts[0], source, lineno)
        b = _parse_asn(parts[1], source, lineno)
        rel = parts[2].strip()
        if rel == "-1":
            kind = RelKind.PROVIDER_CUSTOMER
            canon = (kind, a)
        elif rel == "0":
            kind = RelKind.PEER_PEER
            canon = (kind, None)
        else:
            raise ParseError(f"relationship must be -1 or 0, got {rel!r}",
                             source=source, line=lineno)
        if a == b:
            raise ParseError(f"self-loop edge on AS {a}", source=source, line=lineno)
        key = frozenset((a, b))
        if key in seen:
            if seen[key] != canon:
                raise ParseError(
                    f"contradictory relationship for AS pair {a}-{b}",
                    source=source, line=lineno)
            continue
        seen[key] = canon
        edges.append((a, b, kind))
    return AsGraph(edges)


def dump_topology(graph: AsGraph, writer: IO) -> None:
    """Write the graph in the relationship-line format accepted by load_topology."""
    for a, b, kind in graph.edges():
        writer.write(f"{a}|{b}|{kind.value}\n")


class OrgMap:
    """AS to owning-organization mapping.

    ASes without an explicit entry form singleton organizations keyed by
    their own AS number, which can never collide with an organization
    label string.
    """

    __slots__ = ("_org_of",)

    def __init__(self, org_of: Mapping[int, str] | None = None):
        self._org_of = dict(org_of or {})

    def org_of(self, asn: int) -> ClassKey:
        return self._org_of.get(asn, asn)

    def __len__(self) -> int:
        return len(self._org_of)

    def __eq__(self, other) -> bool:
        if not isinstance(other, OrgMap):
            return NotImplemented
        return self._org_of == other._org_of


class CountryMap:
    """AS to ISO 3166-1 alpha-2 country mapping; unmapped ASes yield "ZZ"."""

    __slots__ = ("_country_of",)

    def __init__(self, country_of: Mapping[int, str] | None = None):
        mapping = dict(country_of or {})
        for asn, code in mapping.items():
            if not _COUNTRY_RE.match(code):
                raise ValueError(f"invalid country code {code!r} for AS {asn}")
        self._country_of = mapping

    def country_of(self, asn: int) -> str:
        return self._country_of.get(asn, UNKNOWN_COUNTRY)

    def __len__(self) -> int:
        return len(self._country_of)

    def __eq__(self, other) -> bool:
        if not isinstance(other, CountryMap):
            return NotImplemented
        return self._country_of == other._country_of


def load_siblings(reader: Union[IO, Iterable], source: str | None = None) -> OrgMap:
    """Load ``org|asn`` sibling lines. Conflicting assignments are errors."""
    org_of: dict[int, str] = {}
    for lineno, raw in enumerate(_iter_text_lines(reader), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("|")
        if len(parts) != 2:
            raise ParseError(f"expected 'org|asn', got {line!r}",
                             source=source, line=lineno)
        org = parts[0].strip()
        if not org:
            raise ParseError("empty organization label", source=source, line=lineno)
        asn = _parse_asn(parts[1], source, lineno)
        if asn in org_of and org_of[asn] != org:
            raise ParseError(
                f"conflicting organization for AS {asn}: "
                f"{org_of[asn]!r} vs {org!r}", source=source, line=lineno)
        org_of[asn] = org
    return OrgMap(org_of)


def load_countries(reader: Union[IO, Iterable], source: str | None = None) -> CountryMap:
    """Load ``asn|CC`` country lines. Codes must be two uppercase letters."""
    country_of: dict[int, str] = {}
    for lineno, raw in enumerate(_iter_text_lines(reader), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("|")
        if len(parts) != 2:
            raise ParseError(f"expected 'asn|CC', got {line!r}",
                             source=source, line=lineno)
        asn = _parse_asn(parts[0], source, lineno)
        code = parts[1].strip()
        if not _COUNTRY_RE.match(code):
            raise ParseError(f"invalid country code {code!r}",
                             source=source, line=lineno)
        if asn in country_of and country_of[asn] != code:
            raise ParseError(f"conflicting country for AS {asn}",
                             source=source, line=lineno)
        country_of[asn] = code
    return CountryMap(country_of)


def colluder_class(asn: int, mode: AdversaryMode, org: OrgMap,
                   cc: CountryMap) -> ClassKey:
    """Collusion-class key of an AS under the given adversary mode.

    Two ASes collude iff their keys are equal, except that the reserved
    "ZZ" country class must never be treated as a match by callers
    (an unknown country must not create phantom adversaries).
    """
    if mode is AdversaryMode.SINGLE_AS:
        return asn
    if mode is AdversaryMode.SIBLING:
        return org.org_of(asn)
    if mode is AdversaryMode.STATE:
        return cc.country_of(asn)
    raise ValueError(f"unknown adversary mode: {mode!r}")
