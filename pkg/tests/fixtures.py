"""Hand-built graphs, consensus snapshots, and file renderers for tests.

The expected values asserted against these fixtures were derived with the
brute-force oracles in oracles.py (see test_routing / test_threat) or by
hand on paper; keep the layouts small enough to re-check by eye.
"""

from __future__ import annotations

import io

from astoria.selection import Consensus, Flag, Relay
from astoria.topology import AsGraph, RelKind, load_topology

P2C = RelKind.PROVIDER_CUSTOMER
PEER = RelKind.PEER_PEER


def graph_from_edges(edges) -> AsGraph:
    return AsGraph((a, b, RelKind(rel)) for a, b, rel in edges)


def topology_text(edges) -> str:
    return "".join(f"{a}|{b}|{rel}\n" for a, b, rel in edges)


def graph_from_text(text: str) -> AsGraph:
    return load_topology(io.StringIO(text))


#: 1 is provider of 2, 2 is provider of 3; the only route from 1 to 3 walks
#: down the customer chain.
CHAIN3_EDGES = [(1, 2, -1), (2, 3, -1)]


def chain3() -> AsGraph:
    return graph_from_edges(CHAIN3_EDGES)


#: src 1 buys transit from 2 and 3, both buy from 4, and 4 is provider of
#: dest 5: two equal-preference equal-length routes, so both next hops stay.
DIAMOND_EDGES = [(2, 1, -1), (3, 1, -1), (4, 2, -1), (4, 3, -1), (4, 5, -1)]


def diamond() -> AsGraph:
    return graph_from_edges(DIAMOND_EDGES)


#: Forward and reverse routes between 1 and 2 disagree: 1 reaches 2 down its
#: customer chain through 3, while 2 prefers its peer 4 over climbing back
#: up through 3. Nodes 5-7 are stub customers that pad the graph.
ASYMMETRIC7_EDGES = [
    (1, 3, -1), (3, 2, -1),   # customer chain 1 > 3 > 2
    (4, 1, -1),               # 4 is provider of 1
    (2, 4, 0),                # 2 peers with 4
    (1, 5, -1), (3, 6, -1), (4, 7, -1),
]


def asymmetric7() -> AsGraph:
    return graph_from_edges(ASYMMETRIC7_EDGES)


#: Legs (1,2) and (3,4) transit different providers 5 and 6; the two
#: providers share an organization, so only colluding siblings see both.
SIBLING8_EDGES = [
    (5, 1, -1), (5, 2, -1),
    (6, 3, -1), (6, 4, -1),
    (5, 7, -1), (6, 8, -1),
]


def sibling8() -> AsGraph:
    return graph_from_edges(SIBLING8_EDGES)


#: Entry candidates 3, 4 and exit candidates 5, 6 for client 1 and
#: destination 2. Provider 7 carries both the (1,4) and (6,2) legs, so
#: exactly the pair (4, 6) is vulnerable: 3 of 4 pairs are attacker-free.
GRID9_EDGES = [
    (8, 1, -1), (8, 3, -1),
    (7, 1, -1), (7, 4, -1),
    (9, 2, -1), (9, 5, -1),
    (7, 2, -1), (7, 6, -1),
]


def grid9() -> AsGraph:
    return graph_from_edges(GRID9_EDGES)


#: Leg (1,2) has two tied routes, through 5 and through 6; leg (3,4) has a
#: single route through 5. Exactly one of the two concrete path pairs
#: shares an AS.
HALF_DIAMOND_EDGES = [
    (5, 1, -1), (5, 2, -1),
    (6, 1, -1), (6, 2, -1),
    (5, 3, -1), (5, 4, -1),
]


def half_diamond() -> AsGraph:
    return graph_from_edges(HALF_DIAMOND_EDGES)


# --- 30-AS selection fixture -------------------------------------------------
#
# Three transit providers peer with each other: 10, 20, and 50. The client
# AS 100 buys transit from 10 and 50. Entry-relay ASes 201/203 sit under
# 10 and 202 sits under 50; exit-relay ASes 301/303 sit under 20 and
# 302/304 under 50; destinations 401 (under 20) and 402 (under 50).
# Every (client, entry-AS) leg through 202 and every (exit-AS, dst) leg
# through 302/304 (or any exit leg toward 402) crosses AS 50, so 50 is the
# only AS ever on both legs. Middles 501-510 and stubs 601-607 pad the
# graph to exactly 30 ASes.

THIRTY_AS_EDGES = (
    [(10, 20, 0), (10, 50, 0), (20, 50, 0),
     (10, 100, -1), (50, 100, -1),
     (10, 201, -1), (50, 202, -1), (10, 203, -1),
     (20, 301, -1), (50, 302, -1), (20, 303, -1), (50, 304, -1),
     (20, 401, -1), (50, 402, -1)]
    + [(10 if i % 2 == 0 else 20, 500 + i, -1) for i in range(1, 11)]
    + [(20 if i % 2 == 0 else 50, 600 + i, -1) for i in range(1, 8)]
)

CLIENT_AS = 100
DST_SINGLE_LEG = 401   # only exits under 50 are tainted for this dst
DST_ALL_TAINTED = 402  # every exit leg crosses 50 for this dst


def thirty_as_graph() -> AsGraph:
    graph = graph_from_edges(THIRTY_AS_EDGES)
    assert graph.num_nodes == 30
    return graph


def _relay(fp, asn, bw, flags=(), net16=None, family=None) -> Relay:
    return Relay(fingerprint=fp, asn=asn, bandwidth=bw,
                 flags=frozenset(flags), net16=net16 or f"10.{asn % 250}",
                 family=family)


def thirty_as_consensus() -> Consensus:
    """Guards G1/G2/G3 (the tainted AS 202 is the heavy G2), exits X1-X4."""
    relays = [
        _relay("G1", 201, 10, {Flag.GUARD, Flag.FAST}),
        _relay("G2", 202, 60, {Flag.GUARD, Flag.STABLE}),
        _relay("G3", 203, 30, {Flag.GUARD}),
        _relay("X1", 301, 10, {Flag.EXIT}),
        _relay("X2", 302, 40, {Flag.EXIT, Flag.FAST}),
        _relay("X3", 303, 20, {Flag.EXIT}),
        _relay("X4", 304, 30, {Flag.EXIT}),
    ]
    relays += [_relay(f"M{i}", 500 + i, 15) for i in range(1, 11)]
    return Consensus(relays, timestamp="fixture-30as")


def guard_diversity_consensus() -> Consensus:
    """Guard-set fixture: the heavy guard B sits in the tainted AS 202.

    Toward destination 401 both exits (under AS 50) are vulnerable from B
    and safe from the light guards, so bigger guard sets can only improve
    the attacker-free fraction.
    """
    relays = [
        _relay("B", 202, 90, {Flag.GUARD}),
        _relay("G1", 201, 5, {Flag.GUARD}),
        _relay("G2", 203, 5, {Flag.GUARD}),
        _relay("Ea", 302, 10, {Flag.EXIT}),
        _relay("Eb", 304, 10, {Flag.EXIT}),
        _relay("Mid", 501, 10),
    ]
    return Consensus(relays, timestamp="fixture-guards")


def consensus_csv(consensus: Consensus) -> str:
    lines = ["fingerprint,asn,bandwidth,flags,net16,family"]
    for r in consensus.relays:
        flags = ";".join(sorted(f.value for f in r.flags))
        bw = int(r.bandwidth) if float(r.bandwidth).is_integer() else r.bandwidth
        lines.append(f"{r.fingerprint},{r.asn},{bw},{flags},{r.net16},"
                     f"{r.family or ''}")
    return "\n".join(lines) + "\n"


def traces_csv(rows) -> str:
    lines = ["site,dst_asn,is_main"]
    lines += [f"{site},{dst},{int(is_main)}" for site, dst, is_main in rows]
    return "\n".join(lines) + "\n"


def clients_csv(rows) -> str:
    return "".join(f"{label},{asn}\n" for label, asn in rows)


def thirty_as_traces() -> list[tuple[str, int, bool]]:
    rows = []
    for i in range(4):
        site = f"site{i}"
        dst = DST_SINGLE_LEG if i % 2 == 0 else DST_ALL_TAINTED
        rows.append((site, dst, True))
        rows.extend((site, dst, False) for _ in range(4))
    return rows
