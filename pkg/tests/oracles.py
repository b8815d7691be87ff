"""Independent brute-force oracles used to validate the library.

Nothing here reuses the library's routing or LP machinery: routes are
found by exhaustive simple-path enumeration plus explicit policy
filtering, and the minimax optimum is found by scanning a probability
simplex grid. Keep it that way; the whole point is a second opinion.
"""

from __future__ import annotations

import itertools
import random
from collections import Counter

import numpy as np

from astoria.topology import (UNKNOWN_COUNTRY, AdversaryMode, AsGraph,
                              CountryMap, OrgMap, colluder_class)

# Path-shape states while walking src -> dest: climbing (only
# customer->provider steps so far) or descending (a peer or downhill step
# was taken; only provider->customer steps remain).
_CLIMB = 0
_DESCEND = 1

# Preference rank by first-hop relationship; higher wins before length.
_RANK_DEST = 4
_RANK_CUSTOMER = 3
_RANK_PEER = 2
_RANK_PROVIDER = 1


def _edge_kind(graph: AsGraph, u: int, v: int) -> str | None:
    if v in graph.providers(u):
        return "up"
    if v in graph.peers(u):
        return "peer"
    if v in graph.customers(u):
        return "down"
    return None


def all_valley_free_paths(graph: AsGraph, src: int, dest: int) -> list[tuple[int, ...]]:
    """Every export-compliant simple path src -> dest.

    Shape: zero or more customer->provider steps, at most one peer step,
    zero or more provider->customer steps.
    """
    if src not in graph or dest not in graph:
        return []
    if src == dest:
        return [(dest,)]
    paths: list[tuple[int, ...]] = []

    def extend(node: int, state: int, path: list[int], visited: set[int]):
        neighbors = []
        for v in graph.customers(node):
            neighbors.append((v, "down"))
        if state == _CLIMB:
            for v in graph.providers(node):
                neighbors.append((v, "up"))
            for v in graph.peers(node):
                neighbors.append((v, "peer"))
        for v, kind in neighbors:
            if v in visited:
                continue
            next_state = _CLIMB if kind == "up" else _DESCEND
            if v == dest:
                paths.append(tuple(path + [v]))
                continue
            visited.add(v)
            path.append(v)
            extend(v, next_state, path, visited)
            path.pop()
            visited.remove(v)

    extend(src, _CLIMB, [src], {src})
    return paths


def _first_edge_rank(graph: AsGraph, path: tuple[int, ...]) -> int:
    if len(path) == 1:
        return _RANK_DEST
    kind = _edge_kind(graph, path[0], path[1])
    return {"down": _RANK_CUSTOMER, "peer": _RANK_PEER,
            "up": _RANK_PROVIDER}[kind]


def oracle_best_routes(graph: AsGraph, dest: int) -> dict[int, tuple[int, int]]:
    """Each node's best (preference rank, hop count) toward dest.

    Preference is decided before length, and a route is only usable if the
    next hop would actually announce it: peers and providers only relay
    customer routes, customers relay everything.
    """
    nodes = graph.nodes
    vf_paths = {u: all_valley_free_paths(graph, u, dest) for u in nodes}

    best: dict[int, tuple[int, int]] = {dest: (_RANK_DEST, 0)}
    # Customer routes: purely downhill paths.
    for u in nodes:
        downhill = [p for p in vf_paths[u]
                    if len(p) > 1 and _first_edge_rank(graph, p) == _RANK_CUSTOMER
                    and all(_edge_kind(graph, p[i], p[i + 1]) == "down"
                            for i in range(len(p) - 1))]
        if downhill:
            best[u] = (_RANK_CUSTOMER, min(len(p) - 1 for p in downhill))
    # Peer routes: one peer step onto dest or a customer-routed AS.
    for u in nodes:
        if u in best:
            continue
        lens = []
        for x in graph.peers(u):
            if x == dest:
                lens.append(1)
            elif best.get(x, (0, 0))[0] == _RANK_CUSTOMER:
                lens.append(1 + best[x][1])
        if lens:
            best[u] = (_RANK_PEER, min(lens))
    # Provider routes: shortest-path fixpoint over announced route lengths.
    prov: dict[int, float] = {u: float("inf") for u in nodes if u not in best}
    for _ in range(len(nodes) + 1):
        changed = False
        for u in prov:
            candidates = []
            for x in graph.providers(u):
                if x in best:
                    candidates.append(1 + best[x][1])
                elif x in prov and prov[x] != float("inf"):
                    candidates.append(1 + prov[x])
            if candidates and min(candidates) < prov[u]:
                prov[u] = min(candidates)
                changed = True
        if not changed:
            break
    for u, length in prov.items():
        if length != float("inf"):
            best[u] = (_RANK_PROVIDER, int(length))
    return best


def oracle_chosen_paths(graph: AsGraph, dest: int) -> dict[int, set[tuple[int, ...]]]:
    """The multipath route set per node: every valley-free path all of
    whose suffixes are (preference, length)-optimal at their own node."""
    best = oracle_best_routes(graph, dest)
    chosen: dict[int, set[tuple[int, ...]]] = {}
    for u in graph.nodes:
        if u not in best:
            continue
        keep = set()
        for path in all_valley_free_paths(graph, u, dest):
            ok = True
            for i in range(len(path)):
                suffix = path[i:]
                expected = best.get(suffix[0])
                if expected is None or expected != (
                        _first_edge_rank(graph, suffix),
                        len(suffix) - 1):
                    ok = False
                    break
            if ok:
                keep.add(path)
        if keep:
            chosen[u] = keep
    return chosen


def oracle_leg_ases(graph: AsGraph, a: int, b: int) -> frozenset:
    """Union of ASes over chosen paths in both directions between a and b."""
    ases: set[int] = set()
    for path in oracle_chosen_paths(graph, b).get(a, ()):
        ases.update(path)
    for path in oracle_chosen_paths(graph, a).get(b, ()):
        ases.update(path)
    return frozenset(ases)


def oracle_assess(graph: AsGraph, org: OrgMap, cc: CountryMap,
                  src: int, entry: int, exit_: int, dst: int,
                  mode: AdversaryMode) -> tuple[bool, frozenset, bool]:
    """Independent vulnerability verdict: (vulnerable, attackers, assessable)."""
    leg1 = oracle_leg_ases(graph, src, entry)
    leg2 = oracle_leg_ases(graph, exit_, dst)
    if not leg1 or not leg2:
        return False, frozenset(), False
    classes1 = {colluder_class(a, mode, org, cc) for a in leg1}
    classes2 = {colluder_class(a, mode, org, cc) for a in leg2}
    if mode is AdversaryMode.STATE:
        classes1.discard(UNKNOWN_COUNTRY)
        classes2.discard(UNKNOWN_COUNTRY)
    attackers = frozenset(classes1 & classes2)
    return bool(attackers), attackers, True


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in _compositions(total - head, parts - 1):
            yield (head,) + rest


def grid_minimax(covered: list[frozenset], num_pairs: int,
                 resolution: int = 60) -> float:
    """Minimum over a simplex grid of the worst per-adversary exposure."""
    points = np.array(list(_compositions(resolution, num_pairs)),
                      dtype=float) / resolution
    incidence = np.zeros((len(covered), num_pairs))
    for k, cov in enumerate(covered):
        for i in cov:
            incidence[k, i] = 1.0
    worst = (points @ incidence.T).max(axis=1)
    return float(worst.min())


def random_graph(rng: random.Random, max_nodes: int = 12,
                 min_nodes: int = 2) -> AsGraph:
    """Seeded random mixed-relationship graph (may be disconnected/cyclic)."""
    n = rng.randint(min_nodes, max_nodes)
    nodes = list(range(1, n + 1))
    density = rng.uniform(0.15, 0.45)
    edges = []
    for a, b in itertools.combinations(nodes, 2):
        if rng.random() >= density:
            continue
        roll = rng.random()
        if roll < 0.3:
            edges.append((a, b, 0))
        elif roll < 0.65:
            edges.append((a, b, -1))
        else:
            edges.append((b, a, -1))
    from astoria.topology import RelKind
    return AsGraph((a, b, RelKind(rel)) for a, b, rel in edges)


def random_org_map(rng: random.Random, graph: AsGraph) -> OrgMap:
    """Group a random subset of ASes into a handful of organizations."""
    labels = ["orgA", "orgB", "orgC"]
    mapping = {}
    for asn in sorted(graph.nodes):
        if rng.random() < 0.4:
            mapping[asn] = rng.choice(labels)
    return OrgMap(mapping)


def random_country_map(rng: random.Random, graph: AsGraph) -> CountryMap:
    """Assign a random subset of ASes to a few countries; rest unknown."""
    codes = ["AA", "BB", "CC"]
    mapping = {}
    for asn in sorted(graph.nodes):
        if rng.random() < 0.6:
            mapping[asn] = rng.choice(codes)
    return CountryMap(mapping)
