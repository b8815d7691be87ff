"""Multipath interdomain routing trees and path-set queries.

Routes are computed per destination under the standard economic routing
model: each AS ranks routes by next-hop relationship (customer over peer
over provider), then by hop count, and only announces customer routes to
peers and providers while announcing everything to customers. Instead of
tie-breaking, every next hop achieving the best (preference, length) is
kept, so each tree is a DAG whose source-to-destination paths are exactly
the routes that satisfy local preference and shortest path simultaneously.

The tree for one destination is built in three propagation phases, each
touching every edge a constant number of times:

1. customer routes: breadth-first from the destination along
   customer-to-provider edges;
2. peer routes: one peer hop off the destination or any customer-routed
   AS, for ASes that gained no customer route;
3. provider routes: breadth-first downward (provider-to-customer) from
   every routed AS, in increasing route-length order, for ASes that
   gained neither customer nor peer routes.
"""

from __future__ import annotations

import hashlib
import itertools
import threading
from collections import OrderedDict, deque
from enum import IntEnum
from typing import Iterator, NamedTuple

from .topology import AsGraph

#: Enumeration bound used when callers do not supply their own cap; dense
#: topologies need fractions, not exhaustive path lists.
DEFAULT_ENUMERATE_CAP = 10_000

DEFAULT_CACHE_CAPACITY = 4096


class PrefClass(IntEnum):
    """Route preference by next-hop relationship; higher is preferred."""

    PROVIDER = 1
    PEER = 2
    CUSTOMER = 3


class TreeEntry(NamedTuple):
    pref: PrefClass | None  # None only for the destination itself
    length: int
    next_hops: tuple[int, ...]


class RoutingTree:
    """Per-destination table of best-route class, hop count, and tied next hops."""

    __slots__ = ("dest", "_entries", "_reach_memo")

    def __init__(self, dest: int, entries: dict[int, TreeEntry]):
        self.dest = dest
        self._entries = entries
        self._reach_memo: dict[int, frozenset] = {}

    def reachable(self, asn: int) -> bool:
        return asn in self._entries

    def entry(self, asn: int) -> TreeEntry:
        return self._entries[asn]

    def pref(self, asn: int) -> PrefClass | None:
        return self._entries[asn].pref

    def length(self, asn: int) -> int:
        return self._entries[asn].length

    def next_hops(self, asn: int) -> tuple[int, ...]:
        return self._entries[asn].next_hops

    def reachable_nodes(self) -> Iterator[int]:
        return iter(self._entries)

    def __repr__(self) -> str:
        return f"RoutingTree(dest={self.dest}, reachable={len(self._entries)})"


def compute_routing_tree(graph: AsGraph, dest: int) -> RoutingTree:
    """Compute the multipath routing tree toward ``dest``.

    Raises ValueError if ``dest`` is not a node of the graph. ASes with no
    policy-compliant route to ``dest`` are absent from the result.
    """
    if dest not in graph:
        raise ValueError(f"destination AS {dest} not in graph")

    # Phase 1: customer routes, BFS from dest along customer->provider.
    dist1: dict[int, int] = {dest: 0}
    queue = deque([dest])
    while queue:
        u = queue.popleft()
        du = dist1[u] + 1
        for p in graph.providers(u):
            if p not in dist1:
                dist1[p] = du
                queue.append(p)

    # Phase 2: one peer hop off dest or a customer-routed AS.
    dist2: dict[int, int] = {}
    for u, du in dist1.items():
        for v in graph.peers(u):
            if v in dist1:
                continue
            d = du + 1
            if v not in dist2 or d < dist2[v]:
                dist2[v] = d

    # Phase 3: provider routes, relaxed in increasing route-length order so
    # that chains of provider hops below previously routed ASes stay minimal.
    final = dict(dist1)
    final.update(dist2)
    levels: dict[int, list[int]] = {}
    for u, d in final.items():
        levels.setdefault(d, []).append(u)
    dist3: dict[int, int] = {}
    level = 0
    max_level = max(levels) if levels else 0
    while level <= max_level:
        for u in levels.get(level, ()):
            d = level + 1
            for c in graph.customers(u):
                if c not in final:
                    final[c] = d
                    dist3[c] = d
                    levels.setdefault(d, []).append(c)
                    max_level = max(max_level, d)
        level += 1

    entries: dict[int, TreeEntry] = {dest: TreeEntry(None, 0, ())}
    for u, d in dist1.items():
        if u == dest:
            continue
        hops = tuple(sorted(c for c in graph.customers(u)
                            if dist1.get(c) == d - 1))
        entries[u] = TreeEntry(PrefClass.CUSTOMER, d, hops)
    for u, d in dist2.items():
        hops = tuple(sorted(p for p in graph.peers(u)
                            if dist1.get(p) == d - 1))
        entries[u] = TreeEntry(PrefClass.PEER, d, hops)
    for u, d in dist3.items():
        hops = tuple(sorted(p for p in graph.providers(u)
                            if final.get(p) == d - 1))
        entries[u] = TreeEntry(PrefClass.PROVIDER, d, hops)
    return RoutingTree(dest, entries)


def path_set(tree: RoutingTree, src: int) -> frozenset:
    """All ASes on any best path from ``src`` to the tree's destination.

    Returns the empty set when ``src`` is unreachable; unreachability is a
    value, not an error. The union is computed by memoized DAG traversal,
    never by enumerating individual paths.
    """
    if not tree.reachable(src):
        return frozenset()
    memo = tree._reach_memo
    stack = [src]
    while stack:
        u = stack[-1]
        if u in memo:
            stack.pop()
            continue
        hops = tree.next_hops(u)
        pending = [v for v in hops if v not in memo]
        if pending:
            stack.extend(pending)
            continue
        acc = {u}
        for v in hops:
            acc.update(memo[v])
        memo[u] = frozenset(acc)
        stack.pop()
    return memo[src]


def _iter_tree_paths(tree: RoutingTree, src: int) -> Iterator[list[int]]:
    # Next hops are stored sorted, which makes the DFS order deterministic.
    if src == tree.dest:
        yield [src]
        return
    path = [src]
    iters = [iter(tree.next_hops(src))]
    while iters:
        nxt = next(iters[-1], None)
        if nxt is None:
            iters.pop()
            path.pop()
            continue
        if nxt == tree.dest:
            yield path + [nxt]
            continue
        path.append(nxt)
        iters.append(iter(tree.next_hops(nxt)))


def enumerate_paths(tree: RoutingTree, src: int,
                    cap: int = DEFAULT_ENUMERATE_CAP) -> tuple[list[list[int]], bool]:
    """Enumerate distinct best paths from ``src``, in deterministic order.

    Returns (paths, truncated); at most ``cap`` paths are produced and
    ``truncated`` reports whether more exist. An unreachable ``src``
    yields ([], False).
    """
    if cap < 1:
        raise ValueError("cap must be positive")
    if not tree.reachable(src):
        return [], False
    gen = _iter_tree_paths(tree, src)
    paths = list(itertools.islice(gen, cap))
    truncated = next(gen, None) is not None
    return paths, truncated


def tie_break_single_path(tree: RoutingTree, seed: int = 0) -> RoutingTree:
    """Prune every multipath choice down to one next hop by seeded hash.

    Vanilla-comparison mode only: among tied next hops of ``u`` the
    neighbor with the lowest 64-bit hash of (seed, u, neighbor) wins, which
    prevents any fixed AS from always winning while staying reproducible.
    """
    def hash64(u: int, v: int) -> int:
        digest = hashlib.blake2b(f"{seed}|{u}|{v}".encode(), digest_size=8)
        return int.from_bytes(digest.digest(), "big")

    entries: dict[int, TreeEntry] = {}
    for u in tree.reachable_nodes():
        pref, length, hops = tree.entry(u)
        if len(hops) > 1:
            best = min(hops, key=lambda v: (hash64(u, v), v))
            hops = (best,)
        entries[u] = TreeEntry(pref, length, hops)
    return RoutingTree(tree.dest, entries)


class RoutingTreeCache:
    """Bounded LRU cache of routing trees keyed by destination.

    Safe for concurrent use; lookups and inserts are serialized by a lock,
    which is cheap next to tree computation.
    """

    def __init__(self, graph: AsGraph, capacity: int = DEFAULT_CACHE_CAPACITY):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.graph = graph
        self.capacity = capacity
        self._trees: OrderedDict[int, RoutingTree] = OrderedDict()
        self._lock = threading.Lock()

    def tree(self, dest: int) -> RoutingTree:
        with self._lock:
            cached = self._trees.get(dest)
            if cached is not None:
                self._trees.move_to_end(dest)
                return cached
        computed = compute_routing_tree(self.graph, dest)
        with self._lock:
            self._trees[dest] = computed
            self._trees.move_to_end(dest)
            while len(self._trees) > self.capacity:
                self._trees.popitem(last=False)
        return computed

    def __len__(self) -> int:
        with self._lock:
            return len(self._trees)

    # Locks do not pickle; a cache shipped to a worker process starts cold.
    def __getstate__(self):
        return {"graph": self.graph, "capacity": self.capacity}

    def __setstate__(self, state):
        self.graph = state["graph"]
        self.capacity = state["capacity"]
        self._trees = OrderedDict()
        self._lock = threading.Lock()


def bidirectional_path_set(cache: RoutingTreeCache, a: int, b: int) -> frozenset:
    """Union of path sets in both directions between ``a`` and ``b``.

    A direction with no policy-compliant route contributes nothing; if both
    directions are unreachable the result is the empty set.
    """
    graph = cache.graph
    if a not in graph:
        raise ValueError(f"AS {a} not in graph")
    if b not in graph:
        raise ValueError(f"AS {b} not in graph")
    forward = path_set(cache.tree(b), a)
    if a == b:
        return forward
    reverse = path_set(cache.tree(a), b)
    if not forward:
        return reverse
    if not reverse:
        return forward
    return forward | reverse
