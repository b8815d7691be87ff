"""AS-aware relay selection for onion-routing networks.

Predicts policy-compliant AS-level paths over a relationship-annotated
topology, flags circuits exposed to asymmetric traffic-correlation
observers, and selects relays to avoid them: safe pairs are drawn
bandwidth-weighted, and when none exist a minimax linear program caps the
exposure of the most-observing adversary.
"""

from .lp import (SelectionDistribution, SelectionProblem, SolverError,
                 exposure, solve_minimax)
from .routing import (PrefClass, RoutingTree, RoutingTreeCache,
                      bidirectional_path_set, compute_routing_tree,
                      enumerate_paths, path_set, tie_break_single_path)
from .selection import (Consensus, Flag, GuardSet, Relay, SelectionConfig,
                        SelectionError, astoria_select, choose_guards,
                        load_consensus, perfect_balance_distribution,
                        uniform_select, vanilla_select)
from .threat import (CircuitSpec, ThreatAssessment, ThreatConfig,
                     ThreatContext, assess, attacker_free_fraction,
                     vulnerable_path_fraction)
from .topology import (AdversaryMode, AsGraph, CountryMap, OrgMap,
                       ParseError, RelKind, colluder_class, dump_topology,
                       load_countries, load_siblings, load_topology)

__version__ = "0.1.0"

__all__ = [
    "AdversaryMode", "AsGraph", "CircuitSpec", "Consensus", "CountryMap",
    "Flag", "GuardSet", "OrgMap", "ParseError", "PrefClass", "Relay",
    "RelKind", "RoutingTree", "RoutingTreeCache", "SelectionConfig",
    "SelectionDistribution", "SelectionError", "SelectionProblem",
    "SolverError", "ThreatAssessment", "ThreatConfig", "ThreatContext",
    "assess", "astoria_select", "attacker_free_fraction",
    "bidirectional_path_set", "choose_guards", "colluder_class",
    "compute_routing_tree", "dump_topology", "enumerate_paths", "exposure",
    "load_consensus", "load_countries", "load_siblings", "load_topology",
    "path_set", "perfect_balance_distribution", "solve_minimax",
    "tie_break_single_path", "uniform_select", "vanilla_select",
    "vulnerable_path_fraction",
]
