"""Minimax relay-selection linear program.

Given candidate (entry, exit) pairs and, for each adversary class, the
set of pairs it can observe, find the selection distribution minimizing
the worst per-adversary observation probability:

    minimize z  subject to  z >= sum_p P(p) * X(p, A)  for every A,
    sum_p P(p) = 1,  P >= 0.

The solver is an in-repo dense two-phase simplex with Bland's anti-cycling
pivot rule and a 1e-9 feasibility tolerance; it is deterministic for a
fixed input ordering. Duplicate adversary rows are pruned before solving.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

import numpy as np

FEASIBILITY_TOL = 1e-9
_PIVOT_TOL = 1e-10


class SolverError(RuntimeError):
    """The simplex failed on a problem that must be feasible (solver bug)."""


def _sort_key(key):
    # Class keys mix ints and strings; order ints before strings.
    return (isinstance(key, str), key)


@dataclass(frozen=True)
class SelectionProblem:
    """Candidate pairs plus per-adversary observation incidence.

    ``covered[k]`` holds the indices of the pairs adversary
    ``adversaries[k]`` can observe; every adversary observes at least one
    pair and the pair list is nonempty.
    """

    pairs: tuple[Hashable, ...]
    adversaries: tuple[Hashable, ...]
    covered: tuple[frozenset, ...]

    def __post_init__(self):
        if not self.pairs:
            raise ValueError("pair list must be nonempty")
        if len(self.adversaries) != len(self.covered):
            raise ValueError("adversaries and coverage rows must align")
        if len(set(self.adversaries)) != len(self.adversaries):
            raise ValueError("duplicate adversary keys")
        for adv, cov in zip(self.adversaries, self.covered):
            if not cov:
                raise ValueError(f"adversary {adv!r} observes no pair")
            if not all(0 <= i < len(self.pairs) for i in cov):
                raise ValueError(f"adversary {adv!r} has out-of-range incidence")

    @classmethod
    def from_attacker_sets(cls, pairs: Sequence[Hashable],
                           attacker_sets: Sequence[Iterable]) -> "SelectionProblem":
        """Build from per-pair attacker-class sets (one set per pair)."""
        if len(pairs) != len(attacker_sets):
            raise ValueError("one attacker set per pair required")
        by_adv: dict[Hashable, set[int]] = {}
        for i, attackers in enumerate(attacker_sets):
            for adv in attackers:
                by_adv.setdefault(adv, set()).add(i)
        adversaries = tuple(sorted(by_adv, key=_sort_key))
        covered = tuple(frozenset(by_adv[a]) for a in adversaries)
        return cls(pairs=tuple(pairs), adversaries=adversaries, covered=covered)

    def incidence(self, pair_index: int, adversary: Hashable) -> int:
        return 1 if pair_index in self.covered[self._adv_index(adversary)] else 0

    def _adv_index(self, adversary: Hashable) -> int:
        try:
            return self.adversaries.index(adversary)
        except ValueError:
            raise ValueError(f"unknown adversary {adversary!r}") from None


@dataclass(frozen=True)
class SelectionDistribution:
    """One optimal point of the minimax program (optima may be non-unique)."""

    probs: tuple[float, ...]
    objective: float


def _pivot(tableau: np.ndarray, row: int, col: int) -> None:
    tableau[row] /= tableau[row, col]
    factors = tableau[:, col].copy()
    factors[row] = 0.0
    tableau -= np.outer(factors, tableau[row])


def _run_simplex(tableau: np.ndarray, basis: list[int],
                 num_cols: int, max_iter: int) -> None:
    """Minimize the objective encoded in the last tableau row, in place.

    Bland's rule: entering variable is the lowest-index column with a
    negative reduced cost, leaving row is the lowest-index tie among the
    minimum ratios. Guarantees termination despite degeneracy.
    """
    for _ in range(max_iter):
        col = -1
        for j in range(num_cols):
            if tableau[-1, j] < -FEASIBILITY_TOL:
                col = j
                break
        if col < 0:
            return
        ratios = []
        for i in range(tableau.shape[0] - 1):
            coef = tableau[i, col]
            if coef > _PIVOT_TOL:
                ratios.append((tableau[i, -1] / coef, basis[i], i))
        if not ratios:
            raise SolverError("unbounded minimax program (solver bug)")
        _, _, row = min(ratios)
        _pivot(tableau, row, col)
        basis[row] = col
    raise SolverError("simplex iteration limit exceeded")


def _solve_standard_form(c: np.ndarray, a_ub: np.ndarray, b_ub: np.ndarray,
                         a_eq: np.ndarray, b_eq: np.ndarray) -> np.ndarray:
    """min c.x st a_ub x <= b_ub, a_eq x = b_eq, x >= 0, via two phases."""
    n = c.size
    m_ub = a_ub.shape[0]
    m_eq = a_eq.shape[0]
    m = m_ub + m_eq
    # Columns: structural | slacks (ub rows) | artificials (eq rows) | rhs.
    width = n + m_ub + m_eq + 1
    tableau = np.zeros((m + 1, width))
    tableau[:m_ub, :n] = a_ub
    tableau[:m_ub, -1] = b_ub
    tableau[m_ub:m, :n] = a_eq
    tableau[m_ub:m, -1] = b_eq
    for i in range(m_ub):
        tableau[i, n + i] = 1.0
    for i in range(m_eq):
        tableau[m_ub + i, n + m_ub + i] = 1.0
    if np.any(tableau[:m, -1] < 0):
        raise SolverError("standard form requires nonnegative right-hand sides")
    basis = [n + i for i in range(m_ub)] + [n + m_ub + i for i in range(m_eq)]
    max_iter = 1000 + 100 * (m + width)

    # Phase 1: drive artificials to zero.
    art_lo = n + m_ub
    tableau[-1, :] = 0.0
    tableau[-1, art_lo:art_lo + m_eq] = 1.0
    for i in range(m_eq):
        tableau[-1] -= tableau[m_ub + i]
    _run_simplex(tableau, basis, num_cols=width - 1, max_iter=max_iter)
    if tableau[-1, -1] < -FEASIBILITY_TOL:
        raise SolverError("phase-1 optimum nonzero: program infeasible")
    # Pivot any artificial still in the basis out to a structural column.
    for i, var in enumerate(basis):
        if var >= art_lo:
            for j in range(art_lo):
                if abs(tableau[i, j]) > _PIVOT_TOL:
                    _pivot(tableau, i, j)
                    basis[i] = j
                    break
    tableau[:, art_lo:art_lo + m_eq] = 0.0

    # Phase 2: original objective, priced out over the current basis.
    tableau[-1, :] = 0.0
    tableau[-1, :n] = c
    for i, var in enumerate(basis):
        if var < n and c[var] != 0.0:
            tableau[-1] -= c[var] * tableau[i]
    _run_simplex(tableau, basis, num_cols=art_lo, max_iter=max_iter)

    x = np.zeros(width - 1)
    for i, var in enumerate(basis):
        x[var] = tableau[i, -1]
    return x[:n]


def solve_minimax(problem: SelectionProblem) -> SelectionDistribution:
    """Solve the minimax program exactly; deterministic for a fixed input."""
    m = len(problem.pairs)
    unique_rows: list[frozenset] = []
    seen: set[frozenset] = set()
    for cov in problem.covered:
        if cov not in seen:
            seen.add(cov)
            unique_rows.append(cov)

    # Variables: pair probabilities then z.
    n = m + 1
    c = np.zeros(n)
    c[m] = 1.0
    a_ub = np.zeros((len(unique_rows), n))
    for k, cov in enumerate(unique_rows):
        for i in cov:
            a_ub[k, i] = 1.0
        a_ub[k, m] = -1.0
    b_ub = np.zeros(len(unique_rows))
    a_eq = np.zeros((1, n))
    a_eq[0, :m] = 1.0
    b_eq = np.ones(1)
    x = _solve_standard_form(c, a_ub, b_ub, a_eq, b_eq)

    probs = np.clip(x[:m], 0.0, None)
    objective = float(x[m])
    if abs(probs.sum() - 1.0) > FEASIBILITY_TOL:
        raise SolverError("optimum violates the probability constraint")
    for cov in unique_rows:
        if sum(probs[i] for i in cov) > objective + FEASIBILITY_TOL:
            raise SolverError("optimum violates an adversary exposure bound")
    return SelectionDistribution(probs=tuple(float(p) for p in probs),
                                 objective=objective)


def exposure(dist: SelectionDistribution, problem: SelectionProblem,
             adversary: Hashable) -> float:
    """Probability that ``adversary`` observes a circuit drawn from ``dist``."""
    cov = problem.covered[problem._adv_index(adversary)]
    return sum(dist.probs[i] for i in cov)


def uniform_max_exposure(problem: SelectionProblem) -> float:
    """Worst per-adversary exposure of the uniform pair distribution."""
    m = len(problem.pairs)
    return max(len(cov) / m for cov in problem.covered)


def format_tableau(problem: SelectionProblem,
                   dist: SelectionDistribution | None = None) -> str:
    """Plain-text incidence tableau of the program, for debugging dumps."""
    lines = []
    header = "adversary".ljust(20) + " " + " ".join(
        f"p{i}" for i in range(len(problem.pairs)))
    lines.append(header)
    for adv, cov in zip(problem.adversaries, problem.covered):
        row = " ".join(("1" if i in cov else "0").rjust(len(f"p{i}"))
                       for i in range(len(problem.pairs)))
        lines.append(str(adv).ljust(20) + " " + row)
    lines.append("")
    lines.append("pairs:")
    for i, pair in enumerate(problem.pairs):
        lines.append(f"  p{i} = {pair!r}")
    if dist is not None:
        lines.append("")
        lines.append(f"objective z* = {dist.objective:.9f}")
        lines.append("probabilities: "
                     + " ".join(f"{p:.6f}" for p in dist.probs))
    return "\n".join(lines)
