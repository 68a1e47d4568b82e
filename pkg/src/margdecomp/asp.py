"""Combinatorial shortest paths through a membership oracle.

Works on any path system exposing ``find_member``: no incidence structure is
needed.  The solver maintains a tentative segment length ``psi[e]`` for every
element, witnessed by a path whose prefix up to ``e`` realizes that length.
Each round it fixes the cheapest unprocessed element and probes the oracle
for members avoiding processed territory (except along the witness prefix),
which is how new segments are discovered without local adjacency information.

Costs must be nonnegative exact rationals.  Determinism: argmin ties break
toward the smallest element id, and witnesses are replaced only on strict
improvement.
"""

from __future__ import annotations

from typing import Mapping, Optional

from .core import ZERO, OrderedPath, SetSystem, rat
from .errors import PreconditionError, StructuralError

INF = float("inf")

# Lemma-style invariant checks are only affordable when the whole family can
# be enumerated, hence the explicit-backend size gate.
DEBUG_MAX_ELEMENTS = 12


class LabelState:
    """Internal Dijkstra-like state over the (possibly augmented) ground set."""

    __slots__ = ("psi", "witness", "processed", "frontier")

    def __init__(self, n: int):
        self.psi = [INF] * n
        self.witness = [None] * n
        self.processed = set()
        self.frontier = set()


def _validated_costs(system: SetSystem, gamma: Mapping) -> list:
    costs = []
    for e in range(len(system)):
        g = rat(gamma.get(e, 0))
        if g < 0:
            raise PreconditionError(f"negative cost on element {e}: {g}")
        costs.append(g)
    return costs


def shortest_path(
    system: SetSystem,
    gamma: Mapping,
    *,
    debug: bool = False,
    trace: Optional[list] = None,
    stats: Optional[dict] = None,
):
    """Return ``(path, cost)`` minimizing the element-cost sum, or None if
    the family is empty.

    ``gamma`` maps element ids to nonnegative rationals (missing ids cost 0).
    When the members do not share a common first/last element, zero-cost
    virtual terminals are added internally and stripped from the result.
    ``stats``, when given a dict, receives ``oracle_calls``,
    ``outer_iterations`` and ``invariant_checks``.
    """
    n = len(system)
    costs = _validated_costs(system, gamma)

    s_common, t_common = system.common_terminals()
    augment = s_common is None or t_common is None
    if augment:
        s_elt, t_elt = n, n + 1
        total = n + 2
        costs = costs + [ZERO, ZERO]
        all_ids = frozenset(range(total))
        real_ids = system.all_ids

        def member(allowed):
            if s_elt not in allowed or t_elt not in allowed:
                return None
            p = system.find_member(allowed & real_ids)
            if p is None:
                return None
            return (s_elt,) + p.elements + (t_elt,)

    else:
        s_elt, t_elt = s_common, t_common
        total = n
        all_ids = system.all_ids

        def member(allowed):
            p = system.find_member(allowed)
            return None if p is None else p.elements

    calls = 0

    def oracle(allowed):
        nonlocal calls
        calls += 1
        return member(allowed)

    debug_active = (
        debug and system.kind == "explicit" and len(system) <= DEBUG_MAX_ELEMENTS
    )
    if debug_active:
        if augment:
            debug_members = [
                (s_elt,) + p.elements + (t_elt,) for p in system.members()
            ]
        else:
            debug_members = [p.elements for p in system.members()]

    state = LabelState(total)
    psi = state.psi
    witness = state.witness
    processed = state.processed

    first = oracle(all_ids)
    if first is None:
        if stats is not None:
            stats.update(oracle_calls=calls, outer_iterations=0, invariant_checks=0)
        return None
    psi[s_elt] = costs[s_elt]
    witness[s_elt] = first

    outer = 0
    checks = 0
    while True:
        best_val, best_elt = INF, None
        for f in range(total):
            if f not in processed and psi[f] < best_val:
                best_val, best_elt = psi[f], f
        if not psi[t_elt] > best_val:
            break
        e = best_elt
        if trace is not None:
            trace.append({"event": "process", "element": e, "psi": psi[e]})
        we = witness[e]
        cut = we.index(e) + 1
        prefix_set = set(we[:cut])
        frontier = set(all_ids - processed) | prefix_set
        state.frontier = frontier
        while True:
            p = oracle(frontier)
            if p is None:
                break
            e2 = None
            for x in p:
                if x not in prefix_set:
                    e2 = x
                    break
            if e2 is None:
                raise StructuralError("member contained in a strict path prefix")
            frontier.discard(e2)
            seg = ZERO
            for x in p:
                seg += costs[x]
                if x == e2:
                    break
            if seg < psi[e2]:
                psi[e2] = seg
                witness[e2] = p
                if trace is not None:
                    trace.append({"event": "label", "element": e2, "psi": seg})
        processed.add(e)
        outer += 1
        if debug_active:
            _assert_segment_invariant(debug_members, costs, psi, processed)
            checks += 1

    if stats is not None:
        stats.update(
            oracle_calls=calls, outer_iterations=outer, invariant_checks=checks
        )
    wt = witness[t_elt]
    if wt is None:
        return None
    result = tuple(x for x in wt if x < n) if augment else wt
    return OrderedPath(result), psi[t_elt]


def _assert_segment_invariant(members, costs, psi, processed):
    """Every member must retain an element with untouched suffix whose label
    is at most the member's prefix cost up to it."""
    for p in members:
        ok = False
        running = ZERO
        suffix_hits = [x in processed for x in p]
        # suffix [e, P] untouched <=> no processed element at or after e
        clean_from = len(p)
        for i in range(len(p) - 1, -1, -1):
            if suffix_hits[i]:
                break
            clean_from = i
        for i, x in enumerate(p):
            running += costs[x]
            if i >= clean_from and psi[x] <= running:
                ok = True
                break
        if not ok:
            raise AssertionError(
                f"segment invariant violated for member {p} with processed set "
                f"{sorted(processed)}"
            )


def restricted_shortest_path(
    system: SetSystem,
    active: set,
    weights: Mapping,
    *,
    trace: Optional[list] = None,
    stats: Optional[dict] = None,
):
    """Minimize the weight sum over the intersection with ``active`` only.

    Realized as an ordinary shortest-path run with costs zeroed outside the
    active set.  Weights must be nonnegative on the active set.
    """
    active = frozenset(active)
    gamma = {}
    for e in active:
        w = rat(weights.get(e, 0))
        if w < 0:
            raise PreconditionError(f"negative weight on active element {e}: {w}")
        gamma[e] = w
    return shortest_path(system, gamma, trace=trace, stats=stats)
