"""Reducing splice-additive requirements on chains to per-element weights.

A requirement table on the maximal chains of a poset (or the source-sink
paths of a DAG) that is additive under splicing admits an affine
representation -- but on the Hasse diagram, not on the poset elements
themselves: the arcs carry the necessary extra degrees of freedom.  The
recovery solves a small exact linear system on a path basis, then repairs
signs with a shortest-path potential shift.

Everything here validates a posteriori: the table is only probed through a
value oracle, so additivity violations surface as witness-carrying errors
during validation rather than being pre-checked.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Union

from .core import ONE, ZERO, Marginals, OrderedPath, RequirementTable, SetSystem
from .decomp import Decomposition, decompose
from .errors import (
    ConservationViolationError,
    InfeasibleMarginalsError,
    PreconditionError,
    StructuralError,
)
from .lp import LinearSystemResult, matrix_rank, solve_linear_system

EXHAUSTIVE_VALIDATION_NODES = 12
SAMPLE_VALIDATION_PATHS = 50


def transitive_reduction(n: int, pairs) -> list:
    """Covering pairs of the partial order generated by ``pairs``.

    Accepts any acyclic relation (cover or full order) and returns the
    unique reduction: (x, y) survives iff no intermediate z has x < z < y.
    """
    reach = [[False] * n for _ in range(n)]
    for lo, hi in pairs:
        if lo == hi:
            raise StructuralError("order relation cannot be reflexive")
        reach[lo][hi] = True
    for k in range(n):
        rk = reach[k]
        for i in range(n):
            if reach[i][k]:
                ri = reach[i]
                for j in range(n):
                    if rk[j]:
                        ri[j] = True
    for i in range(n):
        if reach[i][i]:
            raise StructuralError("order relation contains a cycle")
    covers = []
    for i in range(n):
        for j in range(n):
            if reach[i][j] and not any(
                reach[i][k] and reach[k][j] for k in range(n)
            ):
                covers.append((i, j))
    return covers


@dataclass(frozen=True)
class HasseDag:
    """Digraph view of a poset: nodes are elements (plus virtual terminals
    when the minimum or maximum is not unique), arcs are covering pairs."""

    dag: SetSystem
    poset: SetSystem
    node_of_poset: dict
    poset_of_node: dict
    virtual_source: bool
    virtual_sink: bool

    def chain_for_path(self, path: OrderedPath) -> OrderedPath:
        """Project a source-sink path of the diagram to its maximal chain."""
        return OrderedPath(
            self.poset_of_node[e] for e in path if e in self.poset_of_node
        )

    def path_for_chain(self, chain: OrderedPath) -> OrderedPath:
        """Lift a maximal chain back to the unique alternating path."""
        nodes = [self.node_of_poset[e] for e in chain]
        if self.virtual_source:
            nodes.insert(0, self.dag.s)
        if self.virtual_sink:
            nodes.append(self.dag.t)
        arc_of = {}
        for aid, tail, head in self.dag.arcs:
            arc_of[(tail, head)] = aid
        seq = [nodes[0]]
        for v, w in zip(nodes, nodes[1:]):
            if (v, w) not in arc_of:
                raise PreconditionError("chain does not follow covering steps")
            seq.append(arc_of[(v, w)])
            seq.append(w)
        return OrderedPath(seq)


def _fresh_label(base: str, taken) -> str:
    label = base
    while label in taken:
        label += "_"
    return label


def hasse_diagram(poset: SetSystem) -> HasseDag:
    """Build the covering-relation digraph with chain/path bijection.

    Virtual global source and sink nodes are introduced exactly when the
    poset lacks a unique minimum or maximum (they carry no requirements; the
    recovered node weights are zero anyway).
    """
    if poset.kind != "poset":
        raise PreconditionError("hasse_diagram needs a poset backend")
    n = len(poset)
    labels = [poset.label_of(e) for e in range(n)]
    minimal = list(poset.minimal_ids)
    maximal = list(poset.maximal_ids)
    if not minimal or not maximal:
        raise StructuralError("poset has no minimal or maximal element")
    need_s = len(minimal) > 1
    need_t = len(maximal) > 1
    if not need_s and not need_t and minimal[0] == maximal[0]:
        need_s = need_t = True

    taken = set(labels)
    node_labels = list(labels)
    if need_s:
        s_label = _fresh_label("_s", taken)
        taken.add(s_label)
        node_labels.append(s_label)
    else:
        s_label = labels[minimal[0]]
    if need_t:
        t_label = _fresh_label("_t", taken)
        taken.add(t_label)
        node_labels.append(t_label)
    else:
        t_label = labels[maximal[0]]

    arcs = []
    if need_s:
        for m in sorted(minimal):
            arcs.append((s_label, labels[m]))
    for lo in range(n):
        for hi in poset.cover_up[lo]:
            arcs.append((labels[lo], labels[hi]))
    if need_t:
        for m in sorted(maximal):
            arcs.append((labels[m], t_label))

    dag = SetSystem.digraph(node_labels, arcs, s_label, t_label)
    node_of_poset = {e: dag.id_of(labels[e]) for e in range(n)}
    poset_of_node = {v: e for e, v in node_of_poset.items()}
    return HasseDag(dag, poset, node_of_poset, poset_of_node, need_s, need_t)


@dataclass(frozen=True)
class PathBasis:
    """Spanning arborescence plus one path per non-tree arc: their incidence
    vectors form a basis for the span of all path incidences."""

    tree: dict  # node -> (arc, parent) toward the source; source -> None
    nontree: tuple
    paths: tuple
    live_nodes: frozenset
    live_arcs: frozenset


def _as_digraph(dag: Union[HasseDag, SetSystem]) -> SetSystem:
    system = dag.dag if isinstance(dag, HasseDag) else dag
    if system.kind != "digraph":
        raise PreconditionError("expected a digraph backend")
    return system


def path_basis(dag: Union[HasseDag, SetSystem]) -> PathBasis:
    """Basis paths of the path-incidence span, built from one forward and
    one backward search over the elements that lie on source-sink paths."""
    system = _as_digraph(dag)
    s, t = system.s, system.t
    reach = {s}
    stack = [s]
    while stack:
        v = stack.pop()
        for aid, head in system.adj[v]:
            if head not in reach:
                reach.add(head)
                stack.append(head)
    coreach = {t}
    stack = [t]
    while stack:
        v = stack.pop()
        for aid, tail in system.radj[v]:
            if tail not in coreach:
                coreach.add(tail)
                stack.append(tail)
    if t not in reach:
        raise StructuralError("sink unreachable from source")
    live_nodes = reach & coreach
    live_arcs = frozenset(
        aid
        for aid, tail, head in system.arcs
        if tail in live_nodes and head in live_nodes
    )

    tree = {s: None}
    order = [s]
    queue = [s]
    while queue:
        v = queue.pop(0)
        for aid, head in system.adj[v]:
            if aid in live_arcs and head not in tree:
                tree[head] = (aid, v)
                order.append(head)
                queue.append(head)
    if t not in tree:
        raise StructuralError("sink not spanned by the arborescence")

    succ = {t: None}
    queue = [t]
    while queue:
        v = queue.pop(0)
        for aid, tail in system.radj[v]:
            if aid in live_arcs and tail not in succ:
                succ[tail] = (aid, v)
                queue.append(tail)

    def to_source(v):
        seq = [v]
        while tree[v] is not None:
            aid, parent = tree[v]
            seq.append(aid)
            seq.append(parent)
            v = parent
        seq.reverse()
        return seq

    def to_sink(v):
        seq = []
        while succ[v] is not None:
            aid, nxt = succ[v]
            seq.append(aid)
            seq.append(nxt)
            v = nxt
        return seq

    tree_arcs = {aid for entry in tree.values() if entry for aid in [entry[0]]}
    nontree = tuple(sorted(live_arcs - tree_arcs))
    paths = [OrderedPath(to_source(t))]
    arc_ends = {aid: (tail, head) for aid, tail, head in system.arcs}
    for b in nontree:
        tail, head = arc_ends[b]
        seq = to_source(tail) + [b] + to_sink(head)
        paths.append(OrderedPath(seq))

    cols = sorted(live_arcs)
    col_of = {a: i for i, a in enumerate(cols)}
    rows = []
    for p in paths:
        row = [ZERO] * len(cols)
        for e in p:
            if e in col_of:
                row[col_of[e]] = ONE
        rows.append(row)
    rank = matrix_rank(rows)
    if rank != len(paths):
        raise StructuralError(
            f"basis incidence rank {rank} != expected {len(paths)}"
        )
    return PathBasis(tree, nontree, tuple(paths), frozenset(live_nodes), live_arcs)


@dataclass(frozen=True)
class PotentialShift:
    """Arc weights from the basis system plus the distance potential that
    repairs their signs; node weights are identically zero."""

    mu_prime: dict
    phi: dict
    mu: dict


def compute_mu(
    dag: Union[HasseDag, SetSystem],
    pi: RequirementTable,
    *,
    seed: int = 0,
    exhaustive_limit: int = EXHAUSTIVE_VALIDATION_NODES,
) -> PotentialShift:
    """Recover per-element weights reproducing the table affinely.

    Solves the basis system on arc variables (free variables pinned to 0),
    shifts by source distances with the sink potential forced to -1, and
    validates the affine identity plus the [0,1] range on the basis paths
    and on all paths (small diagrams) or a seeded sample (large ones).
    Validation failure means the table is not splice-additive (or the oracle
    is inconsistent) and raises with the witness path.
    """
    system = _as_digraph(dag)
    basis = path_basis(dag)
    cols = sorted(basis.live_arcs)
    col_of = {a: i for i, a in enumerate(cols)}
    rows = []
    rhs = []
    for p in basis.paths:
        row = [ZERO] * len(cols)
        for e in p:
            if e in col_of:
                row[col_of[e]] = ONE
        rows.append(row)
        rhs.append(-pi.pi(p))
    res = solve_linear_system(rows, rhs)
    if res.status != "solved":
        raise StructuralError("independent basis system reported inconsistent")
    mu_prime = {a: res.solution[col_of[a]] for a in cols}

    arc_ends = {aid: (tail, head) for aid, tail, head in system.arcs}
    # topological order of the live subgraph (ascending-id Kahn)
    indeg = {v: 0 for v in basis.live_nodes}
    for a in cols:
        tail, head = arc_ends[a]
        indeg[head] += 1
    ready = sorted(v for v, d in indeg.items() if d == 0)
    topo = []
    while ready:
        v = ready.pop(0)
        topo.append(v)
        added = []
        for aid, head in system.adj[v]:
            if aid in basis.live_arcs:
                indeg[head] -= 1
                if indeg[head] == 0:
                    added.append(head)
        ready = sorted(ready + added)
    phi = {v: None for v in basis.live_nodes}
    phi[system.s] = ZERO
    for v in topo:
        if phi[v] is None:
            continue
        for aid, head in system.adj[v]:
            if aid in basis.live_arcs:
                cand = phi[v] + mu_prime[aid]
                if phi[head] is None or cand < phi[head]:
                    phi[head] = cand
    sink_distance = phi[system.t]
    phi[system.t] = -ONE

    mu = {e: ZERO for e in range(len(system))}
    for a in cols:
        tail, head = arc_ends[a]
        mu[a] = mu_prime[a] + phi[tail] - phi[head]

    shift = PotentialShift(mu_prime, phi, mu)
    _validate_shift(
        system,
        basis,
        pi,
        shift,
        sink_distance,
        seed=seed,
        exhaustive_limit=exhaustive_limit,
    )
    return shift


def _validate_shift(system, basis, pi, shift, sink_distance, *, seed, exhaustive_limit):
    for e, v in shift.mu.items():
        if not (ZERO <= v <= ONE):
            witness = _some_path_through(system, basis, e)
            raise ConservationViolationError(
                f"recovered weight for element {e} out of [0,1]: {v}",
                witness=witness,
            )
    if sink_distance is not None and sink_distance < -ONE:
        raise ConservationViolationError(
            "sink potential below -1: some requirement exceeds one on the span",
            witness=None,
        )
    n_nodes = len(system.node_ids)
    if n_nodes <= exhaustive_limit:
        candidates = system.members()
    else:
        rng = random.Random(seed)
        candidates = list(basis.paths)
        for _ in range(SAMPLE_VALIDATION_PATHS):
            candidates.append(_random_walk_path(system, basis, rng))
    for p in candidates:
        total = sum((shift.mu[e] for e in p), ZERO)
        if total != ONE - pi.pi(p):
            raise ConservationViolationError(
                "requirement table is not splice-additive: affine identity "
                f"fails on {p}",
                witness=p,
            )


def _some_path_through(system, basis, e):
    for p in basis.paths:
        if e in p:
            return p
    return None


def _random_walk_path(system, basis, rng):
    v = system.s
    seq = [v]
    while v != system.t:
        options = [
            (aid, head)
            for aid, head in system.adj[v]
            if aid in basis.live_arcs and head in basis.live_nodes
        ]
        aid, head = options[rng.randrange(len(options))]
        seq.append(aid)
        seq.append(head)
        v = head
    return OrderedPath(seq)


def check_conservation(
    system: SetSystem,
    pi: RequirementTable,
    *,
    max_paths: int = 5000,
):
    """Exhaustive splice-additivity test.

    Returns ``(True, None)`` or ``(False, (p, q, e))`` for the first failing
    pair and shared element, using the system's own splice choice.
    """
    members = system.members(max_paths=max_paths)
    for i, p in enumerate(members):
        for q in members[i:]:
            shared = p.as_set & q.as_set
            for e in sorted(shared):
                left = pi.pi(p) + pi.pi(q)
                right = pi.pi(system.cross(p, q, e)) + pi.pi(system.cross(q, p, e))
                if left != right:
                    return False, (p, q, e)
    return True, None


def affine_fit_on_elements(system: SetSystem, pi: RequirementTable) -> LinearSystemResult:
    """Try to reproduce the table with weights on the ground elements only.

    This is the direct route that the Hasse transformation exists to repair:
    the result is often inconsistent (with an exact certificate) even for
    splice-additive tables.
    """
    members = system.members()
    n = len(system)
    rows = []
    rhs = []
    for p in members:
        row = [ZERO] * n
        for e in p:
            row[e] = ONE
        rows.append(row)
        rhs.append(ONE - pi.pi(p))
    return solve_linear_system(rows, rhs)


def decompose_poset_marginals(
    poset: SetSystem,
    pi: RequirementTable,
    rho,
    *,
    seed: int = 0,
) -> Decomposition:
    """End to end: Hasse diagram, weight recovery, digraph decomposition,
    projection back to poset elements.

    The requirement table is keyed by maximal chains of the poset.  Arcs and
    virtual nodes carry zero marginals, so they never appear in the support
    and the projection is exact.
    """
    if poset.kind != "poset":
        raise PreconditionError("expected a poset backend")
    rho = rho if isinstance(rho, Marginals) else Marginals(rho)
    h = hasse_diagram(poset)
    pi_dag = RequirementTable(lambda p: pi.pi(h.chain_for_path(p)))
    shift = compute_mu(h.dag, pi_dag, seed=seed)
    rho_dag = {h.node_of_poset[e]: rho.get(e) for e in range(len(poset))}
    try:
        x_dag = decompose(h.dag, rho_dag, shift.mu)
    except InfeasibleMarginalsError as exc:
        witness = h.chain_for_path(exc.witness) if exc.witness else None
        raise InfeasibleMarginalsError(str(exc), witness=witness) from None
    pairs = []
    for subset, p in x_dag.support:
        projected = frozenset(
            h.poset_of_node[v] for v in subset if v in h.poset_of_node
        )
        pairs.append((projected, p))
    return Decomposition(pairs)
