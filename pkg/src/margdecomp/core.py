"""Ground sets, ordered path systems and requirement vectors.

All quantities are exact rationals (:class:`fractions.Fraction`); no floats
appear anywhere in algorithmic code.  A :class:`SetSystem` bundles a ground
set with one of three backends:

* ``explicit`` -- a stored family of ordered paths,
* ``digraph``  -- simple source-sink paths of a directed graph, where the
  ground set contains both nodes and arcs and paths alternate between them,
* ``poset``    -- maximal chains of a partial order given by its covering
  relation.

The digraph and poset backends answer membership queries ("give me a member
contained in this allowed set") by deterministic breadth-first search; the
explicit backend scans its stored family in order.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Optional, Sequence, Union

from .errors import (
    PreconditionError,
    SizeGuardError,
    StructuralError,
    UnsupportedCombinationError,
)

ZERO = Fraction(0)
ONE = Fraction(1)


def rat(value) -> Fraction:
    """Coerce ints, strings like ``"3/4"`` and Fractions to an exact rational."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value)
    raise StructuralError(f"not an exact rational: {value!r}")


@dataclass(frozen=True)
class Element:
    """A ground-set element: dense integer id plus a human-readable label."""

    id: int
    label: str


class OrderedPath:
    """A member of the path system: a nonempty, repeat-free sequence of
    element ids carrying its own internal linear order."""

    __slots__ = ("elements", "_set", "_pos", "_hash")

    def __init__(self, elements: Iterable[int]):
        elems = tuple(elements)
        if not elems:
            raise StructuralError("path must be nonempty")
        pos = {}
        for i, e in enumerate(elems):
            if e in pos:
                raise StructuralError(f"path repeats element {e}")
            pos[e] = i
        object.__setattr__(self, "elements", elems)
        object.__setattr__(self, "_set", frozenset(elems))
        object.__setattr__(self, "_pos", pos)
        object.__setattr__(self, "_hash", hash(elems))

    def __setattr__(self, name, value):
        raise AttributeError("OrderedPath is immutable")

    @property
    def first(self) -> int:
        return self.elements[0]

    @property
    def last(self) -> int:
        return self.elements[-1]

    @property
    def as_set(self) -> frozenset:
        return self._set

    def position(self, e: int) -> int:
        try:
            return self._pos[e]
        except KeyError:
            raise PreconditionError(f"element {e} not on path") from None

    def prefix(self, e: int) -> tuple:
        """Elements up to and including ``e`` in path order."""
        return self.elements[: self.position(e) + 1]

    def strict_prefix(self, e: int) -> tuple:
        return self.elements[: self.position(e)]

    def suffix(self, e: int) -> tuple:
        """Elements from ``e`` (inclusive) to the end in path order."""
        return self.elements[self.position(e):]

    def strict_suffix(self, e: int) -> tuple:
        return self.elements[self.position(e) + 1:]

    def __contains__(self, e) -> bool:
        return e in self._set

    def __iter__(self):
        return iter(self.elements)

    def __len__(self) -> int:
        return len(self.elements)

    def __eq__(self, other) -> bool:
        return isinstance(other, OrderedPath) and self.elements == other.elements

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return f"OrderedPath({list(self.elements)})"


def _coerce_value_map(values: Mapping, *, lo=ZERO, hi=ONE, what="value") -> dict:
    out = {}
    for key, val in values.items():
        v = rat(val)
        if not (lo <= v <= hi):
            raise StructuralError(f"{what} for element {key} out of [{lo},{hi}]: {v}")
        out[key] = v
    return out


@dataclass(frozen=True)
class Marginals:
    """Per-element inclusion probabilities; missing elements default to 0."""

    rho: dict

    def __init__(self, rho: Mapping):
        object.__setattr__(self, "rho", _coerce_value_map(rho, what="marginal"))

    def get(self, e: int) -> Fraction:
        return self.rho.get(e, ZERO)

    def __getitem__(self, e: int) -> Fraction:
        return self.get(e)

    def items(self):
        return self.rho.items()


@dataclass(frozen=True)
class AffineRequirement:
    """Requirements of the form pi(P) = 1 - sum of per-element weights.

    The induced pi(P) is deliberately not clamped at 0: a negative value
    simply makes the corresponding covering constraint vacuous.
    """

    mu: dict

    def __init__(self, mu: Mapping):
        object.__setattr__(self, "mu", _coerce_value_map(mu, what="weight"))

    def get(self, e: int) -> Fraction:
        return self.mu.get(e, ZERO)

    def __getitem__(self, e: int) -> Fraction:
        return self.get(e)

    def items(self):
        return self.mu.items()

    def pi(self, path: OrderedPath) -> Fraction:
        return ONE - sum((self.get(e) for e in path), ZERO)


class RequirementTable:
    """Per-path requirements, stored explicitly or answered by a callback."""

    def __init__(self, table: Union[Mapping, Callable[[OrderedPath], Fraction]]):
        if callable(table):
            self._table = None
            self._oracle = table
        else:
            self._table = {p: rat(v) for p, v in table.items()}
            self._oracle = None

    def pi(self, path: OrderedPath) -> Fraction:
        if self._table is not None:
            try:
                value = self._table[path]
            except KeyError:
                raise PreconditionError(f"no requirement stored for {path}") from None
        else:
            value = rat(self._oracle(path))
        if not (ZERO <= value <= ONE):
            raise StructuralError(f"requirement for {path} out of [0,1]: {value}")
        return value


Requirement = Union[AffineRequirement, RequirementTable]


def _pi_of(req: Requirement, path: OrderedPath) -> Fraction:
    return req.pi(path)


class SetSystem:
    """A ground set together with a path-family backend.

    Instances are immutable after construction and safe to share.
    """

    def __init__(self, ground: Sequence[Element], kind: str, **backend):
        labels = set()
        for i, el in enumerate(ground):
            if el.id != i:
                raise StructuralError("element ids must be dense 0..n-1 in order")
            if el.label in labels:
                raise StructuralError(f"duplicate label {el.label!r}")
            labels.add(el.label)
        self.ground = tuple(ground)
        self.kind = kind
        self.all_ids = frozenset(range(len(self.ground)))
        self._by_label = {el.label: el.id for el in self.ground}
        if kind == "explicit":
            members = tuple(backend["members"])
            for p in members:
                for e in p:
                    if e not in self.all_ids:
                        raise StructuralError(f"path uses unknown element {e}")
            self._members = members
        elif kind == "digraph":
            self._init_digraph(**backend)
        elif kind == "poset":
            self._init_poset(**backend)
        else:
            raise StructuralError(f"unknown backend kind {kind!r}")

    # -- constructors ---------------------------------------------------

    @classmethod
    def explicit(cls, labels: Sequence[str], paths: Sequence[Sequence[str]]) -> "SetSystem":
        ground = [Element(i, lab) for i, lab in enumerate(labels)]
        by_label = {lab: i for i, lab in enumerate(labels)}
        members = []
        for p in paths:
            try:
                members.append(OrderedPath(by_label[x] for x in p))
            except KeyError as exc:
                raise StructuralError(f"path uses unknown label {exc.args[0]!r}") from None
        return cls(ground, "explicit", members=members)

    @classmethod
    def digraph(
        cls,
        nodes: Sequence[str],
        arcs: Sequence[tuple],
        s: str,
        t: str,
    ) -> "SetSystem":
        """Ground set = nodes followed by arcs; arc labels are derived as
        ``"tail->head"`` (suffixed ``#k`` for parallel arcs)."""
        if s == t:
            raise StructuralError("source and sink must differ")
        if s not in nodes or t not in nodes:
            raise StructuralError("source/sink must be listed nodes")
        ground = [Element(i, lab) for i, lab in enumerate(nodes)]
        node_ids = {lab: i for i, lab in enumerate(nodes)}
        seen = {}
        arc_list = []
        for tail, head in arcs:
            if tail not in node_ids or head not in node_ids:
                raise StructuralError(f"arc ({tail},{head}) uses unknown node")
            base = f"{tail}->{head}"
            seen[base] = seen.get(base, 0) + 1
            label = base if seen[base] == 1 else f"{base}#{seen[base]}"
            aid = len(ground)
            ground.append(Element(aid, label))
            arc_list.append((aid, node_ids[tail], node_ids[head]))
        return cls(
            ground,
            "digraph",
            node_ids=frozenset(node_ids.values()),
            arcs=arc_list,
            s=node_ids[s],
            t=node_ids[t],
        )

    @classmethod
    def poset(cls, labels: Sequence[str], covers: Sequence[tuple]) -> "SetSystem":
        ground = [Element(i, lab) for i, lab in enumerate(labels)]
        by_label = {lab: i for i, lab in enumerate(labels)}
        pairs = []
        for lo, hi in covers:
            if lo not in by_label or hi not in by_label:
                raise StructuralError(f"cover ({lo},{hi}) uses unknown label")
            pairs.append((by_label[lo], by_label[hi]))
        return cls(ground, "poset", covers=pairs)

    def _init_digraph(self, node_ids, arcs, s, t):
        self.node_ids = node_ids
        self.arcs = tuple(arcs)
        self.s = s
        self.t = t
        adj = {v: [] for v in node_ids}
        radj = {v: [] for v in node_ids}
        for aid, tail, head in arcs:
            adj[tail].append((aid, head))
            radj[head].append((aid, tail))
        for v in adj:
            adj[v].sort()
            radj[v].sort()
        self.adj = adj
        self.radj = radj

    def _init_poset(self, covers):
        n = len(self.ground)
        up = {v: [] for v in range(n)}
        down = {v: [] for v in range(n)}
        for lo, hi in covers:
            if lo == hi:
                raise StructuralError("covering relation cannot be reflexive")
            up[lo].append(hi)
            down[hi].append(lo)
        for v in range(n):
            up[v] = sorted(set(up[v]))
            down[v] = sorted(set(down[v]))
        # acyclicity check by iterated removal of sources
        indeg = {v: len(down[v]) for v in range(n)}
        queue = [v for v in range(n) if indeg[v] == 0]
        seen = 0
        while queue:
            v = queue.pop()
            seen += 1
            for w in up[v]:
                indeg[w] -= 1
                if indeg[w] == 0:
                    queue.append(w)
        if seen != n:
            raise StructuralError("covering relation contains a cycle")
        self.cover_up = up
        self.cover_down = down
        self.minimal_ids = tuple(v for v in range(n) if not down[v])
        self.maximal_ids = tuple(v for v in range(n) if not up[v])

    # -- lookups ---------------------------------------------------------

    def id_of(self, label: str) -> int:
        try:
            return self._by_label[label]
        except KeyError:
            raise StructuralError(f"unknown label {label!r}") from None

    def label_of(self, e: int) -> str:
        return self.ground[e].label

    def labels_of(self, path: OrderedPath) -> tuple:
        return tuple(self.ground[e].label for e in path)

    def path_of_labels(self, labels: Sequence[str]) -> OrderedPath:
        return OrderedPath(self.id_of(x) for x in labels)

    def __len__(self) -> int:
        return len(self.ground)

    # -- membership oracle ------------------------------------------------

    def find_member(self, allowed: Iterable[int]) -> Optional[OrderedPath]:
        """Return some member contained in ``allowed`` (with its internal
        order), or None.  Deterministic: search scans ascending ids."""
        allowed = frozenset(allowed)
        if not allowed <= self.all_ids:
            raise PreconditionError("allowed set contains unknown elements")
        if self.kind == "explicit":
            for p in self._members:
                if p.as_set <= allowed:
                    return p
            return None
        if self.kind == "digraph":
            return self._find_member_digraph(allowed)
        return self._find_member_poset(allowed)

    def _find_member_digraph(self, allowed) -> Optional[OrderedPath]:
        s, t = self.s, self.t
        if s not in allowed or t not in allowed:
            return None
        parent = {s: None}
        queue = deque([s])
        while queue:
            v = queue.popleft()
            if v == t:
                break
            for aid, head in self.adj[v]:
                if aid in allowed and head in allowed and head not in parent:
                    parent[head] = (v, aid)
                    queue.append(head)
        if t not in parent:
            return None
        seq = [t]
        v = t
        while parent[v] is not None:
            prev, aid = parent[v]
            seq.append(aid)
            seq.append(prev)
            v = prev
        seq.reverse()
        return OrderedPath(seq)

    def _find_member_poset(self, allowed) -> Optional[OrderedPath]:
        starts = [v for v in self.minimal_ids if v in allowed]
        maximal = set(self.maximal_ids)
        parent = {}
        queue = deque()
        for v in starts:
            parent[v] = None
            queue.append(v)
        goal = None
        while queue:
            v = queue.popleft()
            if v in maximal:
                goal = v
                break
            for w in self.cover_up[v]:
                if w in allowed and w not in parent:
                    parent[w] = v
                    queue.append(w)
        if goal is None:
            return None
        seq = []
        v = goal
        while v is not None:
            seq.append(v)
            v = parent[v]
        seq.reverse()
        return OrderedPath(seq)

    # -- enumeration -------------------------------------------------------

    def members(self, *, max_paths: Optional[int] = 200_000) -> list:
        """Enumerate the whole family (stored order for explicit backends,
        depth-first ascending-id order otherwise)."""
        if self.kind == "explicit":
            return list(self._members)
        out = []
        if self.kind == "digraph":
            self._enum_digraph(self.s, [self.s], {self.s}, out, max_paths)
        else:
            for v in self.minimal_ids:
                self._enum_poset(v, [v], out, max_paths)
        return out

    def _enum_digraph(self, v, seq, visited, out, cap):
        if cap is not None and len(out) >= cap:
            raise SizeGuardError(f"path enumeration exceeded cap of {cap}")
        if v == self.t:
            out.append(OrderedPath(seq))
            return
        for aid, head in self.adj[v]:
            if head not in visited:
                visited.add(head)
                seq.append(aid)
                seq.append(head)
                self._enum_digraph(head, seq, visited, out, cap)
                seq.pop()
                seq.pop()
                visited.remove(head)

    def _enum_poset(self, v, seq, out, cap):
        if cap is not None and len(out) >= cap:
            raise SizeGuardError(f"path enumeration exceeded cap of {cap}")
        if not self.cover_up[v]:
            out.append(OrderedPath(seq))
            return
        for w in self.cover_up[v]:
            seq.append(w)
            self._enum_poset(w, seq, out, cap)
            seq.pop()

    # -- splice -------------------------------------------------------------

    def cross(self, p: OrderedPath, q: OrderedPath, e: int) -> OrderedPath:
        """Splice: some member inside prefix(p, e) union suffix(q, e).

        The membership oracle realizes the choice, so the result is
        deterministic.  A missing member means the family violates the
        splice axiom and cannot be an abstract network.
        """
        if e not in p or e not in q:
            raise PreconditionError("splice element must lie on both paths")
        allowed = frozenset(p.prefix(e)) | frozenset(q.suffix(e))
        r = self.find_member(allowed)
        if r is None:
            raise StructuralError(
                f"splice axiom violated at element {e}: no member inside "
                f"prefix/suffix union"
            )
        if not r.as_set <= allowed:
            raise StructuralError("oracle returned member outside allowed set")
        return r

    # -- terminal structure --------------------------------------------------

    def common_terminals(self) -> tuple:
        """(source, sink) shared by every member, or (None, None).

        Digraph members always run source to sink; a poset needs a unique
        minimal and maximal element; explicit families are inspected.
        """
        if self.kind == "digraph":
            return self.s, self.t
        if self.kind == "poset":
            s = self.minimal_ids[0] if len(self.minimal_ids) == 1 else None
            t = self.maximal_ids[0] if len(self.maximal_ids) == 1 else None
            return (s, t) if (s is not None and t is not None) else (None, None)
        firsts = {p.first for p in self._members}
        lasts = {p.last for p in self._members}
        if len(firsts) == 1 and len(lasts) == 1:
            return next(iter(firsts)), next(iter(lasts))
        return None, None


class CountingSystem:
    """Delegating wrapper that counts membership-oracle calls."""

    def __init__(self, system: SetSystem):
        self.system = system
        self.calls = 0

    def __getattr__(self, name):
        return getattr(self.system, name)

    def __len__(self):
        return len(self.system)

    def find_member(self, allowed):
        self.calls += 1
        return self.system.find_member(allowed)


def check_condition_star(
    system: SetSystem,
    rho: Marginals,
    req: Requirement,
    *,
    guard: int = 20,
):
    """Check the per-path necessary condition: marginals on each member must
    sum to at least its requirement.

    Returns ``(True, None)`` or ``(False, witness_path)``.  With affine
    requirements this is a single shortest-path computation (weights
    rho + mu, threshold 1); per-path tables require enumeration and are
    guarded by ground-set size.
    """
    if isinstance(req, AffineRequirement):
        from .asp import shortest_path

        gamma = {e: rho.get(e) + req.get(e) for e in range(len(system))}
        res = shortest_path(system, gamma)
        if res is None:
            return True, None
        path, cost = res
        if cost < ONE:
            return False, path
        return True, None
    if len(system) > guard:
        raise UnsupportedCombinationError(
            "per-path requirement tables need an enumerable system "
            f"(ground set {len(system)} > guard {guard})"
        )
    for p in system.members():
        total = sum((rho.get(e) for e in p), ZERO)
        if total < req.pi(p):
            return False, p
    return True, None
