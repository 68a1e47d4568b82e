"""Feasible-decomposition engine.

Produces finite-support distributions over subsets of the ground set whose
per-element marginals match a prescribed vector exactly while every member of
the path system is hit with at least its required probability.

The construction places each element's inclusion window ``[alpha_e,
alpha_e + rho_e)`` inside the unit interval, where ``alpha_e`` is a truncated
shortest-prefix distance.  Sweeping a uniform threshold through the interval
partition induced by the window endpoints yields the distribution; its
support has at most ``2|E| + 1`` sets.

``brute_force_feasibility`` is the independent oracle for everything else
here: it solves the full subset LP exactly and shares no code path with the
threshold construction.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Union

from . import asp
from .core import (
    ONE,
    ZERO,
    AffineRequirement,
    Marginals,
    OrderedPath,
    Requirement,
    SetSystem,
    rat,
)
from .errors import (
    InfeasibleMarginalsError,
    PreconditionError,
    SizeGuardError,
    StructuralError,
)
from .lp import SimplexTableau

BRUTE_FORCE_MAX_ELEMENTS = 20


def _as_marginals(rho) -> Marginals:
    return rho if isinstance(rho, Marginals) else Marginals(rho)


def _as_affine(mu) -> AffineRequirement:
    return mu if isinstance(mu, AffineRequirement) else AffineRequirement(mu)


@dataclass(frozen=True)
class AlphaLabels:
    """Truncated shortest-prefix labels on the covered subset of elements."""

    alpha: dict
    covered: frozenset


class Decomposition:
    """Finite-support distribution over subsets, canonicalized.

    Duplicate sets are merged, zero-mass entries dropped, and the support is
    sorted by the subset's sorted id tuple; probabilities are positive and
    sum to exactly one.
    """

    __slots__ = ("support",)

    def __init__(self, pairs):
        merged = {}
        for subset, p in pairs:
            p = rat(p)
            if p == 0:
                continue
            if p < 0:
                raise StructuralError(f"negative probability {p}")
            key = frozenset(subset)
            merged[key] = merged.get(key, ZERO) + p
        total = sum(merged.values(), ZERO)
        if total != 1:
            raise StructuralError(f"probabilities sum to {total}, not 1")
        support = sorted(merged.items(), key=lambda kv: tuple(sorted(kv[0])))
        object.__setattr__(self, "support", tuple(support))

    def __setattr__(self, name, value):
        raise AttributeError("Decomposition is immutable")

    def __iter__(self):
        return iter(self.support)

    def __len__(self):
        return len(self.support)

    def __eq__(self, other):
        return isinstance(other, Decomposition) and self.support == other.support

    def __hash__(self):
        return hash(self.support)

    def __repr__(self):
        parts = ", ".join(f"{sorted(s)}: {p}" for s, p in self.support)
        return f"Decomposition({{{parts}}})"

    def marginal(self, e: int) -> Fraction:
        return sum((p for s, p in self.support if e in s), ZERO)

    def coverage(self, elems) -> Fraction:
        """Probability that the random set intersects ``elems``."""
        elems = frozenset(elems)
        return sum((p for s, p in self.support if s & elems), ZERO)

    def probability_of(self, subset) -> Fraction:
        key = frozenset(subset)
        for s, p in self.support:
            if s == key:
                return p
        return ZERO

    def sample(self, rng) -> frozenset:
        """Draw one set, using integer randomness only."""
        common = 1
        for _, p in self.support:
            common = common * p.denominator // math.gcd(common, p.denominator)
        ticket = rng.randrange(common)
        acc = 0
        for s, p in self.support:
            acc += p.numerator * (common // p.denominator)
            if ticket < acc:
                return s
        return self.support[-1][0]


def point_mass_empty() -> Decomposition:
    return Decomposition([(frozenset(), ONE)])


@dataclass(frozen=True)
class ProductDistribution:
    """Each element included independently; never enumerated explicitly."""

    rho: Marginals

    def coverage(self, elems) -> Fraction:
        miss = ONE
        for e in elems:
            miss *= ONE - self.rho.get(e)
        return ONE - miss

    def sample(self, rng) -> frozenset:
        out = []
        for e, p in sorted(self.rho.items()):
            if rng.randrange(p.denominator) < p.numerator:
                out.append(e)
        return frozenset(out)


def compute_alpha_abstract(
    system: SetSystem,
    rho,
    mu,
    *,
    trace: Optional[list] = None,
) -> AlphaLabels:
    """Greedy label construction through the membership oracle.

    Repeatedly finds a member minimizing the covered-weight sum; while that
    minimum stays below one, the first uncovered element on the minimizer
    receives a label equal to its prefix weight (truncated at ``1 - rho_e``)
    and joins the covered set.  Terminates after at most ``|E|`` rounds.
    """
    rho = _as_marginals(rho)
    mu = _as_affine(mu)
    n = len(system)
    weights = {e: rho.get(e) + mu.get(e) for e in range(n)}

    full = asp.shortest_path(system, weights)
    if full is None:
        return AlphaLabels({}, frozenset())
    if full[1] < ONE:
        raise InfeasibleMarginalsError(
            "marginals cannot cover every member", witness=full[0]
        )

    covered = set()
    alpha = {}
    for _ in range(n + 1):
        res = asp.restricted_shortest_path(system, covered, weights)
        path, val = res
        if val >= ONE:
            return AlphaLabels(alpha, frozenset(covered))
        e = None
        prefix_sum = ZERO
        for x in path:
            if x not in covered:
                e = x
                break
            prefix_sum += weights[x]
        if e is None:
            raise StructuralError("membership oracle returned a covered path")
        alpha[e] = min(prefix_sum, ONE - rho.get(e))
        covered.add(e)
        if trace is not None:
            trace.append({"event": "cover", "element": e, "alpha": alpha[e]})
    raise StructuralError("label loop failed to terminate within |E| rounds")


def compute_alpha_digraph(system: SetSystem, rho, mu) -> AlphaLabels:
    """Digraph fast path: one label-setting run instead of the oracle loop.

    Virtual arcs from every node to the sink (weight one, marginal zero) make
    each reachable prefix extendable, leaving the feasible decompositions
    unchanged since the virtual members carry vacuous requirements.  Labels
    are the resulting source distances with node and arc weights, truncated
    as usual; covered set = everything reachable from the source.
    """
    if system.kind != "digraph":
        raise PreconditionError("digraph labels need a digraph backend")
    rho = _as_marginals(rho)
    mu = _as_affine(mu)
    n = len(system)
    weights = [rho.get(e) + mu.get(e) for e in range(n)]

    full = asp.shortest_path(system, {e: weights[e] for e in range(n)})
    if full is not None and full[1] < ONE:
        raise InfeasibleMarginalsError(
            "marginals cannot cover every member", witness=full[0]
        )

    s, t = system.s, system.t
    dist = {}
    heap = [(ZERO, s)]
    while heap:
        d, v = heapq.heappop(heap)
        if v in dist:
            continue
        dist[v] = d
        through = d + weights[v]
        for aid, head in system.adj[v]:
            if head not in dist:
                heapq.heappush(heap, (through + weights[aid], head))
        if v != t and t not in dist:
            # virtual arc (v, t): weight one
            heapq.heappush(heap, (through + ONE, t))

    alpha = {}
    covered = set()
    for v in sorted(system.node_ids):
        if v in dist:
            alpha[v] = min(dist[v], ONE - rho.get(v))
            covered.add(v)
    for aid, tail, head in system.arcs:
        if tail in dist:
            alpha[aid] = min(dist[tail] + weights[tail], ONE - rho.get(aid))
            covered.add(aid)
    return AlphaLabels(alpha, frozenset(covered))


def alpha_to_distribution(labels: AlphaLabels, rho) -> Decomposition:
    """Interval sweep: breakpoints at window endpoints, one support set per
    interval, probability equal to interval length."""
    rho = _as_marginals(rho)
    windows = []
    for e in sorted(labels.covered):
        a = labels.alpha[e]
        r = rho.get(e)
        if not (ZERO <= a <= ONE - r):
            raise StructuralError(
                f"label for element {e} out of range: alpha={a}, rho={r}"
            )
        if r > 0:
            windows.append((e, a, a + r))
    points = {ZERO, ONE}
    for _, a, b in windows:
        points.add(a)
        points.add(b)
    cuts = sorted(points)
    pairs = []
    for lo, hi in zip(cuts, cuts[1:]):
        members = frozenset(e for e, a, b in windows if a <= lo < b)
        pairs.append((members, hi - lo))
    return Decomposition(pairs)


def extend_decomposition(x_small: Decomposition, rho_small, rho) -> Decomposition:
    """Raise marginals from ``rho_small`` up to ``rho`` without ever lowering
    any member's hit probability.

    An independent uniform threshold admits each deficient element with
    probability ``(rho_e - rho'_e) / (1 - rho'_e)``; the union with the base
    draw has the target marginals exactly.
    """
    rho_small = _as_marginals(rho_small)
    rho = _as_marginals(rho)
    elems = set(rho_small.rho) | set(rho.rho)
    for s, _ in x_small.support:
        elems |= s
    for e in sorted(elems):
        lo, hi = rho_small.get(e), rho.get(e)
        if lo > hi:
            raise PreconditionError(
                f"target marginal below current for element {e}: {hi} < {lo}"
            )
        if x_small.marginal(e) != lo:
            raise PreconditionError(
                f"base distribution marginal for element {e} is "
                f"{x_small.marginal(e)}, expected {lo}"
            )

    thresholds = {}
    for e in sorted(elems):
        lo, hi = rho_small.get(e), rho.get(e)
        if hi > lo:
            thresholds[e] = (hi - lo) / (ONE - lo)
    if not thresholds:
        return x_small

    points = sorted(set(thresholds.values()) | {ZERO, ONE})
    boosts = []  # (added set, probability)
    for lo, hi in zip(points, points[1:]):
        added = frozenset(e for e, th in thresholds.items() if th >= hi)
        boosts.append((added, hi - lo))
    pairs = []
    for s, p in x_small.support:
        for added, q in boosts:
            pairs.append((s | added, p * q))
    return Decomposition(pairs)


def independent_rounding(rho) -> ProductDistribution:
    """Product distribution with the given marginals."""
    return ProductDistribution(_as_marginals(rho))


@dataclass
class VerificationReport:
    marginal_residuals: dict
    mass_error: Fraction
    slacks: list
    min_slack: Optional[Fraction]
    argmin_path: Optional[OrderedPath]

    @property
    def passed(self) -> bool:
        return (
            self.mass_error == 0
            and all(v == 0 for v in self.marginal_residuals.values())
            and (self.min_slack is None or self.min_slack >= 0)
        )


def verify_decomposition(
    x: Union[Decomposition, list],
    rho,
    req: Requirement,
    system: SetSystem,
    *,
    max_paths: int = 200_000,
) -> VerificationReport:
    """Exact audit of a decomposition against marginals and requirements.

    Report-only: lists the marginal residuals (target zero), the mass error
    (target zero) and per-member slack ``coverage - requirement`` with the
    minimum and its witness.  Requires an enumerable family.  Accepts raw
    ``(subset, probability)`` pairs so that broken inputs can be audited
    rather than rejected at construction.
    """
    rho = _as_marginals(rho)
    if isinstance(x, Decomposition):
        pairs = list(x.support)
    else:
        pairs = [(frozenset(s), rat(p)) for s, p in x]
    mass = sum((p for _, p in pairs), ZERO)
    residuals = {}
    for e in range(len(system)):
        got = sum((p for s, p in pairs if e in s), ZERO)
        residuals[e] = got - rho.get(e)
    slacks = []
    min_slack = None
    argmin = None
    for path in system.members(max_paths=max_paths):
        pi = req.pi(path)
        cov = sum((p for s, p in pairs if s & path.as_set), ZERO)
        slack = cov - pi
        slacks.append((path, slack))
        if min_slack is None or slack < min_slack:
            min_slack, argmin = slack, path
    return VerificationReport(residuals, mass - ONE, slacks, min_slack, argmin)


def brute_force_feasibility(
    system: SetSystem,
    req: Requirement,
    rho,
    *,
    guard: int = BRUTE_FORCE_MAX_ELEMENTS,
) -> Optional[Decomposition]:
    """Solve the full subset LP exactly; the independent test oracle.

    Variables are all ``2^|E|`` subset indicators.  The LP is solved by exact
    column generation whose pricing step enumerates every subset, so the
    answer is identical to solving the dense LP while staying tractable.
    Returns a feasible decomposition or None.
    """
    n = len(system)
    if n > guard:
        raise SizeGuardError(f"brute force guarded to {guard} elements, got {n}")
    rho = _as_marginals(rho)
    paths = system.members()
    constraints = []  # (mask, pi) with pi > 0
    for p in paths:
        pi = req.pi(p)
        if pi > 0:
            mask = 0
            for e in p:
                mask |= 1 << e
            constraints.append((mask, pi))

    m_elem = n
    b = [rho.get(e) for e in range(n)] + [ONE] + [pi for _, pi in constraints]
    st = SimplexTableau(b)
    mass_row = m_elem
    path_row0 = m_elem + 1
    for i in range(m_elem):
        st.add_artificial(i)
    st.add_artificial(mass_row)
    for k in range(len(constraints)):
        st.add_surplus(path_row0 + k)
        st.add_artificial(path_row0 + k)
    st.init_basis()

    col_of_mask = {}

    def add_subset_column(mask: int) -> int:
        coeffs = {mass_row: ONE}
        mm = mask
        while mm:
            low = mm & -mm
            coeffs[low.bit_length() - 1] = ONE
            mm ^= low
        for k, (pm, _) in enumerate(constraints):
            if mask & pm:
                coeffs[path_row0 + k] = ONE
        j = st.add_column(coeffs, ZERO)
        col_of_mask[mask] = j
        return j

    total_masks = 1 << n
    for _ in range(total_masks + 10):
        status = st.solve()
        if status != "optimal":
            raise StructuralError("feasibility master cannot be unbounded")
        if st.zval == 0:
            break
        duals = st.duals()
        y_mass = duals[mass_row]
        best_score = None
        best_mask = None
        elem_score = [ZERO] * total_masks
        for mask in range(1, total_masks):
            low = mask & -mask
            elem_score[mask] = elem_score[mask ^ low] + duals[low.bit_length() - 1]
        for mask in range(total_masks):
            score = elem_score[mask] + y_mass
            for k, (pm, _) in enumerate(constraints):
                if mask & pm:
                    score += duals[path_row0 + k]
            if (best_score is None or score > best_score) and mask not in col_of_mask:
                best_score = score
                best_mask = mask
        if best_score is None or best_score <= 0:
            return None
        add_subset_column(best_mask)
    else:
        raise StructuralError("column generation failed to terminate")

    pairs = []
    for mask, j in col_of_mask.items():
        v = st.value_of(j)
        if v > 0:
            subset = frozenset(
                i for i in range(n) if mask & (1 << i)
            )
            pairs.append((subset, v))
    return Decomposition(pairs)


def decompose(system: SetSystem, rho, mu, *, trace: Optional[list] = None) -> Decomposition:
    """End-to-end pipeline for affine requirements.

    Digraph backends get the single label-setting run; everything else goes
    through the oracle loop.  Elements left uncovered are folded back in by
    the marginal-raising extension, so the result has the full target
    marginals.
    """
    rho = _as_marginals(rho)
    mu = _as_affine(mu)
    n = len(system)
    if system.find_member(system.all_ids) is None:
        base = point_mass_empty()
        return extend_decomposition(base, {}, rho)
    if system.kind == "digraph":
        labels = compute_alpha_digraph(system, rho, mu)
    else:
        labels = compute_alpha_abstract(system, rho, mu, trace=trace)
    rho_bar = Marginals({e: rho.get(e) for e in labels.covered})
    x_bar = alpha_to_distribution(labels, rho_bar)
    full = Marginals({e: rho.get(e) for e in range(n)})
    return extend_decomposition(x_bar, rho_bar, full)
