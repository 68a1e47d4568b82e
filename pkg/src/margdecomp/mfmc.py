"""Cover-based decompositions for general set systems at desk scale.

For systems whose covering polyhedron is integral, weights ``y = rho + mu``
split into a convex combination of cover indicator vectors plus a
nonnegative residual.  Drawing a cover from the combination and thinning it
with an independent threshold yields a random set whose marginals are
dominated by ``rho`` and whose miss probability per member is at most the
member's weight slack; raising the marginals back to ``rho`` finishes the
construction.

Failure of the convex split is meaningful, not an error path to hide: it
certifies that the weights lie outside the integral covering polyhedron, so
it surfaces as :class:`NotWeakMfmcError`.

Cover enumeration is exponential and guarded; within the guard an exact
basic LP solution automatically uses at most ``|E| + 1`` covers.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from . import asp
from .core import ONE, ZERO, AffineRequirement, Marginals, SetSystem, rat
from .decomp import Decomposition, extend_decomposition
from .errors import (
    InfeasibleMarginalsError,
    NotWeakMfmcError,
    SizeGuardError,
    StructuralError,
)
from .lp import SimplexTableau

COVER_ENUM_MAX_ELEMENTS = 20


@dataclass(frozen=True)
class CoverFamily:
    """Transversals of the family: every listed set meets every member."""

    covers: tuple
    minimal: tuple

    @classmethod
    def from_sets(cls, system: SetSystem, sets) -> "CoverFamily":
        members = system.members()
        covers = []
        flags = []
        for s in sets:
            s = frozenset(s)
            if any(not (s & p.as_set) for p in members):
                raise StructuralError(f"set {sorted(s)} misses a member")
            covers.append(s)
        for s in covers:
            is_min = True
            for e in sorted(s):
                smaller = s - {e}
                if all(smaller & p.as_set for p in members):
                    is_min = False
                    break
            flags.append(is_min)
        return cls(tuple(covers), tuple(flags))


def enumerate_minimal_covers(
    system: SetSystem, *, guard: int = COVER_ENUM_MAX_ELEMENTS
) -> CoverFamily:
    """All inclusion-minimal transversals, by guarded subset enumeration."""
    n = len(system)
    if n > guard:
        raise SizeGuardError(f"cover enumeration guarded to {guard} elements, got {n}")
    path_masks = []
    for p in system.members():
        mask = 0
        for e in p:
            mask |= 1 << e
        path_masks.append(mask)
    covers = []
    for mask in range(1 << n):
        if any(not (mask & pm) for pm in path_masks):
            continue
        minimal = True
        mm = mask
        while mm:
            low = mm & -mm
            mm ^= low
            reduced = mask ^ low
            if all(reduced & pm for pm in path_masks):
                minimal = False
                break
        if minimal:
            covers.append(frozenset(i for i in range(n) if mask & (1 << i)))
    return CoverFamily(tuple(covers), tuple(True for _ in covers))


@dataclass(frozen=True)
class CoverDecomposition:
    """Convex combination of cover indicators plus nonnegative residual."""

    lambdas: dict  # cover (frozenset) -> positive weight
    residual: dict  # element -> nonnegative remainder


def cover_decompose(y, covers: CoverFamily) -> Optional[CoverDecomposition]:
    """Write ``y`` as ``sum lambda_S 1_S + r`` with ``lambda`` a convex
    combination and ``r >= 0``, or return None if no such split exists."""
    y = {e: rat(v) for e, v in y.items()}
    if any(v < 0 for v in y.values()):
        raise StructuralError("weights must be nonnegative")
    elems = sorted(y)
    row_of = {e: i for i, e in enumerate(elems)}
    mass_row = len(elems)
    b = [y[e] for e in elems] + [ONE]
    st = SimplexTableau(b)
    lambda_cols = []
    for s in covers.covers:
        coeffs = {mass_row: ONE}
        usable = True
        for e in s:
            if e not in row_of:
                # element missing from y has weight zero, so no cover mass
                # can pass through it
                usable = False
                break
            coeffs[row_of[e]] = ONE
        if not usable:
            lambda_cols.append(None)
            continue
        lambda_cols.append(st.add_column(coeffs, ZERO))
    residual_cols = {e: st.add_column({row_of[e]: ONE}, ZERO) for e in elems}
    for i in range(len(b)):
        st.add_artificial(i)
    st.init_basis()
    status = st.solve()
    if status != "optimal":
        raise StructuralError("cover split master cannot be unbounded")
    if st.zval != 0:
        return None
    lambdas = {}
    for s, col in zip(covers.covers, lambda_cols):
        if col is None:
            continue
        v = st.value_of(col)
        if v > 0:
            lambdas[s] = lambdas.get(s, ZERO) + v
    residual = {e: st.value_of(residual_cols[e]) for e in elems}
    total = sum(lambdas.values(), ZERO)
    if total != 1:
        raise StructuralError("cover weights do not sum to one")
    for e in elems:
        built = sum((lam for s, lam in lambdas.items() if e in s), ZERO)
        if built + residual[e] != y[e]:
            raise StructuralError("cover split does not reproduce the weights")
    return CoverDecomposition(lambdas, residual)


def mfmc_pre_lift(system: SetSystem, rho, mu, *, covers: Optional[CoverFamily] = None):
    """The intersection construction before the marginal lift.

    Returns ``(distribution, rho_prime)`` where the distribution's marginals
    are ``min(rho_e, y_e - r_e)`` exactly.
    """
    rho = rho if isinstance(rho, Marginals) else Marginals(rho)
    mu = mu if isinstance(mu, AffineRequirement) else AffineRequirement(mu)
    n = len(system)

    res = asp.shortest_path(system, {e: rho.get(e) + mu.get(e) for e in range(n)})
    if res is not None and res[1] < ONE:
        raise InfeasibleMarginalsError(
            "marginals cannot cover every member", witness=res[0]
        )

    y = {e: rho.get(e) + mu.get(e) for e in range(n)}
    if covers is None:
        covers = enumerate_minimal_covers(system)
    split = cover_decompose(y, covers)
    if split is None:
        raise NotWeakMfmcError(
            "weights admit no convex cover decomposition: the system is not "
            "weak max-flow/min-cut (or the weights leave its covering "
            "polyhedron)",
            weights=y,
        )

    thresholds = {}
    for e in range(n):
        avail = y[e] - split.residual.get(e, ZERO)
        if avail > 0:
            thresholds[e] = min(rho.get(e) / avail, ONE)
    points = sorted(set(thresholds.values()) | {ZERO, ONE})
    slabs = []  # (kept elements, length)
    for lo, hi in zip(points, points[1:]):
        kept = frozenset(e for e, th in thresholds.items() if th >= hi)
        slabs.append((kept, hi - lo))

    pairs = []
    for cover, lam in sorted(split.lambdas.items(), key=lambda kv: tuple(sorted(kv[0]))):
        for kept, length in slabs:
            pairs.append((cover & kept, lam * length))
    dist = Decomposition(pairs)
    rho_prime = {e: min(rho.get(e), y[e] - split.residual.get(e, ZERO)) for e in range(n)}
    return dist, rho_prime


def mfmc_decomposition(
    system: SetSystem, rho, mu, *, covers: Optional[CoverFamily] = None
) -> Decomposition:
    """Cover-route feasible decomposition with exact target marginals."""
    rho = rho if isinstance(rho, Marginals) else Marginals(rho)
    pre, rho_prime = mfmc_pre_lift(system, rho, mu, covers=covers)
    n = len(system)
    full = {e: rho.get(e) for e in range(n)}
    return extend_decomposition(pre, rho_prime, full)
