"""Flow-interdiction security game: LP pair, equilibrium assembly, audit.

A routing entity sends flow along members of the system subject to two
capacity vectors (physical capacity ``u`` and interdiction cost ``d``); an
interdictor picks a random subset of elements to inspect.  One linear
program maximizes profitable flow, its dual prices the capacity rows; the
dual prices double as inspection marginals, and a feasible decomposition of
those marginals is an equilibrium inspection strategy.

The flow LP is solved by column generation: pricing asks for a member
minimizing transportation cost plus current dual prices, one shortest-path
call per round, and terminates on an exact test, which simultaneously
certifies the dual for every member of the family.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from . import asp
from .core import ONE, ZERO, Marginals, OrderedPath, SetSystem, rat
from .decomp import Decomposition, decompose
from .errors import PreconditionError, SizeGuardError, StructuralError
from .lp import OPTIMAL, SimplexTableau

VERIFY_MAX_ELEMENTS = 14


def _full_vector(values, n, what) -> dict:
    out = {}
    for e in range(n):
        v = rat(values.get(e, 0)) if values else ZERO
        if v < 0:
            raise StructuralError(f"{what} must be nonnegative, got {v} on {e}")
        out[e] = v
    return out


@dataclass(frozen=True)
class GameInstance:
    """System plus capacities ``u``, transportation costs ``c`` and
    interdiction costs ``d`` (all per element, nonnegative)."""

    system: SetSystem
    u: dict
    c: dict
    d: dict

    def __init__(self, system: SetSystem, u, c, d):
        n = len(system)
        object.__setattr__(self, "system", system)
        object.__setattr__(self, "u", _full_vector(u, n, "capacity"))
        object.__setattr__(self, "c", _full_vector(c, n, "transportation cost"))
        object.__setattr__(self, "d", _full_vector(d, n, "interdiction cost"))

    def profit(self, path: OrderedPath) -> Fraction:
        """Per-unit flow profit of a member: one minus its transport cost."""
        return ONE - sum((self.c[e] for e in path), ZERO)


@dataclass
class GameSolution:
    value: Fraction
    flow: dict  # OrderedPath -> positive Fraction
    eta: dict
    rho_star: dict
    sigma_r: tuple  # ((flow dict, probability),)
    sigma_i: Decomposition


def solve_lps(instance: GameInstance):
    """Column generation for the flow LP; duals give the inspection LP.

    Returns ``(flow, eta, rho_star, value)`` with exact strong duality:
    ``value == sum(u*eta) + sum(d*rho_star)``.  The termination test proves
    the dual feasible for every member, not just generated ones.
    """
    system = instance.system
    n = len(system)
    b = [instance.u[e] for e in range(n)] + [instance.d[e] for e in range(n)]
    st = SimplexTableau(b)
    for i in range(2 * n):
        st.add_slack(i)
    st.init_basis()

    columns = {}  # OrderedPath -> column index
    for _ in range(4 ** (n + 2)):
        status = st.solve()
        if status != OPTIMAL:
            raise StructuralError("capacity-bounded flow master cannot be unbounded")
        y = st.duals()
        gamma = {e: instance.c[e] - y[e] - y[n + e] for e in range(n)}
        # duals of <= rows in the internal minimization are nonpositive,
        # so these costs stay nonnegative
        priced = asp.shortest_path(system, gamma)
        if priced is None:
            break
        path, cost = priced
        if cost >= ONE:
            break
        if path in columns:
            raise StructuralError("pricing returned an optimal column again")
        coeffs = {}
        for e in path:
            coeffs[e] = ONE
            coeffs[n + e] = ONE
        columns[path] = st.add_column(coeffs, -instance.profit(path))
    else:
        raise StructuralError("column generation failed to terminate")

    value = -st.zval
    flow = {}
    for path, col in columns.items():
        v = st.value_of(col)
        if v > 0:
            flow[path] = v
    y = st.duals()
    eta = {e: -y[e] for e in range(n)}
    rho_star = {e: -y[n + e] for e in range(n)}
    dual_value = sum(
        (instance.u[e] * eta[e] + instance.d[e] * rho_star[e] for e in range(n)),
        ZERO,
    )
    if dual_value != value:
        raise StructuralError("strong duality violated in the LP pair")
    return flow, eta, rho_star, value


def build_equilibrium(instance: GameInstance, flow, eta, rho_star, value) -> GameSolution:
    """Assemble mixed strategies from an optimal LP pair.

    The inspection side decomposes the dual marginals for the affine
    requirement built from transport costs plus flow-capacity prices.  Basic
    duals can exceed one on elements whose capacity or interdiction cost is
    zero; trimming them to one preserves optimality and feasibility, and a
    weight trimmed to one makes every member through it exempt, so the
    decomposition target is unchanged.
    """
    system = instance.system
    n = len(system)
    rho_hat = {e: min(rho_star[e], ONE) for e in range(n)}
    mu = {e: min(instance.c[e] + eta[e], ONE) for e in range(n)}

    trimmed_value = sum(
        (instance.u[e] * eta[e] + instance.d[e] * rho_hat[e] for e in range(n)),
        ZERO,
    )
    if trimmed_value != value:
        raise StructuralError("marginal trim changed the objective")
    check = asp.shortest_path(system, {e: rho_hat[e] + mu[e] for e in range(n)})
    if check is not None and check[1] < ONE:
        raise StructuralError("dual solution violates the covering condition")

    for e in range(n):
        load = sum((f for p, f in flow.items() if e in p), ZERO)
        if load > instance.u[e] or load > instance.d[e]:
            raise StructuralError(f"flow exceeds a capacity row on element {e}")

    sigma_i = decompose(system, rho_hat, mu)
    return GameSolution(
        value=value,
        flow=dict(flow),
        eta=dict(eta),
        rho_star=rho_hat,
        sigma_r=((dict(flow), ONE),),
        sigma_i=sigma_i,
    )


def solve_game(instance: GameInstance) -> GameSolution:
    """Convenience wrapper: LP pair, then equilibrium assembly."""
    flow, eta, rho_star, value = solve_lps(instance)
    return build_equilibrium(instance, flow, eta, rho_star, value)


@dataclass
class EquilibriumReport:
    router_payoff: Fraction
    interdictor_payoff: Fraction
    router_best_response: Fraction
    interdictor_best_response: Fraction

    @property
    def router_improvement(self) -> Fraction:
        return self.router_best_response - self.router_payoff

    @property
    def interdictor_improvement(self) -> Fraction:
        return self.interdictor_best_response - self.interdictor_payoff

    @property
    def passed(self) -> bool:
        return self.router_improvement == 0 and self.interdictor_improvement == 0


def verify_equilibrium(
    instance: GameInstance,
    solution: GameSolution,
    *,
    guard: int = VERIFY_MAX_ELEMENTS,
) -> EquilibriumReport:
    """Exhaustive exact equilibrium audit.

    Router deviations: one LP over every enumerated member with coefficients
    equal to expected survival minus transport cost.  Interdictor deviations:
    every subset of the ground set.  Passes only when neither side can gain,
    with zero tolerance.
    """
    system = instance.system
    n = len(system)
    if n > guard:
        raise SizeGuardError(f"equilibrium audit guarded to {guard} elements, got {n}")
    paths = system.members()
    sigma_i = solution.sigma_i

    survival = {}
    for p in paths:
        survival[p] = ONE - sigma_i.coverage(p.as_set)

    flow = solution.flow
    router_payoff = sum(
        (f * (survival[p] - (ONE - instance.profit(p))) for p, f in flow.items()),
        ZERO,
    )

    # router best response: maximize sum q_P f_P under both capacity rows
    b = [instance.u[e] for e in range(n)] + [instance.d[e] for e in range(n)]
    st = SimplexTableau(b)
    for i in range(2 * n):
        st.add_slack(i)
    cols = []
    for p in paths:
        coeffs = {}
        for e in p:
            coeffs[e] = ONE
            coeffs[n + e] = ONE
        q = survival[p] - (ONE - instance.profit(p))
        cols.append(st.add_column(coeffs, -q))
    st.init_basis()
    if st.solve() != OPTIMAL:
        raise StructuralError("router best-response LP cannot be unbounded")
    router_best = -st.zval

    flow_masks = []
    for p, f in flow.items():
        mask = 0
        for e in p:
            mask |= 1 << e
        flow_masks.append((mask, f))
    d_sum = [ZERO] * (1 << n)
    for mask in range(1, 1 << n):
        low = mask & -mask
        d_sum[mask] = d_sum[mask ^ low] + instance.d[low.bit_length() - 1]

    def interdictor_payoff_of(mask: int) -> Fraction:
        hit = sum((f for pm, f in flow_masks if pm & mask), ZERO)
        return hit - d_sum[mask]

    interdictor_payoff = ZERO
    for subset, prob in sigma_i.support:
        mask = 0
        for e in subset:
            mask |= 1 << e
        interdictor_payoff += prob * interdictor_payoff_of(mask)

    interdictor_best = None
    for mask in range(1 << n):
        v = interdictor_payoff_of(mask)
        if interdictor_best is None or v > interdictor_best:
            interdictor_best = v

    return EquilibriumReport(
        router_payoff=router_payoff,
        interdictor_payoff=interdictor_payoff,
        router_best_response=router_best,
        interdictor_best_response=interdictor_best,
    )


def minimalize_rho(instance: GameInstance, eta, rho_star) -> dict:
    """Lower the inspection marginals until every positive one lies on a
    tight member, preserving optimality.

    One pricing call per element decides the exact largest admissible
    decrease: evaluate the cheapest member after a full decrease; if it
    stays above the threshold the marginal drops to zero, otherwise the gap
    pins the new value.
    """
    system = instance.system
    n = len(system)
    rho = {e: rat(rho_star.get(e, 0)) for e in range(n)}
    if system.find_member(system.all_ids) is None:
        return {e: ZERO for e in range(n)}
    for e in range(n):
        if rho[e] <= 0:
            continue
        old = rho[e]
        trial = dict(rho)
        trial[e] = ZERO
        gamma = {f: instance.c[f] + rat(eta.get(f, 0)) + trial[f] for f in range(n)}
        path, val = asp.shortest_path(system, gamma)
        if val >= ONE:
            delta = old
            rho[e] = ZERO
        else:
            delta = val + old - ONE
            if delta < 0:
                raise StructuralError("marginals were not feasible to begin with")
            rho[e] = ONE - val
        if delta > 0 and instance.d[e] != 0:
            raise StructuralError(
                "optimal marginals admit a paid decrease; duals were not optimal"
            )
    return rho
