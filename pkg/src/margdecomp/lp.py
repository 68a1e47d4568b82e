"""Exact rational linear programming and dense linear algebra.

A dense tableau simplex with Bland's anti-cycling rule, running entirely on
:class:`fractions.Fraction`.  Instances here are desk scale (at most a few
hundred rows and columns, including generated ones), so simplicity and
exactness win over sparse machinery.

Two layers:

* :class:`SimplexTableau` -- equality-form core (``min c.x, Ax = b, x >= 0``
  with ``b >= 0``) that supports adding columns after a solve.  Column
  generation clients build on this to avoid re-solving masters from scratch.
* :func:`solve_lp` -- general relations, senses and variable bounds, with
  duals per original constraint.

:func:`solve_linear_system` performs exact Gauss-Jordan elimination and
returns either a particular solution plus a nullspace basis or an
inconsistency certificate ``y`` with ``y.A = 0`` and ``y.b != 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

from .core import ONE, ZERO, rat
from .errors import StructuralError

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


class SimplexTableau:
    """Dense exact simplex core in equality form.

    Usage: create with the (nonnegative) right-hand side, add structural
    columns via :meth:`add_column`, give every row a unit column
    (:meth:`add_slack` or :meth:`add_artificial`), then :meth:`init_basis`
    and :meth:`solve`.  Costs can be swapped with :meth:`set_costs` for a
    second phase.  Columns added after a solve are transformed through the
    current basis, so the solver continues warm.
    """

    def __init__(self, b: Sequence[Fraction]):
        self.b = [rat(x) for x in b]
        if any(x < 0 for x in self.b):
            raise StructuralError("tableau right-hand side must be nonnegative")
        self.m = len(self.b)
        self.rows = [[] for _ in range(self.m)]
        self.cost = []
        self.zrow = []
        self.zval = ZERO
        self.basis = [None] * self.m
        self.unit_col = [None] * self.m
        self.artificials = set()
        self.blocked = set()
        self._ready = False

    @property
    def ncols(self) -> int:
        return len(self.cost)

    # -- construction -----------------------------------------------------

    def add_column(self, coeffs: dict, cost) -> int:
        """Add a column given by ``{row_index: coefficient}`` in original row
        coordinates; returns its index.  After ``init_basis`` the column is
        expressed through the current basis inverse."""
        cost = rat(cost)
        j = self.ncols
        if not self._ready:
            for i in range(self.m):
                self.rows[i].append(rat(coeffs.get(i, 0)))
            self.cost.append(cost)
            return j
        transformed = [ZERO] * self.m
        for i, a in coeffs.items():
            a = rat(a)
            if a == 0:
                continue
            uc = self.unit_col[i]
            for r in range(self.m):
                v = self.rows[r][uc]
                if v:
                    transformed[r] += a * v
        reduced = cost
        for i, a in coeffs.items():
            if a:
                reduced -= rat(a) * self.dual(i)
        for r in range(self.m):
            self.rows[r].append(transformed[r])
        self.cost.append(cost)
        self.zrow.append(reduced)
        return j

    def add_slack(self, row: int) -> int:
        j = self.add_column({row: ONE}, ZERO)
        self.unit_col[row] = j
        return j

    def add_surplus(self, row: int) -> int:
        return self.add_column({row: -ONE}, ZERO)

    def add_artificial(self, row: int) -> int:
        j = self.add_column({row: ONE}, ONE)
        self.unit_col[row] = j
        self.artificials.add(j)
        return j

    def init_basis(self):
        """Adopt the unit columns as the starting basis and price it out."""
        if any(uc is None for uc in self.unit_col):
            raise StructuralError("every row needs a slack or artificial column")
        for i in range(self.m):
            self.basis[i] = self.unit_col[i]
        self._recompute_pricing()
        self._ready = True

    def set_costs(self, new_cost: Sequence[Fraction], *, block_artificials=True):
        """Swap the objective (e.g. phase transition) and re-price."""
        if len(new_cost) != self.ncols:
            raise StructuralError("cost vector length mismatch")
        self.cost = [rat(c) for c in new_cost]
        if block_artificials:
            self.blocked |= self.artificials
        self._recompute_pricing()

    def _recompute_pricing(self):
        n = self.ncols
        cb = [self.cost[self.basis[i]] for i in range(self.m)]
        zrow = list(self.cost)
        zval = ZERO
        for i in range(self.m):
            ci = cb[i]
            if ci:
                zval += ci * self.b[i]
                row = self.rows[i]
                for j in range(n):
                    if row[j]:
                        zrow[j] -= ci * row[j]
        self.zrow = zrow
        self.zval = zval

    # -- solving ----------------------------------------------------------

    def _pivot(self, r: int, c: int):
        rows, b, zrow = self.rows, self.b, self.zrow
        piv = rows[r][c]
        if piv != 1:
            inv = 1 / piv
            rows[r] = [v * inv for v in rows[r]]
            b[r] *= inv
        prow = rows[r]
        brow = b[r]
        for i in range(self.m):
            if i == r:
                continue
            f = rows[i][c]
            if f:
                rows[i] = [x - f * y for x, y in zip(rows[i], prow)]
                b[i] -= f * brow
        f = zrow[c]
        if f:
            self.zrow = [x - f * y for x, y in zip(zrow, prow)]
            self.zval -= f * brow
        leaving = self.basis[r]
        if leaving in self.artificials:
            self.blocked.add(leaving)
        self.basis[r] = c

    def solve(self) -> str:
        """Bland's rule primal simplex from the current basis.

        Entering: smallest column index with negative reduced cost.
        Leaving: minimum ratio, ties to the smallest basic column index.
        Basic artificials sitting at zero are expelled on contact so they can
        never turn positive again.
        """
        if not self._ready:
            raise StructuralError("init_basis must be called before solve")
        rows, b = self.rows, self.b
        while True:
            entering = None
            for j, rc in enumerate(self.zrow):
                if rc < 0 and j not in self.blocked:
                    entering = j
                    break
            if entering is None:
                return OPTIMAL
            best_ratio = None
            best_row = None
            best_basic = None
            for i in range(self.m):
                a = rows[i][entering]
                if a > 0:
                    ratio = b[i] / a
                elif a != 0 and b[i] == 0 and self.basis[i] in self.artificials:
                    ratio = ZERO
                else:
                    continue
                if (
                    best_ratio is None
                    or ratio < best_ratio
                    or (ratio == best_ratio and self.basis[i] < best_basic)
                ):
                    best_ratio, best_row, best_basic = ratio, i, self.basis[i]
            if best_row is None:
                return UNBOUNDED
            self._pivot(best_row, entering)

    # -- inspection ---------------------------------------------------------

    def dual(self, row: int) -> Fraction:
        uc = self.unit_col[row]
        return self.cost[uc] - self.zrow[uc]

    def duals(self) -> list:
        return [self.dual(i) for i in range(self.m)]

    def values(self) -> list:
        vals = [ZERO] * self.ncols
        for i in range(self.m):
            vals[self.basis[i]] = self.b[i]
        return vals

    def value_of(self, col: int) -> Fraction:
        for i in range(self.m):
            if self.basis[i] == col:
                return self.b[i]
        return ZERO


@dataclass
class LinearProgram:
    """min/max ``objective . x`` subject to rows ``(coeffs, rel, rhs)`` with
    rel one of ``<=``, ``=``, ``>=`` and per-variable bounds.

    Bounds default to ``[0, +inf)``; a lower bound of None means free.
    """

    objective: list
    sense: str = "min"
    constraints: list = field(default_factory=list)
    lower: Optional[list] = None
    upper: Optional[list] = None

    def __post_init__(self):
        self.objective = [rat(c) for c in self.objective]
        if self.sense not in ("min", "max"):
            raise StructuralError(f"sense must be min or max, got {self.sense!r}")
        n = len(self.objective)
        normalized = []
        for coeffs, rel, rhs in self.constraints:
            if len(coeffs) != n:
                raise StructuralError("constraint width does not match variables")
            if rel not in ("<=", "=", ">="):
                raise StructuralError(f"unknown relation {rel!r}")
            normalized.append(([rat(c) for c in coeffs], rel, rat(rhs)))
        self.constraints = normalized
        if self.lower is None:
            self.lower = [ZERO] * n
        else:
            self.lower = [None if l is None else rat(l) for l in self.lower]
        if self.upper is None:
            self.upper = [None] * n
        else:
            self.upper = [None if u is None else rat(u) for u in self.upper]
        if len(self.lower) != n or len(self.upper) != n:
            raise StructuralError("bound vector length mismatch")

    @property
    def nvars(self) -> int:
        return len(self.objective)


@dataclass
class LpSolution:
    status: str
    objective: Optional[Fraction]
    values: list
    duals: list
    basis: list


def solve_lp(lp: LinearProgram) -> LpSolution:
    """Exact optimum of a general-form LP with duals per original row.

    Internally: minimize, shift finite lower bounds to zero, split free
    variables, turn upper bounds into extra rows, standardize to equalities
    with nonnegative right-hand sides, then two-phase simplex.
    """
    n = lp.nvars
    minimize = lp.sense == "min"
    c = lp.objective if minimize else [-x for x in lp.objective]

    # variable transforms: x_j = shift_j + pos_j - neg_j
    col_pos = []
    col_neg = []
    shift = []
    ncols = 0
    for j in range(n):
        l = lp.lower[j]
        if l is None:
            col_pos.append(ncols)
            col_neg.append(ncols + 1)
            shift.append(ZERO)
            ncols += 2
        else:
            col_pos.append(ncols)
            col_neg.append(None)
            shift.append(l)
            ncols += 1

    rows = []  # (dense internal coeffs, rel, rhs, orig_index or None)
    for k, (coeffs, rel, rhs) in enumerate(lp.constraints):
        internal = [ZERO] * ncols
        adj = rhs
        for j in range(n):
            a = coeffs[j]
            if a == 0:
                continue
            internal[col_pos[j]] += a
            if col_neg[j] is not None:
                internal[col_neg[j]] -= a
            adj -= a * shift[j]
        rows.append((internal, rel, adj, k))
    for j in range(n):
        u = lp.upper[j]
        if u is None:
            continue
        l = lp.lower[j]
        if l is not None and u < l:
            return LpSolution(INFEASIBLE, None, [], [], [])
        internal = [ZERO] * ncols
        internal[col_pos[j]] = ONE
        if col_neg[j] is not None:
            internal[col_neg[j]] = -ONE
        adj = u - (shift[j])
        rows.append((internal, "<=", adj, None))

    flips = []
    b = []
    rels = []
    for internal, rel, rhs, _ in rows:
        if rhs < 0:
            flips.append(-ONE)
            b.append(-rhs)
            rels.append({"<=": ">=", ">=": "<=", "=": "="}[rel])
        else:
            flips.append(ONE)
            b.append(rhs)
            rels.append(rel)

    st = SimplexTableau(b)
    for col in range(ncols):
        coeffs = {}
        for i, (internal, _, _, _) in enumerate(rows):
            v = internal[col] * flips[i]
            if v:
                coeffs[i] = v
        st.add_column(coeffs, ZERO)
    descr = {}
    for i, rel in enumerate(rels):
        if rel == "<=":
            descr[st.add_slack(i)] = ("slack", i)
        elif rel == ">=":
            descr[st.add_surplus(i)] = ("surplus", i)
            descr[st.add_artificial(i)] = ("artificial", i)
        else:
            descr[st.add_artificial(i)] = ("artificial", i)
    st.init_basis()

    need_phase1 = bool(st.artificials)
    if need_phase1:
        phase1 = [ONE if j in st.artificials else ZERO for j in range(st.ncols)]
        st.set_costs(phase1, block_artificials=False)
        status = st.solve()
        if status != OPTIMAL:
            raise StructuralError("phase-1 simplex cannot be unbounded")
        if st.zval != 0:
            return LpSolution(INFEASIBLE, None, [], [], [])
    phase2 = [ZERO] * st.ncols
    for j in range(n):
        phase2[col_pos[j]] += c[j]
        if col_neg[j] is not None:
            phase2[col_neg[j]] -= c[j]
    st.set_costs(phase2, block_artificials=True)
    status = st.solve()
    if status == UNBOUNDED:
        return LpSolution(UNBOUNDED, None, [], [], [])

    vals_internal = st.values()
    values = []
    for j in range(n):
        v = shift[j] + vals_internal[col_pos[j]]
        if col_neg[j] is not None:
            v -= vals_internal[col_neg[j]]
        values.append(v)
    objective = sum((lp.objective[j] * values[j] for j in range(n)), ZERO)

    y_int = st.duals()
    # internal strong duality: the dual price of the internal rhs must equal
    # the internal optimum, exactly
    dual_check = sum((y_int[i] * st.b[i] for i in range(st.m)), ZERO)
    if dual_check != st.zval:
        raise StructuralError("internal duality check failed")
    duals = []
    sense_flip = ONE if minimize else -ONE
    for i, (internal, rel, rhs, orig) in enumerate(rows):
        if orig is not None:
            duals.append(y_int[i] * flips[i] * sense_flip)
    basis = []
    for i in range(st.m):
        col = st.basis[i]
        if col in descr:
            basis.append(descr[col])
        else:
            for j in range(n):
                if col == col_pos[j] or col == col_neg[j]:
                    basis.append(("var", j))
                    break
    return LpSolution(OPTIMAL, objective, values, duals, basis)


def matrix_rank(a_rows: Sequence[Sequence]) -> int:
    """Exact rank by Gaussian elimination."""
    rows = [[rat(x) for x in r] for r in a_rows]
    if not rows:
        return 0
    n = len(rows[0])
    rank = 0
    for col in range(n):
        sel = None
        for i in range(rank, len(rows)):
            if rows[i][col] != 0:
                sel = i
                break
        if sel is None:
            continue
        rows[rank], rows[sel] = rows[sel], rows[rank]
        piv = rows[rank][col]
        rows[rank] = [v / piv for v in rows[rank]]
        for i in range(len(rows)):
            if i != rank and rows[i][col] != 0:
                f = rows[i][col]
                rows[i] = [x - f * y for x, y in zip(rows[i], rows[rank])]
        rank += 1
        if rank == len(rows):
            break
    return rank


@dataclass
class LinearSystemResult:
    status: str  # 'solved' | 'inconsistent'
    solution: Optional[list]
    nullspace: list
    certificate: Optional[list]


def solve_linear_system(a_rows: Sequence[Sequence], b: Sequence) -> LinearSystemResult:
    """Exact Gauss-Jordan elimination of ``A x = b``.

    Returns a particular solution (free variables set to 0) and a nullspace
    basis, or an inconsistency certificate.  Pivots are chosen as the first
    exactly-nonzero entry in each column, which is deterministic.
    """
    m = len(a_rows)
    n = len(a_rows[0]) if m else 0
    rows = []
    for r in a_rows:
        if len(r) != n:
            raise StructuralError("ragged matrix")
        rows.append([rat(x) for x in r])
    if len(b) != m:
        raise StructuralError("rhs length mismatch")
    rhs = [rat(x) for x in b]
    # carry an identity block to read off row multipliers
    mult = [[ONE if i == k else ZERO for k in range(m)] for i in range(m)]

    pivots = []  # (row, col)
    prow = 0
    for col in range(n):
        sel = None
        for i in range(prow, m):
            if rows[i][col] != 0:
                sel = i
                break
        if sel is None:
            continue
        rows[prow], rows[sel] = rows[sel], rows[prow]
        mult[prow], mult[sel] = mult[sel], mult[prow]
        rhs[prow], rhs[sel] = rhs[sel], rhs[prow]
        piv = rows[prow][col]
        if piv != 1:
            inv = 1 / piv
            rows[prow] = [v * inv for v in rows[prow]]
            mult[prow] = [v * inv for v in mult[prow]]
            rhs[prow] *= inv
        for i in range(m):
            if i != prow and rows[i][col] != 0:
                f = rows[i][col]
                rows[i] = [x - f * y for x, y in zip(rows[i], rows[prow])]
                mult[i] = [x - f * y for x, y in zip(mult[i], mult[prow])]
                rhs[i] -= f * rhs[prow]
        pivots.append((prow, col))
        prow += 1
        if prow == m:
            break

    for i in range(prow, m):
        if rhs[i] != 0:
            return LinearSystemResult("inconsistent", None, [], mult[i])

    solution = [ZERO] * n
    pivot_cols = set()
    for r, c in pivots:
        solution[c] = rhs[r]
        pivot_cols.add(c)
    nullspace = []
    for f in range(n):
        if f in pivot_cols:
            continue
        vec = [ZERO] * n
        vec[f] = ONE
        for r, c in pivots:
            if rows[r][f] != 0:
                vec[c] = -rows[r][f]
        nullspace.append(vec)
    return LinearSystemResult("solved", solution, nullspace, None)
