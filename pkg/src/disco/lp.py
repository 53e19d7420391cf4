"""Exact rational linear programming over systems of affine constraints.

Constraints are ``a.x + c >= 0`` (or ``< 0`` when strict) over free variables
``x``. The solver is a dictionary simplex with Bland's rule, run in gmpy2
``mpq`` arithmetic:

1. each free variable is pivoted into the basis once and never leaves it,
   which leaves an LP over the slack variables only;
2. phase one adds a single artificial variable when the slack dictionary is
   not primal feasible;
3. phase two minimises the objective.

Strict constraints are decided by maximising a common margin ``d`` with
``e <= -d`` for every strict ``e < 0``; the system is feasible iff the optimum
margin is positive.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from gmpy2 import mpq

from .affine import AffineForm, LinearConstraint, box_constraints

_ZERO = mpq(0)


@dataclass(frozen=True)
class ConstraintSystem:
    """Conjunction of linear constraints over ``dim`` input variables.

    ``tags`` records where each constraint came from: ``("domain",)``,
    ``("neuron", index, state)`` or ``("property",)``.
    """

    dim: int
    constraints: tuple[LinearConstraint, ...] = ()
    tags: tuple[tuple, ...] = ()

    def __post_init__(self):
        if len(self.tags) != len(self.constraints):
            object.__setattr__(self, "tags", tuple(self.tags) + (("domain",),) * (len(self.constraints) - len(self.tags)))
        for c in self.constraints:
            if c.form.dim != self.dim:
                raise ValueError(f"constraint of dimension {c.form.dim} in a {self.dim}-dimensional system")

    @classmethod
    def box(cls, lo: Sequence, hi: Sequence, tag=("domain",)) -> "ConstraintSystem":
        cons = box_constraints(lo, hi)
        return cls(len(lo), tuple(cons), (tag,) * len(cons))

    def add(self, constraint: LinearConstraint, tag=("property",)) -> "ConstraintSystem":
        if tag[0] == "neuron" and any(t[:2] == tag[:2] for t in self.tags):
            raise ValueError(f"duplicate constraint for neuron {tag[1]}")
        return ConstraintSystem(self.dim, self.constraints + (constraint,), self.tags + (tag,))

    def extend(self, other: "ConstraintSystem") -> "ConstraintSystem":
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        return ConstraintSystem(self.dim, self.constraints + other.constraints, self.tags + other.tags)

    def closure(self) -> "ConstraintSystem":
        return ConstraintSystem(self.dim, tuple(c.closure() for c in self.constraints), self.tags)

    def satisfied_by(self, x: Sequence) -> bool:
        return all(c.holds(x) for c in self.constraints)

    @property
    def has_strict(self) -> bool:
        return any(c.strict for c in self.constraints)


@dataclass
class LpOutcome:
    status: str  # "optimal" | "feasible" | "infeasible" | "unbounded"
    point: tuple[Fraction, ...] | None = None
    value: Fraction | None = None
    pivots: int = field(default=0, compare=False)

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "feasible")


class UnboundedError(RuntimeError):
    """An LP that callers guarantee to be bounded turned out unbounded."""


def _frac(q) -> Fraction:
    return Fraction(int(q.numerator), int(q.denominator))


class _Dictionary:
    """Simplex dictionary: every basic variable = const + sum(coef * nonbasic)."""

    def __init__(self, rows, consts, obj, obj_const, n_free):
        # Variables 0..n_free-1 are free; n_free.. are slacks (one per row).
        m = len(rows)
        self.n_free = n_free
        self.nonbasic = list(range(n_free))
        self.basis = [n_free + i for i in range(m)]
        self.rows = rows  # list of lists (coeff per nonbasic column)
        self.consts = consts
        self.obj = obj
        self.obj_const = obj_const
        self.free_rows: list[int] = []  # row indices whose basic var is free
        self.pivots = 0

    def pivot(self, r: int, c: int) -> None:
        self.pivots += 1
        row = self.rows[r]
        t = row[c]
        inv = 1 / t
        # Express the entering variable through the leaving one.
        new = [-v * inv for v in row]
        new[c] = inv
        new_const = -self.consts[r] * inv
        self.rows[r] = new
        self.consts[r] = new_const
        for i, other in enumerate(self.rows):
            if i == r:
                continue
            u = other[c]
            if u:
                for j, v in enumerate(new):
                    if v:
                        other[j] = other[j] + u * v if j != c else u * v
                self.consts[i] += u * new_const
        u = self.obj[c]
        if u:
            for j, v in enumerate(new):
                if j != c:
                    if v:
                        self.obj[j] += u * v
                else:
                    self.obj[j] = u * v
            self.obj_const += u * new_const
        self.basis[r], self.nonbasic[c] = self.nonbasic[c], self.basis[r]

    def constrained_rows(self):
        free = set(self.free_rows)
        return [i for i in range(len(self.rows)) if i not in free]

    def eliminate_free(self) -> list[int]:
        """Pivot every free variable into the basis; returns columns of free vars left nonbasic."""
        stuck = []
        for var in range(self.n_free):
            c = self.nonbasic.index(var)
            for r in self.constrained_rows():
                if self.rows[r][c]:
                    self.pivot(r, c)
                    self.free_rows.append(r)
                    break
            else:
                stuck.append(var)
        return stuck

    def run(self, allowed_cols, rows) -> str:
        """Minimise the objective with Bland's rule. Returns "optimal" or "unbounded"."""
        while True:
            entering = None
            for c in allowed_cols:
                if self.obj[c] < 0 and (entering is None or self.nonbasic[c] < self.nonbasic[entering]):
                    entering = c
            if entering is None:
                return "optimal"
            best = None
            best_ratio = None
            for r in rows:
                a = self.rows[r][entering]
                if a < 0:
                    ratio = self.consts[r] / (-a)
                    if best is None or ratio < best_ratio:
                        best, best_ratio = r, ratio
                    elif ratio == best_ratio and self.basis[r] < self.basis[best]:
                        best = r
            if best is None:
                return "unbounded"
            self.pivot(best, entering)


def _solve(
    forms: Sequence[tuple[Sequence, object]],
    n: int,
    objective: tuple[Sequence, object] | None,
) -> LpOutcome:
    """Minimise ``objective`` subject to ``a.x + c >= 0`` for every (a, c) in ``forms``."""
    rows = [[mpq(a) for a in coeffs] for coeffs, _ in forms]
    consts = [mpq(c) for _, c in forms]
    if objective is None:
        obj = [_ZERO] * n
        obj_const = _ZERO
    else:
        obj = [mpq(a) for a in objective[0]]
        obj_const = mpq(objective[1])
    d = _Dictionary(rows, consts, obj, obj_const, n)
    stuck = d.eliminate_free()
    stuck_cols = {d.nonbasic.index(v) for v in stuck}
    cons_rows = d.constrained_rows()
    allowed = [c for c in range(len(d.nonbasic)) if c not in stuck_cols]

    if any(d.consts[r] < 0 for r in cons_rows):
        # Phase one: one artificial column with coefficient +1 in every constrained row.
        # Its id is -1 so Bland's ordering prefers it on ties.
        art = -1
        for i, row in enumerate(d.rows):
            row.append(mpq(1) if i in cons_rows else _ZERO)
        d.nonbasic.append(art)
        real_obj, real_const = d.obj + [_ZERO], d.obj_const
        d.obj = [_ZERO] * len(d.nonbasic)
        d.obj[-1] = mpq(1)
        d.obj_const = _ZERO
        a_col = len(d.nonbasic) - 1
        worst = min(cons_rows, key=lambda r: (d.consts[r], d.basis[r]))
        # Track the true objective as an extra row so it follows the pivots.
        d.rows.append(real_obj)
        d.consts.append(real_const)
        tracker = len(d.rows) - 1
        d.pivot(worst, a_col)
        d.run(allowed + [a_col], cons_rows)
        if d.obj_const > 0:
            return LpOutcome("infeasible", pivots=d.pivots)
        d.obj = d.rows.pop(tracker)
        d.obj_const = d.consts.pop(tracker)
        if art in d.basis:
            r = d.basis.index(art)
            for c in allowed:
                if d.rows[r][c]:
                    d.pivot(r, c)
                    break
            else:
                # Redundant row: the artificial is identically zero.
                del d.rows[r], d.consts[r], d.basis[r]
                d.free_rows = [i - (i > r) for i in d.free_rows]
        if art in d.nonbasic:
            c_art = d.nonbasic.index(art)
            for row in d.rows:
                del row[c_art]
            del d.nonbasic[c_art]
            del d.obj[c_art]
        cons_rows = d.constrained_rows()
        allowed = [c for c in range(len(d.nonbasic)) if d.nonbasic[c] >= n]
        stuck_cols = {c for c in range(len(d.nonbasic)) if d.nonbasic[c] < n}

    if objective is not None:
        if any(d.obj[c] for c in stuck_cols):
            return LpOutcome("unbounded", pivots=d.pivots)
        status = d.run(allowed, cons_rows)
        if status == "unbounded":
            return LpOutcome("unbounded", pivots=d.pivots)
    x = [_ZERO] * n
    for r in d.free_rows:
        x[d.basis[r]] = d.consts[r]
    point = tuple(_frac(v) for v in x)
    if objective is None:
        return LpOutcome("feasible", point, pivots=d.pivots)
    return LpOutcome("optimal", point, _frac(d.obj_const), pivots=d.pivots)


def _rows_of(sys: ConstraintSystem) -> list[tuple[tuple[Fraction, ...], Fraction]]:
    return [(c.form.coeffs, c.form.const) for c in sys.constraints]


def optimize(sys: ConstraintSystem, objective: AffineForm, direction: str = "min") -> LpOutcome:
    """Optimise an affine objective over a system of non-strict constraints."""
    if sys.has_strict:
        raise ValueError("optimize() takes non-strict systems; use closure() or feasible_strict()")
    if objective.dim != sys.dim:
        raise ValueError("objective dimension mismatch")
    if direction not in ("min", "max"):
        raise ValueError("direction must be 'min' or 'max'")
    sign = 1 if direction == "min" else -1
    obj = ([sign * a for a in objective.coeffs], sign * objective.const)
    out = _solve(_rows_of(sys), sys.dim, obj)
    if out.status == "optimal" and sign < 0:
        out.value = -out.value
    return out


def is_feasible(sys: ConstraintSystem) -> LpOutcome:
    """Feasibility of a non-strict system; returns a witness point."""
    return _solve(_rows_of(sys.closure() if sys.has_strict else sys), sys.dim, None)


def feasible_strict(
    sys: ConstraintSystem,
    bounding_box: tuple[Sequence, Sequence] | None = None,
    cap: Fraction = Fraction(1),
) -> LpOutcome:
    """Decide a system mixing ``>= 0`` and ``< 0`` constraints exactly.

    Maximises a margin ``d`` in ``[0, cap]`` with ``e + d <= 0`` for each strict
    ``e < 0``. The outcome's ``value`` is the optimal margin and ``point`` an
    input that satisfies every constraint (strict ones strictly).
    """
    if bounding_box is not None:
        sys = sys.extend(ConstraintSystem.box(*bounding_box))
    n = sys.dim
    if not sys.has_strict:
        out = _solve(_rows_of(sys), n, None)
        return out
    forms = []
    for c in sys.constraints:
        a, k = c.form.coeffs, c.form.const
        if c.strict:
            forms.append(([-v for v in a] + [Fraction(-1)], -k))
        else:
            forms.append((list(a) + [Fraction(0)], k))
    forms.append(([Fraction(0)] * n + [Fraction(1)], Fraction(0)))
    forms.append(([Fraction(0)] * n + [Fraction(-1)], cap))
    obj = ([Fraction(0)] * n + [Fraction(-1)], Fraction(0))
    out = _solve(forms, n + 1, obj)
    if out.status == "infeasible":
        return out
    if out.status != "optimal":
        raise UnboundedError("margin LP is unbounded; the margin is capped so this is a bug")
    margin = -out.value
    if margin <= 0:
        return LpOutcome("infeasible", value=Fraction(0), pivots=out.pivots)
    return LpOutcome("feasible", out.point[:n], margin, pivots=out.pivots)


def bounding_box(sys: ConstraintSystem) -> tuple[list[Fraction], list[Fraction]]:
    """Tightest axis-aligned box around the closure of ``sys`` (2 * dim LPs)."""
    sys = sys.closure()
    lo, hi = [], []
    for i in range(sys.dim):
        axis = AffineForm.variable(sys.dim, i)
        a = optimize(sys, axis, "min")
        b = optimize(sys, axis, "max")
        if a.status == "infeasible":
            raise ValueError("system is empty")
        if a.status != "optimal" or b.status != "optimal":
            raise UnboundedError(f"coordinate {i} is unbounded")
        lo.append(a.value)
        hi.append(b.value)
    return lo, hi
