"""Facet-wise verification of linear properties ``x in D  =>  f(x) in P``.

On every facet the network is affine, so each postcondition row becomes an
affine function of the input. Minimising it by LP over the closed region
``closure(facet) & D`` decides the row exactly on that facet. Working on the
closure is sound: a point of the closure still satisfies the facet's
constraints non-strictly, and there the facet's affine map agrees with the
network.
"""

from __future__ import annotations

import json
from concurrent.futures import FIRST_COMPLETED, wait
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from typing import Sequence

from .affine import AffineForm, LinearConstraint, ge, le
from .facets import Facet, FacetSet, _pool
from .lp import ConstraintSystem, UnboundedError, optimize
from .network import Network, forward
from .rational import encode, to_fraction

PROP_FORMAT = "disco-prop-v1"
REPORT_FORMAT = "disco-verdict-v1"


class VerificationError(RuntimeError):
    pass


@dataclass(frozen=True)
class OutputConstraint:
    """``outputs . y + inputs . x + const >= 0``.

    Input coefficients let a postcondition compare the output with an affine
    bound of the input, as the multiplication benchmarks need.
    """

    outputs: tuple[Fraction, ...]
    inputs: tuple[Fraction, ...] = ()
    const: Fraction = Fraction(0)

    def value(self, x: Sequence, y: Sequence) -> Fraction:
        return (
            sum((a * v for a, v in zip(self.outputs, y)), self.const)
            + sum((b * v for b, v in zip(self.inputs, x)), Fraction(0))
        )

    def on_facet(self, output_forms: Sequence[AffineForm], dim: int) -> AffineForm:
        coeffs = [Fraction(0)] * dim
        const = self.const
        for a, f in zip(self.outputs, output_forms):
            if a:
                const += a * f.const
                for k, c in enumerate(f.coeffs):
                    coeffs[k] += a * c
        for k, b in enumerate(self.inputs):
            coeffs[k] += b
        return AffineForm(tuple(coeffs), const)


@dataclass(frozen=True)
class VerificationTask:
    preconditions: tuple[ConstraintSystem, ...]
    postcondition: tuple[OutputConstraint, ...]
    name: str = "property"

    def __post_init__(self):
        if not self.preconditions:
            raise ValueError("a task needs at least one precondition")
        dims = {p.dim for p in self.preconditions}
        if len(dims) != 1:
            raise ValueError("preconditions disagree on the input dimension")

    @property
    def input_dim(self) -> int:
        return self.preconditions[0].dim


@dataclass
class Counterexample:
    input: tuple[Fraction, ...]
    output: tuple[Fraction, ...]
    pattern: tuple[int, ...]
    precondition: int
    row: int
    value: Fraction


@dataclass
class FacetResult:
    pattern: tuple[int, ...]
    holds: bool
    counterexample: Counterexample | None = None
    lp_calls: int = 0


@dataclass
class Verdict:
    status: str  # "holds" | "violated"
    counterexample: Counterexample | None = None
    per_facet: list[tuple[tuple[int, ...], bool]] = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return self.status == "holds"


@dataclass(frozen=True)
class VerifyConfig:
    fail_fast: bool = False
    parallel: bool = False
    workers: int = 1
    chunk: int = 16


def verify_facet(net: Network, facet: Facet, task: VerificationTask) -> FacetResult:
    if task.input_dim != net.input_dim or facet.system.dim != net.input_dim:
        raise ValueError("dimension mismatch between network, facet and task")
    if facet.output_forms is None:
        raise ValueError("facet carries no output forms (enumerated in count-only mode?)")
    region = facet.system.closure()
    calls = 0
    for k, pre in enumerate(task.preconditions):
        sys = region.extend(pre.closure())
        for r, row in enumerate(task.postcondition):
            g = row.on_facet(facet.output_forms, net.input_dim)
            out = optimize(sys, g, "min")
            calls += 1
            if out.status == "infeasible":
                break  # empty intersection: vacuous for this precondition
            if out.status != "optimal":
                raise UnboundedError("verification LP unbounded; the domain must be bounded")
            if out.value < 0:
                x = out.point
                y, pattern = forward(net, x)
                if row.value(x, y) != out.value or facet.evaluate(x) != y:
                    raise VerificationError(f"counterexample {x} not reproduced by forward evaluation")
                cex = Counterexample(x, y, pattern, k, r, out.value)
                return FacetResult(facet.pattern, False, cex, calls)
    return FacetResult(facet.pattern, True, None, calls)


def _contains(outer: ConstraintSystem, inner: ConstraintSystem) -> bool:
    """Whether every point of ``closure(inner)`` satisfies ``outer``."""
    inner = inner.closure()
    for c in outer.constraints:
        out = optimize(inner, c.form, "max" if c.strict else "min")
        if out.status == "infeasible":
            return True
        if out.status != "optimal":
            return False
        if (c.strict and out.value >= 0) or (not c.strict and out.value < 0):
            return False
    return True


_VWORKER: dict = {}


def _init_verify_worker(net: Network, task: VerificationTask):
    _VWORKER["net"] = net
    _VWORKER["task"] = task


def _verify_chunk(facets: list[Facet], fail_fast: bool) -> list[FacetResult]:
    net, task = _VWORKER["net"], _VWORKER["task"]
    out = []
    for f in facets:
        res = verify_facet(net, f, task)
        out.append(res)
        if fail_fast and not res.holds:
            break
    return out


def verify(
    net: Network,
    task: VerificationTask,
    facets: FacetSet,
    config: VerifyConfig | None = None,
) -> Verdict:
    """Check the task on every facet; the property holds iff it holds on all of them."""
    cfg = config or VerifyConfig()
    if facets.net_hash != net.digest():
        raise ValueError("facet set was enumerated for a different network")
    if task.input_dim != net.input_dim:
        raise ValueError("task and network disagree on the input dimension")
    for k, pre in enumerate(task.preconditions):
        if not _contains(facets.domain, pre):
            raise ValueError(f"precondition {k} is not contained in the enumeration domain")

    results: list[FacetResult] = []
    if not task.postcondition:
        return Verdict("holds", None, [(f.pattern, True) for f in facets.facets], {"facets": len(facets.facets), "lp_calls": 0})

    if cfg.parallel and cfg.workers > 1:
        chunks = [facets.facets[i:i + cfg.chunk] for i in range(0, len(facets.facets), cfg.chunk)]
        with _pool(cfg.workers, _init_verify_worker, (net, task)) as pool:
            pending = {pool.submit(_verify_chunk, c, cfg.fail_fast) for c in chunks}
            while pending:
                done, pending = wait(pending, return_when=FIRST_COMPLETED)
                for fut in done:
                    results.extend(fut.result())
                if cfg.fail_fast and any(not r.holds for r in results):
                    for fut in pending:
                        fut.cancel()
                    break
    else:
        for f in facets.facets:
            res = verify_facet(net, f, task)
            results.append(res)
            if cfg.fail_fast and not res.holds:
                break

    results.sort(key=lambda r: r.pattern)
    failing = [r for r in results if not r.holds]
    stats = {"facets": len(results), "lp_calls": sum(r.lp_calls for r in results)}
    per_facet = [(r.pattern, r.holds) for r in results]
    if failing:
        return Verdict("violated", failing[0].counterexample, per_facet, stats)
    return Verdict("holds", None, per_facet, stats)


# -- benchmark properties ------------------------------------------------------

def multiplication_lower_constant(n: int) -> Fraction:
    """``1 - 5n/4 + alpha_n`` with ``alpha_n = 1/4`` for odd ``n``."""
    return 1 - Fraction(5, 4) * n + (Fraction(1, 4) if n % 2 else 0)


def multiplication_upper_bound(n: int) -> tuple[Fraction, Fraction]:
    """(slope on sum(x), constant) of the chord bound on the product over [1/2, 2]^n."""
    span = Fraction(2) ** n - Fraction(1, 2) ** n
    slope = Fraction(2, 3) * span / n
    const = -Fraction(2, 3) * span / 2 + Fraction(1, 2) ** n
    return slope, const


def multiplication_property(n: int, side: str = "lower") -> VerificationTask:
    """Affine lower or upper bound on the output over ``[1/2, 2]^n``.

    lower: ``y >= sum(x) + 1 - 5n/4 + alpha_n``;
    upper: ``y <= (2/3)(2^n - 2^-n)(sum(x)/n - 1/2) + 2^-n``.
    """
    if n < 1:
        raise ValueError("n must be positive")
    box = ConstraintSystem.box([Fraction(1, 2)] * n, [Fraction(2)] * n)
    one = Fraction(1)
    if side == "lower":
        row = OutputConstraint((one,), (-one,) * n, -multiplication_lower_constant(n))
    elif side == "upper":
        slope, const = multiplication_upper_bound(n)
        row = OutputConstraint((-one,), (slope,) * n, const)
    else:
        raise ValueError("side must be 'lower' or 'upper'")
    return VerificationTask((box,), (row,), f"{n}-multiplication-{side}")


def lower_half_pixels(side: int, lower_rows: Sequence[int] | None = None) -> list[int]:
    """Row-major indices of the lower half; for odd sides the middle row is excluded."""
    if lower_rows is None:
        lower_rows = range(side - side // 2, side)
    return [r * side + c for r in lower_rows for c in range(side)]


def perception_properties(
    side: int,
    threshold=1,
    clear_threshold=0,
    lower_rows: Sequence[int] | None = None,
) -> list[VerificationTask]:
    """The two obstacle-detection properties on ``side x side`` images in [0, 1].

    1. one precondition per lower-half pixel forcing it ``>= threshold``; ``y >= 0``.
    2. every lower-half pixel ``<= clear_threshold``; ``y <= 0``.
    """
    if side < 2:
        raise ValueError("side must be at least 2")
    threshold = to_fraction(threshold)
    clear_threshold = to_fraction(clear_threshold)
    n = side * side
    pixels = lower_half_pixels(side, lower_rows)
    pres = []
    for p in pixels:
        lo = [Fraction(0)] * n
        lo[p] = threshold
        pres.append(ConstraintSystem.box(lo, [Fraction(1)] * n))
    one = Fraction(1)
    obstacle = VerificationTask(tuple(pres), (OutputConstraint((one,)),), f"{side}x{side}-obstacle")
    hi = [Fraction(1)] * n
    for p in pixels:
        hi[p] = clear_threshold
    clear = VerificationTask(
        (ConstraintSystem.box([Fraction(0)] * n, hi),), (OutputConstraint((-one,)),), f"{side}x{side}-clear"
    )
    return [obstacle, clear]


# -- JSON ----------------------------------------------------------------------

def _row_form(doc: dict, dim: int) -> LinearConstraint:
    coeffs = [to_fraction(v) for v in doc["coeffs"]]
    if len(coeffs) != dim:
        raise ValueError(f"precondition row has {len(coeffs)} coefficients, expected {dim}")
    form = AffineForm(tuple(coeffs), to_fraction(doc.get("const", 0)))
    rel = doc.get("rel", ">=")
    if rel == ">=":
        return ge(form)
    if rel == "<=":
        return le(form)
    raise ValueError(f"unsupported relation {rel!r}")


def task_from_dict(doc: dict) -> VerificationTask:
    if doc.get("format", PROP_FORMAT) != PROP_FORMAT:
        raise ValueError(f"unsupported property format {doc.get('format')!r}")
    pres = []
    for pd in doc["preconditions"]:
        box = pd.get("box")
        if box is not None:
            sys = ConstraintSystem.box([to_fraction(v) for v in box["lo"]], [to_fraction(v) for v in box["hi"]])
        else:
            sys = ConstraintSystem(int(pd["dim"]))
        for row in pd.get("rows", []):
            sys = sys.add(_row_form(row, sys.dim))
        pres.append(sys)
    posts = []
    for rd in doc.get("postconditions", []):
        outs = tuple(to_fraction(v) for v in rd["outputs"])
        ins = tuple(to_fraction(v) for v in rd.get("inputs", []))
        const = to_fraction(rd.get("const", 0))
        rel = rd.get("rel", ">=")
        if rel == "<=":
            outs, ins, const = tuple(-v for v in outs), tuple(-v for v in ins), -const
        elif rel != ">=":
            raise ValueError(f"unsupported relation {rel!r}")
        posts.append(OutputConstraint(outs, ins, const))
    return VerificationTask(tuple(pres), tuple(posts), doc.get("name", "property"))


def _precondition_doc(sys: ConstraintSystem) -> dict:
    return {
        "dim": sys.dim,
        "rows": [
            {"coeffs": [encode(a) for a in c.form.coeffs], "const": encode(c.form.const), "rel": ">="}
            for c in sys.closure().constraints
        ],
    }


def task_to_dict(task: VerificationTask) -> dict:
    return {
        "format": PROP_FORMAT,
        "name": task.name,
        "preconditions": [_precondition_doc(p) for p in task.preconditions],
        "postconditions": [
            {
                "outputs": [encode(a) for a in r.outputs],
                "inputs": [encode(b) for b in r.inputs],
                "const": encode(r.const),
                "rel": ">=",
            }
            for r in task.postcondition
        ],
    }


def load_task(path) -> VerificationTask:
    with open(path) as fh:
        return task_from_dict(json.load(fh, parse_float=Decimal))


def save_task(task: VerificationTask, path) -> None:
    with open(path, "w") as fh:
        json.dump(task_to_dict(task), fh, indent=1)
        fh.write("\n")


def verdict_to_dict(v: Verdict) -> dict:
    cex = None
    if v.counterexample is not None:
        c = v.counterexample
        cex = {
            "input": [encode(a) for a in c.input],
            "input_float": [float(a) for a in c.input],
            "output": [encode(a) for a in c.output],
            "pattern": "".join(map(str, c.pattern)),
            "precondition": c.precondition,
            "row": c.row,
            "value": encode(c.value),
        }
    return {
        "format": REPORT_FORMAT,
        "status": v.status,
        "counterexample": cex,
        "per_facet": [{"pattern": "".join(map(str, p)), "holds": h} for p, h in v.per_facet],
        "stats": v.stats,
    }
