"""Whole-network encodings of a verification task for external solvers.

Two text formats are produced, both byte-deterministic:

* SMT-LIB 2 in QF_LRA. Each ReLU is an ``ite`` on the sign of its
  pre-activation; the precondition and the negated postcondition are
  asserted, so ``sat`` means the property is violated.
* CPLEX LP with the big-M ReLU encoding (one binary per unstable neuron,
  four rows per ReLU). The objective maximises the postcondition violation
  margin ``t``; the property holds iff the model is infeasible or the
  optimum is ``<= 0``. Every row is scaled to integer coefficients so the
  file is exact.

Symbols: inputs ``x_i``; pre-activations ``n_l_j``; post-activations and
outputs ``y_l_j``; indicators ``b_l_j``. Layers are numbered from 1.
"""

from __future__ import annotations

import math
import re
from fractions import Fraction
from typing import Sequence

from .affine import interval_bounds
from .lp import ConstraintSystem, bounding_box
from .network import Network
from .verify import VerificationTask

Bounds = list[list[tuple[Fraction, Fraction]]]


class ExportError(ValueError):
    pass


# -- SMT-LIB -------------------------------------------------------------------

def smt_num(q: Fraction) -> str:
    q = Fraction(q)
    mag = abs(q)
    lit = str(mag.numerator) if mag.denominator == 1 else f"(/ {mag.numerator} {mag.denominator})"
    return f"(- {lit})" if q < 0 else lit


def _smt_affine(coeffs: Sequence[Fraction], names: Sequence[str], const: Fraction) -> str:
    terms = []
    for w, v in zip(coeffs, names):
        if w == 0:
            continue
        terms.append(v if w == 1 else f"(* {smt_num(w)} {v})")
    if const != 0 or not terms:
        terms.append(smt_num(const))
    return terms[0] if len(terms) == 1 else f"(+ {' '.join(terms)})"


def _single_precondition(task: VerificationTask, index: int | None) -> ConstraintSystem:
    if index is None:
        if len(task.preconditions) != 1:
            raise ExportError("task has several preconditions; export one file per precondition")
        index = 0
    return task.preconditions[index]


def _stability(net: Network, bounds: Bounds | None):
    """Per (layer, neuron): "active", "inactive" or None (unstable / unknown)."""
    out = {}
    if bounds is None:
        return out
    for li, layer in enumerate(net.layers):
        if not layer.has_relu:
            continue
        for j, (lb, ub) in enumerate(bounds[li]):
            if lb >= 0:
                out[li, j] = "active"
            elif ub <= 0:
                out[li, j] = "inactive"
    return out


def to_smtlib(
    net: Network,
    task: VerificationTask,
    precondition: int | None = None,
    simplify: bool = False,
    bounds: Bounds | None = None,
) -> str:
    """QF_LRA encoding of ``task`` restricted to one precondition polytope.

    With ``simplify``, neurons whose interval bounds over the precondition's
    bounding box fix their state are encoded without an ``ite``.
    """
    pre = _single_precondition(task, precondition)
    if simplify and bounds is None:
        bounds = interval_bounds(net, *bounding_box(pre))
    stable = _stability(net, bounds if simplify else None)
    n = net.input_dim
    lines = [f"; disco QF_LRA encoding: {task.name}", "(set-logic QF_LRA)"]
    prev = [f"x_{i}" for i in range(n)]
    for v in prev:
        lines.append(f"(declare-fun {v} () Real)")
    defs = []
    L = len(net.layers)
    for li, layer in enumerate(net.layers, start=1):
        names = []
        for j, (row, b) in enumerate(zip(layer.weights, layer.biases)):
            expr = _smt_affine(row, prev, b)
            y = f"y_{li}_{j}"
            if layer.has_relu:
                nn = f"n_{li}_{j}"
                lines.append(f"(declare-fun {nn} () Real)")
                lines.append(f"(declare-fun {y} () Real)")
                defs.append(f"(assert (= {nn} {expr}))")
                state = stable.get((li - 1, j))
                if state == "active":
                    defs.append(f"(assert (= {y} {nn}))")
                elif state == "inactive":
                    defs.append(f"(assert (= {y} 0))")
                else:
                    defs.append(f"(assert (= {y} (ite (>= {nn} 0) {nn} 0)))")
            else:
                lines.append(f"(declare-fun {y} () Real)")
                defs.append(f"(assert (= {y} {expr}))")
            names.append(y)
        prev = names
    lines.extend(defs)
    xs = [f"x_{i}" for i in range(n)]
    lines.append("; precondition")
    for c in pre.constraints:
        op = "<" if c.strict else ">="
        lines.append(f"(assert ({op} {_smt_affine(c.form.coeffs, xs, c.form.const)} 0))")
    lines.append("; negated postcondition")
    outs = [f"y_{L}_{j}" for j in range(net.output_dim)]
    viol = []
    for row in task.postcondition:
        expr = _smt_affine(tuple(row.outputs) + tuple(row.inputs), outs[: len(row.outputs)] + xs[: len(row.inputs)], row.const)
        viol.append(f"(< {expr} 0)")
    if not viol:
        lines.append("(assert false)")
    elif len(viol) == 1:
        lines.append(f"(assert {viol[0]})")
    else:
        lines.append(f"(assert (or {' '.join(viol)}))")
    lines.append("(check-sat)")
    lines.append("(exit)")
    return "\n".join(lines) + "\n"


_TOKEN = re.compile(r"\(|\)|[^\s()]+")


def _parse_sexprs(text: str) -> list:
    tokens = []
    for line in text.splitlines():
        line = line.split(";", 1)[0]
        tokens.extend(_TOKEN.findall(line))
    stack: list[list] = [[]]
    for tok in tokens:
        if tok == "(":
            stack.append([])
        elif tok == ")":
            done = stack.pop()
            stack[-1].append(done)
        else:
            stack[-1].append(tok)
    if len(stack) != 1:
        raise ExportError("unbalanced parentheses")
    return stack[0]


def _eval(term, env: dict):
    if isinstance(term, str):
        if term in env:
            return env[term]
        if term == "true":
            return True
        if term == "false":
            return False
        return Fraction(term)
    op, *args = term
    vals = [_eval(a, env) for a in args] if op != "ite" else None
    if op == "+":
        return sum(vals, Fraction(0))
    if op == "-":
        return -vals[0] if len(vals) == 1 else vals[0] - sum(vals[1:], Fraction(0))
    if op == "*":
        out = Fraction(1)
        for v in vals:
            out *= v
        return out
    if op == "/":
        return vals[0] / vals[1]
    if op == "ite":
        return _eval(args[1], env) if _eval(args[0], env) else _eval(args[2], env)
    if op == ">=":
        return vals[0] >= vals[1]
    if op == "<=":
        return vals[0] <= vals[1]
    if op == ">":
        return vals[0] > vals[1]
    if op == "<":
        return vals[0] < vals[1]
    if op == "=":
        return vals[0] == vals[1]
    if op == "and":
        return all(vals)
    if op == "or":
        return any(vals)
    if op == "not":
        return not vals[0]
    raise ExportError(f"unsupported operator {op!r}")


def evaluate_smt_definitions(text: str, x: Sequence) -> dict[str, Fraction]:
    """Substitute ``x`` into the ``(assert (= sym term))`` definitions of an encoding.

    Definitions are evaluated in file order; the returned environment maps every
    defined symbol (and ``x_i``) to its exact value.
    """
    env: dict = {f"x_{i}": Fraction(v) for i, v in enumerate(x)}
    for cmd in _parse_sexprs(text):
        if not cmd or cmd[0] != "assert":
            continue
        body = cmd[1]
        if isinstance(body, list) and body[0] == "=" and isinstance(body[1], str) and body[1] not in env:
            env[body[1]] = _eval(body[2], env)
    return env


def smt_outputs(text: str, net: Network, x: Sequence) -> tuple[Fraction, ...]:
    env = evaluate_smt_definitions(text, x)
    L = len(net.layers)
    return tuple(env[f"y_{L}_{j}"] for j in range(net.output_dim))


def smt_negated_postcondition(text: str, x: Sequence) -> bool:
    """Truth value of the last assertion (the negated postcondition) at ``x``."""
    env = evaluate_smt_definitions(text, x)
    asserts = [c for c in _parse_sexprs(text) if c and c[0] == "assert"]
    return bool(_eval(asserts[-1][1], env))


# -- CPLEX LP ------------------------------------------------------------------

def _scaled(terms: list[tuple[Fraction, str]], rhs: Fraction) -> tuple[list[tuple[int, str]], int]:
    dens = [q.denominator for q, _ in terms] + [Fraction(rhs).denominator]
    k = math.lcm(*dens)
    return [(int(q * k), v) for q, v in terms if q], int(rhs * k)


def _lp_row(name: str, terms: list[tuple[Fraction, str]], sense: str, rhs) -> str:
    ints, r = _scaled([(Fraction(q), v) for q, v in terms], Fraction(rhs))
    parts = []
    for i, (c, v) in enumerate(ints):
        sign = "-" if c < 0 else "+"
        mag = abs(c)
        body = v if mag == 1 else f"{mag} {v}"
        parts.append(f"{'- ' if c < 0 else ''}{body}" if i == 0 else f"{sign} {body}")
    lhs = " ".join(parts) if parts else "0 t"
    return f" {name}: {lhs} {sense} {r}"


def to_milp_lp(
    net: Network,
    task: VerificationTask,
    bounds: Bounds | None = None,
    precondition: int | None = None,
) -> str:
    """Big-M MILP encoding in CPLEX LP format.

    ``bounds`` are per-layer pre-activation intervals (as returned by
    ``interval_bounds``); by default they are computed over the bounding box
    of the precondition. Neurons with ``lb >= 0`` get their indicator fixed to
    1, neurons with ``ub <= 0`` to 0.
    """
    pre = _single_precondition(task, precondition)
    box = bounding_box(pre)
    if bounds is None:
        bounds = interval_bounds(net, *box)
    for li, layer in enumerate(net.layers):
        if len(bounds[li]) != layer.out_width:
            raise ExportError(f"bounds for layer {li} have the wrong length")
        for lb, ub in bounds[li]:
            if lb is None or ub is None or not all(isinstance(v, (int, Fraction)) for v in (lb, ub)):
                raise ExportError(f"unbounded interval in layer {li}")

    n = net.input_dim
    xs = [f"x_{i}" for i in range(n)]
    rows: list[str] = []
    free: list[str] = list(xs)
    binaries: list[str] = []
    fixed: list[str] = []

    for k, c in enumerate(pre.closure().constraints):
        rows.append(_lp_row(f"pre_{k}", list(zip(c.form.coeffs, xs)), ">=", -c.form.const))

    prev = xs
    L = len(net.layers)
    for li, layer in enumerate(net.layers, start=1):
        names = []
        for j, (w, b) in enumerate(zip(layer.weights, layer.biases)):
            y = f"y_{li}_{j}"
            if layer.has_relu:
                nn, bb = f"n_{li}_{j}", f"b_{li}_{j}"
                lb, ub = bounds[li - 1][j]
                rows.append(_lp_row(f"def_{li}_{j}", [(Fraction(1), nn)] + [(-a, v) for a, v in zip(w, prev)], "=", b))
                rows.append(_lp_row(f"relu_{li}_{j}_0", [(Fraction(1), y)], ">=", 0))
                rows.append(_lp_row(f"relu_{li}_{j}_1", [(Fraction(1), y), (Fraction(-1), nn)], ">=", 0))
                rows.append(_lp_row(f"relu_{li}_{j}_2", [(Fraction(1), y), (Fraction(-1), nn), (-lb, bb)], "<=", -lb))
                rows.append(_lp_row(f"relu_{li}_{j}_3", [(Fraction(1), y), (-ub, bb)], "<=", 0))
                free.append(nn)
                free.append(y)
                binaries.append(bb)
                if lb >= 0:
                    fixed.append(f" {bb} = 1")
                elif ub <= 0:
                    fixed.append(f" {bb} = 0")
            else:
                rows.append(_lp_row(f"out_{li}_{j}", [(Fraction(1), y)] + [(-a, v) for a, v in zip(w, prev)], "=", b))
                free.append(y)
            names.append(y)
        prev = names
    outs = prev

    # Violation margin t = max_k (-g_k).
    post = list(task.postcondition)
    free.append("t")
    if not post:
        rows.append(_lp_row("viol", [(Fraction(1), "t")], "<=", 0))
    elif len(post) == 1:
        g = post[0]
        terms = [(Fraction(1), "t")] + list(zip(g.outputs, outs)) + list(zip(g.inputs, xs))
        rows.append(_lp_row("viol_0", terms, "<=", -g.const))
    else:
        out_bounds = bounds[L - 1]
        glo, ghi = [], []
        for g in post:
            lo = hi = g.const
            for a, (l, u) in zip(g.outputs, out_bounds):
                lo += a * (l if a >= 0 else u)
                hi += a * (u if a >= 0 else l)
            for a, l, u in zip(g.inputs, *box):
                lo += a * (l if a >= 0 else u)
                hi += a * (u if a >= 0 else l)
            glo.append(lo)
            ghi.append(hi)
        floor = min(glo)
        sel = []
        for k, g in enumerate(post):
            s = f"s_{k}"
            big_m = ghi[k] - floor
            terms = [(Fraction(1), "t")] + list(zip(g.outputs, outs)) + list(zip(g.inputs, xs)) + [(big_m, s)]
            rows.append(_lp_row(f"viol_{k}", terms, "<=", big_m - g.const))
            sel.append(s)
            binaries.append(s)
        rows.append(_lp_row("select", [(Fraction(1), s) for s in sel], "=", 1))

    lines = [f"\\ disco big-M encoding: {task.name}", "Maximize", " obj: t", "Subject To"]
    lines.extend(rows)
    lines.append("Bounds")
    lines.extend(f" {v} free" for v in free)
    lines.extend(fixed)
    if binaries:
        lines.append("Binary")
        lines.extend(f" {v}" for v in binaries)
    lines.append("End")
    return "\n".join(lines) + "\n"
