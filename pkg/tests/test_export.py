import random
import re
from fractions import Fraction
from pathlib import Path

import pytest

from disco.affine import interval_bounds
from disco.export import (
    ExportError,
    _parse_sexprs,
    evaluate_smt_definitions,
    smt_negated_postcondition,
    smt_num,
    smt_outputs,
    to_milp_lp,
    to_smtlib,
)
from disco.lp import ConstraintSystem
from disco.network import toy_network, forward, from_arrays, identity_network
from disco.verify import OutputConstraint, VerificationTask, multiplication_property

from oracles import random_network, random_widths

F = Fraction
GOLDEN = Path(__file__).parent / "golden"

TOY_TASK = VerificationTask(
    (ConstraintSystem.box([-1, -1], [1, 1]),), (OutputConstraint((F(-1),), (), F(5, 2)),), "toy-output-at-most-5/2"
)
IDENTITY_TASK = VerificationTask((ConstraintSystem.box([-1], [1]),), (OutputConstraint((F(1),)),), "identity-nonnegative")


def test_golden_smt():
    assert to_smtlib(toy_network(), TOY_TASK) == (GOLDEN / "toy.smt2").read_text()


def test_golden_lp():
    assert to_milp_lp(identity_network(), IDENTITY_TASK) == (GOLDEN / "identity.lp").read_text()


def test_smt_numbers():
    assert smt_num(F(3)) == "3"
    assert smt_num(F(-1, 2)) == "(- (/ 1 2))"
    assert smt_num(F(0)) == "0"


SMT_COMMANDS = {"set-logic", "declare-fun", "assert", "check-sat", "exit"}
SMT_OPS = {"+", "-", "*", "/", "ite", ">=", "<", "=", "or", "and", "not", "<=", ">"}


def _well_formed(term, declared):
    if isinstance(term, str):
        assert term in declared or re.fullmatch(r"\d+|true|false", term), term
        return
    assert term and term[0] in SMT_OPS, term
    for t in term[1:]:
        _well_formed(t, declared)


def test_smt_is_well_formed():
    text = to_smtlib(toy_network(), TOY_TASK)
    declared = set()
    for cmd in _parse_sexprs(text):
        assert cmd[0] in SMT_COMMANDS
        if cmd[0] == "declare-fun":
            assert cmd[2] == [] and cmd[3] == "Real"
            declared.add(cmd[1])
        elif cmd[0] == "assert":
            _well_formed(cmd[1], declared)


def test_identity_nonnegative_is_unsat_at_samples():
    text = to_smtlib(identity_network(), IDENTITY_TASK)
    assert not any(smt_negated_postcondition(text, [F(k, 16)]) for k in range(-16, 17))


def test_toy_violation_visible_in_smt():
    text = to_smtlib(toy_network(), TOY_TASK)
    assert smt_negated_postcondition(text, [1, 1]) and not smt_negated_postcondition(text, [0, 0])


def test_smt_definitions_reproduce_forward():
    rng = random.Random(8)
    for _ in range(10):
        dim = rng.randint(1, 3)
        net = random_network(rng, dim, random_widths(rng, 10))
        task = VerificationTask((ConstraintSystem.box([-2] * dim, [2] * dim),), (OutputConstraint((F(1),)),))
        text = to_smtlib(net, task)
        for _ in range(20):
            x = [F(rng.randint(-64, 64), 32) for _ in range(dim)]
            assert smt_outputs(text, net, x) == forward(net, x)[0]


def test_simplified_smt_drops_stable_ite():
    net = from_arrays([[[1], [-1]], [[1, 1]]], [[2, -3], [0]])
    task = VerificationTask((ConstraintSystem.box([-1], [1]),), (OutputConstraint((F(1),)),))
    text = to_smtlib(net, task, simplify=True)
    assert "ite" not in text
    for k in range(-4, 5):
        assert smt_outputs(text, net, [F(k, 4)]) == forward(net, [F(k, 4)])[0]


def test_several_preconditions_need_an_index():
    task = VerificationTask((ConstraintSystem.box([-1], [0]), ConstraintSystem.box([0], [1])), (OutputConstraint((F(1),)),))
    with pytest.raises(ExportError):
        to_smtlib(identity_network(), task)
    assert " pre_0: x_0 >= 0\n" in to_milp_lp(identity_network(), task, precondition=1)


def test_lp_m_constants_and_fixed_indicators():
    net = from_arrays([[[1], [1], [-1]], [[1, 1, 1]]], [[0, 2, -2], [0]])
    bounds = interval_bounds(net, [-1], [1])
    assert bounds[0] == [(-1, 1), (1, 3), (-3, -1)]
    text = to_milp_lp(net, IDENTITY_TASK, bounds=bounds)
    assert " relu_1_0_2: y_1_0 - n_1_0 + b_1_0 <= 1" in text
    assert " relu_1_0_3: y_1_0 - b_1_0 <= 0" in text
    assert " b_1_1 = 1" in text and " b_1_2 = 0" in text


def test_lp_rejects_bad_bounds():
    with pytest.raises(ExportError):
        to_milp_lp(identity_network(), IDENTITY_TASK, bounds=[[], []])


# -- LP semantics: a forward pass is a feasible point of the encoding ----------

_TERM = re.compile(r"([+-])?\s*(\d+)?\s*([A-Za-z_][\w]*)")


def _parse_lp_rows(text):
    rows = []
    body = text.split("Subject To\n", 1)[1].split("Bounds\n", 1)[0]
    for line in body.splitlines():
        name, expr = line.strip().split(": ", 1)
        m = re.fullmatch(r"(.*) (<=|>=|=) (-?\d+)", expr)
        lhs, sense, rhs = m.group(1), m.group(2), int(m.group(3))
        terms = []
        for sign, coef, var in _TERM.findall(lhs):
            c = int(coef) if coef else 1
            terms.append((-c if sign == "-" else c, var))
        rows.append((name, terms, sense, rhs))
    return rows


def _assignment(net, x, task):
    env = {f"x_{i}": F(v) for i, v in enumerate(x)}
    h = list(env.values())
    for li, layer in enumerate(net.layers, start=1):
        nxt = []
        for j, (w, b) in enumerate(zip(layer.weights, layer.biases)):
            n = sum((a * v for a, v in zip(w, h)), b)
            if layer.has_relu:
                env[f"n_{li}_{j}"] = n
                env[f"b_{li}_{j}"] = F(int(n >= 0))
                n = max(n, F(0))
            env[f"y_{li}_{j}"] = n
            nxt.append(n)
        h = nxt
    gs = [r.value(x, h) for r in task.postcondition]
    k = min(range(len(gs)), key=lambda i: gs[i])
    env["t"] = -gs[k]
    for i in range(len(gs)):
        env[f"s_{i}"] = F(int(i == k))
    return env


def _holds(rows, env):
    for name, terms, sense, rhs in rows:
        v = sum(c * env[var] for c, var in terms)
        ok = v <= rhs if sense == "<=" else v >= rhs if sense == ">=" else v == rhs
        if not ok:
            return name
    return None


def test_forward_pass_satisfies_lp_encoding():
    rng = random.Random(21)
    for _ in range(8):
        dim = rng.randint(1, 3)
        net = random_network(rng, dim, random_widths(rng, 9))
        lo, hi = [F(-1)] * dim, [F(3, 2)] * dim
        rows_post = tuple(
            OutputConstraint((F(rng.randint(-2, 2)),), tuple(F(rng.randint(-1, 1)) for _ in range(dim)), F(rng.randint(-3, 3)))
            for _ in range(rng.randint(1, 3))
        )
        task = VerificationTask((ConstraintSystem.box(lo, hi),), rows_post)
        rows = _parse_lp_rows(to_milp_lp(net, task))
        for _ in range(25):
            x = [F(rng.randint(-32, 48), 32) for _ in range(dim)]
            assert _holds(rows, _assignment(net, x, task)) is None


def test_multiplication_export_mentions_inputs():
    from disco.network import make_architecture
    from disco.train import init_params, to_network

    net = to_network(init_params(make_architecture("simple", 2), 0), 2)
    task = multiplication_property(2)
    text = to_smtlib(net, task)
    assert "(< (+ y_4_0 (* (- 1) x_0) (* (- 1) x_1) (/ 3 2)) 0)" in text
    env = evaluate_smt_definitions(text, [1, 1])
    assert env["y_4_0"] == forward(net, [1, 1])[0][0]
