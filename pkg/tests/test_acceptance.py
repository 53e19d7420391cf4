"""Acceptance criteria, one test each. A PASS/FAIL line per criterion is
printed in the terminal summary."""

import itertools
import math
import random
import time
from fractions import Fraction
from math import prod
from pathlib import Path

import numpy as np
import pytest

import conftest
from disco.affine import AffineForm, ge
from disco.analysis import report, sample_histogram
from disco.export import smt_outputs, to_milp_lp, to_smtlib
from disco.facets import EnumConfig, count_facets, enumerate_facets
from disco.lp import ConstraintSystem
from disco.network import forward, make_architecture, patterns_batch
from disco.train import MmrConfig, TrainConfig, gen_multiplication, init_params, loss_and_grad, train
from disco.verify import (
    OutputConstraint,
    VerificationTask,
    VerifyConfig,
    multiplication_lower_constant,
    multiplication_property,
    multiplication_upper_bound,
    verify,
)

from oracles import (
    brute_force_patterns,
    brute_force_verdict,
    fd_gradient,
    flatten,
    network_with_relus,
    straddling_box,
)

F = Fraction
GOLDEN = Path(__file__).parent / "golden"
N_NETS = 50


def record(k: int, title: str, ok: bool, detail: str = "") -> None:
    line = f"criterion {k} [{'PASS' if ok else 'FAIL'}] {title}" + (f": {detail}" if detail else "")
    conftest.ACCEPTANCE[k] = line
    print(line)
    assert ok, line


def corpus():
    """50 seeded (net, box) pairs: 1-3 inputs, ReLU counts cycling through 2..12."""
    out = []
    for i in range(N_NETS):
        rng = random.Random(1000 + i)
        dim = 1 + i % 3
        net = network_with_relus(rng, dim, 2 + i % 11)
        lo, hi = straddling_box(rng, dim)
        out.append((net, ConstraintSystem.box(lo, hi), (lo, hi)))
    return out


def random_task(net, bounds, rng):
    """Sub-box precondition cut by one half-space; one or two rows mixing outputs and inputs.

    Constants are shifted around the sampled minimum so both verdicts occur.
    """
    dim = net.input_dim
    lo, hi = bounds
    sub_lo = [a + (b - a) * F(rng.randint(0, 2), 8) for a, b in zip(lo, hi)]
    sub_hi = [b - (b - a) * F(rng.randint(0, 2), 8) for a, b in zip(lo, hi)]
    pre = ConstraintSystem.box(sub_lo, sub_hi).add(
        ge(AffineForm.of([rng.randint(-2, 2) for _ in range(dim)], rng.randint(1, 4)))
    )
    pts = np.random.default_rng(rng.randrange(2**32)).uniform([float(v) for v in sub_lo], [float(v) for v in sub_hi], size=(200, dim))
    rows = []
    for _ in range(rng.randint(1, 2)):
        a = F(rng.choice([-2, -1, 1, 2]))
        b = tuple(F(rng.randint(-1, 1)) for _ in range(dim))
        samples = []
        for p in pts:
            x = [F(float(v)) for v in p]
            if pre.satisfied_by(x):
                samples.append(OutputConstraint((a,), b).value(x, forward(net, x)[0]))
        base = -min(samples) if samples else F(0)
        rows.append(OutputConstraint((a,), b, base + F(rng.randint(-2, 5), 4)))
    return VerificationTask((pre,), tuple(rows))


@pytest.fixture(scope="module")
def nets():
    return corpus()


def test_1_enumeration_matches_oracle(nets):
    start = time.perf_counter()
    mismatches = []
    for i, (net, box, _) in enumerate(nets):
        if set(enumerate_facets(net, box).patterns()) != brute_force_patterns(net, box):
            mismatches.append(i)
    elapsed = time.perf_counter() - start
    record(1, "enumeration == exhaustive 2^m oracle", not mismatches and elapsed < 300,
           f"{N_NETS} nets, mismatches {mismatches}, {elapsed:.1f}s")


def test_2_verification_matches_oracle(nets):
    mismatches, unconfirmed, verdicts = [], [], []
    for i, (net, box, bounds) in enumerate(nets):
        task = random_task(net, bounds, random.Random(i))
        v = verify(net, task, enumerate_facets(net, box))
        verdicts.append(v.status)
        if v.holds != brute_force_verdict(net, task, box):
            mismatches.append(i)
        if not v.holds:
            c = v.counterexample
            y, pattern = forward(net, c.input)
            row = task.postcondition[c.row]
            if not (y == c.output and pattern == c.pattern and task.preconditions[0].satisfied_by(c.input)
                    and row.value(c.input, y) == c.value < 0):
                unconfirmed.append(i)
    held = verdicts.count("holds")
    record(2, "verdict == brute-force LP oracle, counterexamples exact", not mismatches and not unconfirmed,
           f"{held} holds / {N_NETS - held} violated, mismatches {mismatches}, unconfirmed {unconfirmed}")


def test_3_coverage_and_partition(nets):
    problems = []
    for i, (net, box, (lo, hi)) in enumerate(nets):
        fs = enumerate_facets(net, box)
        pats = fs.patterns()
        X = np.random.default_rng(i).uniform([float(v) for v in lo], [float(v) for v in hi], size=(10_000, net.input_dim))
        seen = set(patterns_batch(net, X))
        if not seen <= set(pats) or len(set(pats)) != len(pats) or len(pats) > 2 ** net.relu_count:
            problems.append(i)
    record(3, "samples covered, patterns distinct, count <= 2^m", not problems, f"bad nets {problems}")


def test_4_product_bounds():
    corner_ok = all(
        min(prod(c) - sum(c) for c in itertools.product((F(1, 2), F(2)), repeat=n)) == multiplication_lower_constant(n)
        for n in range(1, 9)
    )
    violations = 0
    for n in range(1, 6):
        X = np.random.default_rng(100 + n).uniform(0.5, 2.0, size=(100_000, n))
        p, s = X.prod(axis=1), X.sum(axis=1)
        slope, const = multiplication_upper_bound(n)
        violations += int((p < s + float(multiplication_lower_constant(n)) - 1e-12).sum())
        violations += int((p > float(slope) * s + float(const) + 1e-12).sum())
    lower = multiplication_property(1, "lower").postcondition[0]
    upper = multiplication_property(1, "upper").postcondition[0]
    tight = all(lower.value((x,), (x,)) == 0 == upper.value((x,), (x,)) for x in (F(k, 8) for k in range(4, 17)))
    record(4, "multiplication bounds", corner_ok and violations == 0 and tight,
           f"corner minima N=1..8 exact: {corner_ok}; sampled violations: {violations}; N=1 tight: {tight}")


def test_5_schedule_independence():
    rng = random.Random(77)
    net = network_with_relus(rng, 2, 10)
    bounds = ([F(-3)] * 2, [F(3)] * 2)
    box = ConstraintSystem.box(*bounds)
    task = random_task(net, bounds, random.Random(5))
    ref = None
    differ = 0
    for _ in range(10):
        for workers in (1, 4):
            fs = enumerate_facets(net, box, EnumConfig(parallel=workers > 1, workers=workers))
            v = verify(net, task, fs, VerifyConfig(parallel=workers > 1, workers=workers, chunk=4))
            sig = (fs.patterns(), v.status, v.per_facet)
            ref = ref or sig
            differ += sig != ref
    record(5, "workers 1 vs 4 identical over 10 repetitions", differ == 0,
           f"{len(ref[0])} facets, verdict {ref[1]}, differing runs {differ}")


def test_6_gradient_check():
    rng = np.random.default_rng(6)
    worst, points, ties = 0.0, 0, 0
    arch = make_architecture("simple", 2)
    while points < 100:
        p = (1, 2, math.inf)[points % 3]
        ds = gen_multiplication(2, 16, points)
        mmr = MmrConfig(gamma_rb=0.5, p=p, weight=1.0)
        params = init_params(arch, int(rng.integers(2**31)))
        fd = fd_gradient(params, ds.inputs, ds.targets, ds.kind, mmr)
        if fd is None:
            ties += 1
            continue
        _, g = loss_and_grad(params, ds.inputs, ds.targets, ds.kind, mmr)
        g = flatten(g)
        worst = max(worst, float(np.abs(fd - g).max() / np.abs(g).max()))
        points += 1
    record(6, "loss gradient vs central differences", worst < 1e-4,
           f"max relative error {worst:.2e} over {points} points ({ties} tie points skipped)")


def test_7_mmr_reduces_facets():
    ds = gen_multiplication(2, 200, 0)
    arch = make_architecture("simple", 2)
    dom = ConstraintSystem.box([F(1, 2)] * 2, [F(2)] * 2)
    mmr = MmrConfig(gamma_rb=0.2, p=2, weight=0.1)
    fewer, rows = 0, []
    for seed in range(5):
        plain, rp = train(arch, ds, TrainConfig(epochs=300, seed=seed))
        reg, rm = train(arch, ds, TrainConfig(epochs=300, seed=seed, mmr=mmr))
        a, b = count_facets(plain, dom), count_facets(reg, dom)
        fewer += b < a
        rows.append(f"seed {seed}: {a}->{b} facets, acc {rp.accuracy:.2f}->{rm.accuracy:.2f}")
    record(7, "MMR gives fewer facets in >= 4 of 5 seeds", fewer >= 4, f"{fewer}/5; " + "; ".join(rows))


def test_8_export_faithfulness(nets):
    from test_export import TOY_TASK, IDENTITY_TASK
    from disco.network import toy_network, identity_network

    golden = (
        to_smtlib(toy_network(), TOY_TASK) == (GOLDEN / "toy.smt2").read_text()
        and to_milp_lp(identity_network(), IDENTITY_TASK) == (GOLDEN / "identity.lp").read_text()
    )
    bad = []
    for i, (net, box, _) in enumerate(nets):
        text = to_smtlib(net, VerificationTask((box,), (OutputConstraint((F(1),)),)))
        rng = random.Random(i)
        for _ in range(100):
            x = [F(rng.randint(-400, 400), 128) for _ in range(net.input_dim)]
            if smt_outputs(text, net, x) != forward(net, x)[0]:
                bad.append(i)
                break
    record(8, "golden files byte-match, SMT definitions reproduce forward", golden and not bad,
           f"golden match {golden}; nets with mismatches {bad}")


def test_9_end_to_end(tmp_path):
    start = time.perf_counter()
    ds = gen_multiplication(2, 200, 0)
    net, res = train(make_architecture("simple", 2), ds, TrainConfig(epochs=2000, seed=5))
    task = multiplication_property(2, "lower")
    fs = enumerate_facets(net, task.preconditions[0])
    verdict = verify(net, task, fs)
    hist = sample_histogram(net, task.preconditions[0], 10_000, seed=0)
    paths = report(tmp_path, net, fs, hist, res, architecture="simple")
    elapsed = time.perf_counter() - start
    ok = elapsed < 600 and all(p.exists() and p.stat().st_size for p in paths.values())
    if not verdict.holds:
        c = verdict.counterexample
        ok &= forward(net, c.input)[0] == c.output
    record(9, "train -> enumerate -> verify N=2 lower bound", ok,
           f"{elapsed:.1f}s, accuracy {res.accuracy:.3f}, {fs.count} facets, verdict {verdict.status}")
