import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from disco.affine import (
    AffineForm,
    LinearConstraint,
    PrefixError,
    facet_output_forms,
    interval_bounds,
    neuron_constraint,
    propagate_affine,
)
from disco.lp import ConstraintSystem, feasible_strict
from disco.network import toy_network, forward, from_arrays, identity_network

from oracles import pattern_forms, random_network, random_widths

F = Fraction
x = AffineForm.variable(1, 0)


def test_identity_prefix_forms():
    net = identity_network()
    assert propagate_affine(net, ()) == [AffineForm((F(1),), F(0))]
    assert propagate_affine(net, (0,))[-1] == AffineForm((F(0),), F(0))
    assert propagate_affine(net, (1,))[-1] == AffineForm((F(1),), F(0))


def test_chain_composition():
    chain = from_arrays([[[1]], [[1]], [[1]]], [[0], [0], [0]])
    forms = propagate_affine(chain, (1,))
    assert forms[1] == AffineForm((F(1),), F(0))
    assert propagate_affine(chain, (0,))[1] == AffineForm((F(0),), F(0))


def test_prefix_errors():
    with pytest.raises(PrefixError):
        propagate_affine(identity_network(), (1, 1))
    with pytest.raises(PrefixError):
        propagate_affine(identity_network(), (2,))
    with pytest.raises(PrefixError):
        facet_output_forms(toy_network(), (1,))


def test_neuron_constraint_relations():
    f = x.shift(-1)
    assert neuron_constraint(f, True) == LinearConstraint(f, strict=False)
    assert neuron_constraint(f, False) == LinearConstraint(f, strict=True)
    assert neuron_constraint(f, True).holds([1]) and not neuron_constraint(f, False).holds([1])


def test_toy_region_f():
    """y3 active with y1, y2 inactive carves out the region around (1/5, 1/5)."""
    net = toy_network()
    pre, _ = facet_output_forms(net, (0, 0, 1))
    box = ConstraintSystem.box([-1, -1], [1, 1])
    sys = box
    for f, b in zip(pre, (0, 0, 1)):
        sys = sys.add(neuron_constraint(f, b))
    assert sys.satisfied_by([F(1, 5), F(1, 5)])
    assert not sys.satisfied_by([F(-1, 5), F(-1, 5)])
    assert feasible_strict(sys).ok


def test_interval_examples():
    assert interval_bounds(identity_network(), [-1], [1])[0] == [(-1, 1)]
    net = from_arrays([[[2]], [[1]]], [[1], [0]])
    assert interval_bounds(net, [0], [1])[0] == [(1, 3)]
    with pytest.raises(ValueError):
        interval_bounds(net, [1], [0])


def test_interval_bounds_enclose_samples():
    rng = random.Random(3)
    for _ in range(10):
        net = random_network(rng, 2, [rng.randint(1, 4), rng.randint(1, 4)])
        lo, hi = [F(-1), F(-1, 2)], [F(1), F(3, 2)]
        bounds = interval_bounds(net, lo, hi)
        X = np.random.default_rng(rng.randrange(10**6)).uniform([-1, -0.5], [1, 1.5], size=(10_000, 2))
        h = X
        for li, layer in enumerate(net.layers):
            W = np.array(layer.weights, dtype=float)
            b = np.array(layer.biases, dtype=float)
            pre = h @ W.T + b
            lb = np.array([float(l) for l, _ in bounds[li]])
            ub = np.array([float(u) for _, u in bounds[li]])
            assert (pre.min(axis=0) >= lb - 1e-9).all() and (pre.max(axis=0) <= ub + 1e-9).all()
            h = np.maximum(pre, 0) if layer.has_relu else pre


@settings(max_examples=40)
@given(st.randoms(use_true_random=False), st.integers(1, 3))
def test_facet_forms_match_forward(rnd, dim):
    """On the facet of a point, the facet's affine maps reproduce the network exactly."""
    net = random_network(rnd, dim, random_widths(rnd, 8))
    pt = [F(rnd.randint(-20, 20), 8) for _ in range(dim)]
    y, pattern = forward(net, pt)
    pre, outs = facet_output_forms(net, pattern)
    assert tuple(o(pt) for o in outs) == y
    assert all((f(pt) >= 0) == bool(b) for f, b in zip(pre, pattern))
    ref_pre, ref_outs = pattern_forms(net, pattern)
    assert pre == ref_pre and tuple(outs) == tuple(ref_outs)


@given(
    st.lists(st.fractions(-5, 5, max_denominator=9), min_size=2, max_size=2),
    st.lists(st.fractions(-5, 5, max_denominator=9), min_size=2, max_size=2),
    st.fractions(-3, 3, max_denominator=9),
)
def test_affine_algebra(a, b, k):
    fa = AffineForm.of(a, 1)
    fb = AffineForm.of(b, -2)
    pt = [F(1, 3), F(-2)]
    assert (fa + fb)(pt) == fa(pt) + fb(pt)
    assert (fa - fb)(pt) == fa(pt) - fb(pt)
    assert fa.scale(k)(pt) == k * fa(pt)
    assert LinearConstraint(fa, True).closure() == LinearConstraint(-fa)
