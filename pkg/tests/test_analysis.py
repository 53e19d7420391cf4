import math
import random
from fractions import Fraction

from hypothesis import given, strategies as st

from disco.affine import AffineForm, ge
from disco.analysis import (
    FacetRow,
    concentration,
    naive_bound,
    report,
    sample_histogram,
    write_facets_csv,
    write_histogram_csv,
)
from disco.facets import count_facets, enumerate_facets
from disco.lp import ConstraintSystem
from disco.network import toy_network, identity_network, make_architecture
from disco.train import init_params, to_network

from oracles import random_network, random_widths

F = Fraction


def test_identity_histogram_is_binomial():
    hist = sample_histogram(identity_network(), ConstraintSystem.box([-1], [1]), 10_000, seed=0)
    assert {p for p, _ in hist} == {(0,), (1,)}
    assert sum(c for _, c in hist) == 10_000
    sigma = math.sqrt(10_000 * 0.25)
    assert all(abs(c - 5000) <= 4 * sigma for _, c in hist)


def test_single_pattern_histogram():
    hist = sample_histogram(identity_network(), ConstraintSystem.box([F(1, 2)], [2]), 10_000)
    assert hist == [((1,), 10_000)]


def test_histogram_sorted_and_covered():
    net = toy_network()
    box = ConstraintSystem.box([-1, -1], [1, 1])
    hist = sample_histogram(net, box, 5000, seed=3)
    counts = [c for _, c in hist]
    assert counts == sorted(counts, reverse=True)
    assert {p for p, _ in hist} <= set(enumerate_facets(net, box).patterns())


def test_histogram_respects_non_box_domain():
    tri = ConstraintSystem.box([0, 0], [1, 1]).add(ge(AffineForm.of([-1, -1], 1)))
    hist = sample_histogram(toy_network(), tri, 2000, seed=1)
    assert sum(c for _, c in hist) == 2000
    # x1 + x2 <= 1 rules out both of the first two neurons being active together
    assert all(not (p[0] and p[1]) for p, _ in hist)


def test_histogram_independent_of_workers():
    net = random_network(random.Random(2), 2, [3, 3])
    box = ConstraintSystem.box([-2, -2], [2, 2])
    assert sample_histogram(net, box, 9000, 4) == sample_histogram(net, box, 9000, 4, workers=2)


def test_concentration_examples():
    assert concentration([((0,), 50), ((1,), 50)], 0.7) == 2
    assert concentration([((0,), 70), ((1,), 20), ((2,), 10)], 0.7) == 1
    hist = [((i,), c) for i, c in enumerate([40, 30, 20, 10, 0])]
    assert concentration(hist, 1.0) == 4


@given(st.lists(st.integers(0, 100), min_size=1, max_size=12), st.floats(0.01, 1.0), st.floats(0.01, 1.0))
def test_concentration_monotone(counts, a, b):
    hist = [((i,), c) for i, c in enumerate(counts)]
    lo, hi = sorted((a, b))
    assert concentration(hist, lo) <= concentration(hist, hi)


def test_naive_bound():
    assert naive_bound(identity_network()) == 2
    net = to_network(init_params(make_architecture("simple", 4), 0), 4)
    assert net.relu_count == 14 and naive_bound(net) == 16384


def test_count_below_naive_bound():
    rng = random.Random(9)
    for _ in range(10):
        net = random_network(rng, 2, random_widths(rng, 8))
        assert count_facets(net, ConstraintSystem.box([-2, -2], [2, 2])) <= naive_bound(net)


def test_empty_histogram_csv(tmp_path):
    write_histogram_csv(tmp_path / "h.csv", [])
    assert (tmp_path / "h.csv").read_text() == "rank,count\n"


class _Log:
    losses = [1.5, 0.25]
    accuracies = [0.1, 0.5]
    penalties = [0.0, 0.125]
    accuracy = 0.5


def test_report_bundle_is_deterministic(tmp_path):
    net = toy_network()
    box = ConstraintSystem.box([-1, -1], [1, 1])
    fs = enumerate_facets(net, box)
    hist = sample_histogram(net, box, 1000)
    a = report(tmp_path / "a", net, fs, hist, _Log(), architecture="toy", mmr=True)
    b = report(tmp_path / "b", net, fs, hist, _Log(), architecture="toy", mmr=True)
    for k in a:
        assert a[k].read_bytes() == b[k].read_bytes()
    lines = a["facets"].read_text().splitlines()
    assert lines[0] == "dimension,architecture,mmr,facet_count,naive_bound,accuracy,external_bound"
    assert lines[1] == f"2,toy,1,{count_facets(net, box)},8,0.5,"
    assert a["training"].read_text().splitlines()[1:] == ["1,1.5,0.1,0.0", "2,0.25,0.5,0.125"]


def test_facets_csv_rows(tmp_path):
    rows = [FacetRow(2, "simple", False, 6, 128, 0.9), FacetRow(2, "simple", True, 2, 128, 0.75, 40.0)]
    text = write_facets_csv(tmp_path / "f.csv", rows).read_text()
    assert text.splitlines()[1:] == ["2,simple,0,6,128,0.9,", "2,simple,1,2,128,0.75,40.0"]
