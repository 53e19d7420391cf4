"""Facet statistics: sampling histograms, the naive 2^m bound, CSV reports."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import asdict, dataclass, fields
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .facets import FacetSet, _pool
from .lp import ConstraintSystem, bounding_box
from .network import Network, Pattern, patterns_batch

Histogram = list[tuple[Pattern, int]]

CHUNK = 4096


def _box_floats(domain: ConstraintSystem):
    lo, hi = bounding_box(domain)
    return np.array([float(v) for v in lo]), np.array([float(v) for v in hi])


def _inside(domain: ConstraintSystem, X: np.ndarray) -> np.ndarray:
    ok = np.ones(len(X), dtype=bool)
    for c in domain.constraints:
        v = X @ np.array([float(a) for a in c.form.coeffs]) + float(c.form.const)
        ok &= (v < 0) if c.strict else (v >= 0)
    return ok


def _sample_chunk(net: Network, domain: ConstraintSystem, n: int, seed) -> Counter:
    rng = np.random.default_rng(seed)
    lo, hi = _box_floats(domain)
    got: Counter = Counter()
    left = n
    while left:
        X = rng.uniform(lo, hi, size=(left, len(lo)))
        X = X[_inside(domain, X)]
        got.update(patterns_batch(net, X))
        left -= len(X)
    return got


def _chunk_remote(net, domain, n, seed) -> Counter:
    return _sample_chunk(net, domain, n, seed)


def sample_histogram(
    net: Network,
    domain: ConstraintSystem,
    n_samples: int,
    seed: int = 0,
    workers: int = 1,
) -> Histogram:
    """Hit counts per activation pattern for uniform samples of ``domain``.

    Points are drawn uniformly from the bounding box and rejected outside the
    domain, so boxes are sampled exactly. Chunks get independent child seeds;
    the result does not depend on ``workers``.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    sizes = [CHUNK] * (n_samples // CHUNK) + ([n_samples % CHUNK] if n_samples % CHUNK else [])
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))
    total: Counter = Counter()
    if workers > 1 and len(sizes) > 1:
        with _pool(workers, None, ()) as pool:
            for part in pool.map(_chunk_remote, [net] * len(sizes), [domain] * len(sizes), sizes, seeds):
                total.update(part)
    else:
        for n, s in zip(sizes, seeds):
            total.update(_sample_chunk(net, domain, n, s))
    return sorted(total.items(), key=lambda kv: (-kv[1], kv[0]))


def concentration(hist: Histogram, share: float) -> int:
    """Smallest k such that the k most hit facets hold at least ``share`` of the samples."""
    if not 0 < share <= 1:
        raise ValueError("share must lie in (0, 1]")
    counts = sorted((c for _, c in hist), reverse=True)
    total = sum(counts)
    if total == 0:
        return 0
    target = Fraction(str(share)) * total  # 0.7 means 7/10, not its binary neighbour
    acc = 0
    for k, c in enumerate(counts, start=1):
        acc += c
        if acc >= target:
            return k
    return len(counts)


def naive_bound(net: Network) -> int:
    return 2 ** net.relu_count


# -- CSV reports ---------------------------------------------------------------

@dataclass(frozen=True)
class FacetRow:
    dimension: int
    architecture: str
    mmr: bool
    facet_count: int
    naive_bound: int
    accuracy: float | None = None
    external_bound: float | None = None


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(v) for v in r])
    return path


def write_facets_csv(path, rows: Sequence[FacetRow]) -> Path:
    header = [f.name for f in fields(FacetRow)]
    return _write(Path(path), header, [tuple(asdict(r).values()) for r in rows])


def write_histogram_csv(path, hist: Histogram) -> Path:
    return _write(Path(path), ["rank", "count"], [(i, c) for i, (_, c) in enumerate(hist, start=1)])


def write_training_csv(path, losses, accuracies, penalties) -> Path:
    rows = [(e, l, a, p) for e, (l, a, p) in enumerate(zip(losses, accuracies, penalties), start=1)]
    return _write(Path(path), ["epoch", "loss", "accuracy", "mmr_penalty"], rows)


def report(
    out_dir,
    net: Network,
    facets: FacetSet | int,
    histogram: Histogram | None = None,
    training=None,
    architecture: str = "",
    mmr: bool = False,
    accuracy: float | None = None,
    external_bound: float | None = None,
) -> dict[str, Path]:
    """Write ``facets.csv``, ``histogram.csv`` and ``training.csv`` into ``out_dir``.

    ``facets`` is a FacetSet or a bare count; ``training`` anything with
    ``losses``, ``accuracies`` and ``penalties`` lists.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    count = facets if isinstance(facets, int) else facets.count
    if accuracy is None and training is not None:
        accuracy = training.accuracy
    row = FacetRow(net.input_dim, architecture, mmr, count, naive_bound(net), accuracy, external_bound)
    paths = {
        "facets": write_facets_csv(out / "facets.csv", [row]),
        "histogram": write_histogram_csv(out / "histogram.csv", histogram or []),
    }
    if training is not None:
        paths["training"] = write_training_csv(out / "training.csv", training.losses, training.accuracies, training.penalties)
    else:
        paths["training"] = write_training_csv(out / "training.csv", [], [], [])
    return paths
