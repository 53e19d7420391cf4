"""Depth-first enumeration of the linear regions (facets) of a ReLU network.

Neurons are decided one at a time in topological order. Every stack of
constraints carries a witness point that satisfies it; the branch the witness
already lies in is feasible for free, and only the opposite branch costs an
LP call. When both branches are feasible the opposite one is forked off as a
new task, so independent subtrees can run on separate worker processes.
"""

from __future__ import annotations

import json
import multiprocessing as mp
from collections import deque
from concurrent.futures import FIRST_COMPLETED, ProcessPoolExecutor, wait
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from typing import Sequence

from .affine import AffineForm, LinearConstraint, Propagator, facet_output_forms, neuron_constraint
from .lp import ConstraintSystem, feasible_strict
from .network import Network, Pattern, forward
from .rational import encode, to_fraction

FORMAT = "disco-facets-v1"


class EnumerationError(RuntimeError):
    pass


class EmptyDomainError(ValueError):
    pass


@dataclass(frozen=True)
class Facet:
    pattern: Pattern
    system: ConstraintSystem
    output_forms: tuple[AffineForm, ...] | None
    witness: tuple[Fraction, ...] | None = None
    degenerate: bool = False

    def evaluate(self, x: Sequence) -> tuple[Fraction, ...]:
        return tuple(f(x) for f in self.output_forms)


@dataclass
class FacetSet:
    facets: list[Facet]
    domain: ConstraintSystem
    net_hash: str
    count: int = 0
    stats: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.count:
            self.count = len(self.facets)

    def patterns(self) -> set[Pattern]:
        return {f.pattern for f in self.facets}

    def __len__(self) -> int:
        return self.count


@dataclass(frozen=True)
class EnumConfig:
    parallel: bool = False
    workers: int = 1
    collect: str = "full"  # or "count-only"
    flag_degenerate: bool = True
    debug: bool = False


@dataclass
class _Task:
    bits: Pattern
    constraints: tuple[LinearConstraint, ...]
    tags: tuple[tuple, ...]
    witness: tuple[Fraction, ...]
    prop: Propagator | None = None

    def __getstate__(self):
        # The propagator is rebuilt from ``bits`` on the receiving side.
        return (self.bits, self.constraints, self.tags, self.witness)

    def __setstate__(self, state):
        self.bits, self.constraints, self.tags, self.witness = state
        self.prop = None


def _propagator(net: Network, bits: Pattern) -> Propagator:
    prop = Propagator(net)
    for b in bits:
        prop.push(b)
    return prop


def _is_degenerate(system: ConstraintSystem, witness) -> bool:
    """True when the region has an empty interior."""
    strict = []
    for c in system.constraints:
        if c.form.is_constant():
            continue  # holds everywhere on a feasible region
        strict.append(c if c.strict else LinearConstraint(-c.form, strict=True))
    if all(c.holds(witness) for c in strict):
        return False
    return not feasible_strict(ConstraintSystem(system.dim, tuple(strict))).ok


def _walk(net: Network, task: _Task, cfg: EnumConfig):
    """Follow one branch to a leaf; returns (facet or None, forked tasks, LP calls)."""
    prop = task.prop if task.prop is not None else _propagator(net, task.bits)
    cons, tags, w, bits = task.constraints, task.tags, task.witness, task.bits
    dim = net.input_dim
    forks = []
    lp_calls = 0
    while not prop.done:
        index = len(bits)
        form = prop.next_form()
        free_bit = 1 if form(w) >= 0 else 0
        other = neuron_constraint(form, 1 - free_bit)
        other_tag = ("neuron", index, 1 - free_bit)
        out = feasible_strict(ConstraintSystem(dim, cons + (other,), tags + (other_tag,)))
        lp_calls += 1
        if out.ok:
            fork_prop = prop.copy()
            fork_prop.push(1 - free_bit, form)
            forks.append(_Task(bits + (1 - free_bit,), cons + (other,), tags + (other_tag,), out.point, fork_prop))
        cons = cons + (neuron_constraint(form, free_bit),)
        tags = tags + (("neuron", index, free_bit),)
        bits = bits + (free_bit,)
        prop.push(free_bit, form)
        if cfg.debug and not all(c.holds(w) for c in cons):
            raise EnumerationError(f"witness left its stack at neuron {index}")
    if cfg.collect == "count-only":
        return None, forks, lp_calls
    system = ConstraintSystem(dim, cons, tags)
    degenerate = _is_degenerate(system, w) if cfg.flag_degenerate else False
    return Facet(bits, system, prop.output_forms(), w, degenerate), forks, lp_calls


# Worker-process state, installed once per process by the pool initializer.
_WORKER: dict = {}


def _init_worker(net: Network, cfg: EnumConfig):
    _WORKER["net"] = net
    _WORKER["cfg"] = cfg


def _walk_remote(task: _Task):
    return _walk(_WORKER["net"], task, _WORKER["cfg"])


def _pool(workers: int, initializer, initargs) -> ProcessPoolExecutor:
    ctx = mp.get_context("forkserver")
    return ProcessPoolExecutor(max_workers=workers, mp_context=ctx, initializer=initializer, initargs=initargs)


def enumerate_facets(
    net: Network,
    domain: ConstraintSystem,
    config: EnumConfig | None = None,
) -> FacetSet:
    """All activation patterns realised by some point of ``domain``, with their regions.

    The domain must be a non-empty bounded polytope (typically a box). The
    returned facets are sorted by pattern, so the result does not depend on
    the number of workers or on scheduling.
    """
    cfg = config or EnumConfig()
    if domain.dim != net.input_dim:
        raise ValueError(f"domain has dimension {domain.dim}, network expects {net.input_dim}")
    root_out = feasible_strict(domain)
    if not root_out.ok:
        raise EmptyDomainError("domain is empty")
    root = _Task((), domain.constraints, domain.tags, root_out.point, Propagator(net))

    facets: list[Facet] = []
    count = 0
    lp_calls = 1
    tasks = 0

    if cfg.parallel and cfg.workers > 1:
        with _pool(cfg.workers, _init_worker, (net, cfg)) as pool:
            pending = {pool.submit(_walk_remote, root)}
            while pending:
                done, pending = wait(pending, return_when=FIRST_COMPLETED)
                for fut in done:
                    facet, forks, calls = fut.result()
                    tasks += 1
                    count += 1
                    lp_calls += calls
                    if facet is not None:
                        facets.append(facet)
                    for t in forks:
                        pending.add(pool.submit(_walk_remote, t))
    else:
        stack = deque([root])
        while stack:
            facet, forks, calls = _walk(net, stack.pop(), cfg)
            tasks += 1
            count += 1
            lp_calls += calls
            if facet is not None:
                facets.append(facet)
            stack.extend(reversed(forks))

    facets.sort(key=lambda f: f.pattern)
    if cfg.collect == "full" and len({f.pattern for f in facets}) != len(facets):
        raise EnumerationError("duplicate activation pattern")
    stats = {"lp_calls": lp_calls, "tasks": tasks, "degenerate": sum(f.degenerate for f in facets)}
    return FacetSet(facets, domain, net.digest(), count, stats)


def count_facets(net: Network, domain: ConstraintSystem, config: EnumConfig | None = None) -> int:
    cfg = config or EnumConfig()
    cfg = EnumConfig(cfg.parallel, cfg.workers, "count-only", False, cfg.debug)
    return enumerate_facets(net, domain, cfg).count


def build_facet(net: Network, pattern: Sequence[int], domain: ConstraintSystem | None = None) -> Facet:
    """The region of a given pattern (not checked for feasibility)."""
    pattern = tuple(int(b) for b in pattern)
    pre, outs = facet_output_forms(net, pattern)
    system = domain if domain is not None else ConstraintSystem(net.input_dim)
    for i, (form, bit) in enumerate(zip(pre, pattern)):
        system = system.add(neuron_constraint(form, bit), ("neuron", i, bit))
    return Facet(pattern, system, outs)


def facet_of_point(net: Network, x: Sequence, domain: ConstraintSystem | None = None) -> Facet:
    """The facet containing ``x``. Pre-activations equal to zero count as active."""
    x = tuple(to_fraction(v) for v in x)
    if domain is not None and not domain.satisfied_by(x):
        raise ValueError("point lies outside the domain")
    _, pattern = forward(net, x)
    facet = build_facet(net, pattern, domain)
    return Facet(facet.pattern, facet.system, facet.output_forms, x)


# -- serialization -------------------------------------------------------------

def _form_doc(f: AffineForm) -> dict:
    return {"coeffs": [encode(a) for a in f.coeffs], "const": encode(f.const)}


def _form_from(doc: dict) -> AffineForm:
    return AffineForm(tuple(to_fraction(a) for a in doc["coeffs"]), to_fraction(doc["const"]))


def _constraint_doc(c: LinearConstraint, tag: tuple) -> dict:
    return {**_form_doc(c.form), "rel": "<" if c.strict else ">=", "tag": list(tag)}


def system_to_dict(sys: ConstraintSystem) -> dict:
    return {"dim": sys.dim, "constraints": [_constraint_doc(c, t) for c, t in zip(sys.constraints, sys.tags)]}


def system_from_dict(doc: dict) -> ConstraintSystem:
    cons, tags = [], []
    for c in doc["constraints"]:
        cons.append(LinearConstraint(_form_from(c), c["rel"] == "<"))
        tags.append(tuple(c.get("tag", ["domain"])))
    return ConstraintSystem(int(doc["dim"]), tuple(cons), tuple(tags))


def facetset_to_dict(fs: FacetSet) -> dict:
    n_domain = len(fs.domain.constraints)
    return {
        "format": FORMAT,
        "net_hash": fs.net_hash,
        "count": fs.count,
        "domain": system_to_dict(fs.domain),
        "facets": [
            {
                "pattern": "".join(map(str, f.pattern)),
                "degenerate": f.degenerate,
                "neuron_constraints": [
                    _constraint_doc(c, t)
                    for c, t in zip(f.system.constraints[n_domain:], f.system.tags[n_domain:])
                ],
                "output_forms": [_form_doc(o) for o in f.output_forms] if f.output_forms else None,
                "witness": [encode(v) for v in f.witness] if f.witness else None,
            }
            for f in fs.facets
        ],
        "stats": fs.stats,
    }


def facetset_from_dict(doc: dict) -> FacetSet:
    if doc.get("format") != FORMAT:
        raise ValueError(f"unsupported facet-set format {doc.get('format')!r}")
    domain = system_from_dict(doc["domain"])
    facets = []
    for fd in doc["facets"]:
        neurons = system_from_dict({"dim": domain.dim, "constraints": fd["neuron_constraints"]})
        outs = fd.get("output_forms")
        wit = fd.get("witness")
        facets.append(
            Facet(
                tuple(int(ch) for ch in fd["pattern"]),
                domain.extend(neurons),
                tuple(_form_from(o) for o in outs) if outs else None,
                tuple(to_fraction(v) for v in wit) if wit else None,
                bool(fd.get("degenerate", False)),
            )
        )
    return FacetSet(facets, domain, doc["net_hash"], doc.get("count", len(facets)), doc.get("stats", {}))


def dump_facets(fs: FacetSet, path) -> None:
    with open(path, "w") as fh:
        json.dump(facetset_to_dict(fs), fh)
        fh.write("\n")


def load_facets(path) -> FacetSet:
    with open(path) as fh:
        return facetset_from_dict(json.load(fh, parse_float=Decimal))
