"""Command-line interface.

Exit codes: 0 success / property holds, 1 property violated, 2 usage or
runtime error. Defaults for any flag can be put in ``disco.json`` in the
working directory (or the file named by ``--config``), keyed by the flag
name with dashes replaced by underscores.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import analysis
from .facets import EnumConfig, dump_facets, enumerate_facets, load_facets
from .lp import ConstraintSystem, bounding_box
from .network import Network, load_network, save_network
from .rational import to_fraction
from .verify import VerifyConfig, load_task, verdict_to_dict, verify


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _read_net(path) -> Network:
    return load_network(Path(path).read_text())


def _parse_domain(text: str, dim: int) -> ConstraintSystem:
    """``lo,hi`` for every coordinate, or ``lo1,hi1;lo2,hi2;...``."""
    parts = [p for p in text.split(";") if p.strip()]
    pairs = []
    for p in parts:
        lo, hi = (to_fraction(v.strip()) for v in p.split(","))
        pairs.append((lo, hi))
    if len(pairs) == 1:
        pairs *= dim
    if len(pairs) != dim:
        raise UsageError(f"domain has {len(pairs)} intervals, network has {dim} inputs")
    if any(lo > hi for lo, hi in pairs):
        raise UsageError("domain interval with lo > hi")
    return ConstraintSystem.box([p[0] for p in pairs], [p[1] for p in pairs])


def _hull_of(task) -> ConstraintSystem:
    los, his = zip(*(bounding_box(p) for p in task.preconditions))
    lo = [min(v) for v in zip(*los)]
    hi = [max(v) for v in zip(*his)]
    return ConstraintSystem.box(lo, hi)


def _emit(args, text: str, doc: dict) -> None:
    if args.json:
        print(json.dumps(doc, sort_keys=True))
    else:
        print(text)


def _enum_config(args) -> EnumConfig:
    return EnumConfig(parallel=args.workers > 1, workers=args.workers)


# -- subcommands ---------------------------------------------------------------

def cmd_train(args) -> int:
    from .network import make_architecture
    from .train import MmrConfig, TrainConfig, gen_multiplication, gen_perception, train

    if args.problem == "multiplication":
        data = gen_multiplication(args.n, args.samples, args.data_seed)
        arch = make_architecture(args.arch, args.n)
    else:
        data = gen_perception(args.n, args.samples, args.data_seed)
        arch = make_architecture("perception", args.n * args.n)
    mmr = None
    if args.mmr_weight > 0:
        mmr = MmrConfig(gamma_rb=args.mmr_gamma, p=args.mmr_p, weight=args.mmr_weight)
    cfg = TrainConfig(lr=args.lr, epochs=args.epochs, batch=args.batch, seed=args.seed, mmr=mmr)
    net, res = train(arch, data, cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_network(net, out / "net.json")
    analysis.write_training_csv(out / "training.csv", res.losses, res.accuracies, res.penalties)
    metrics = {
        "problem": args.problem,
        "n": args.n,
        "architecture": arch.name,
        "mmr": mmr is not None,
        "accuracy": res.accuracy,
        "final_loss": res.losses[-1] if res.losses else None,
    }
    (out / "metrics.json").write_text(json.dumps(metrics, indent=1, sort_keys=True) + "\n")
    _emit(args, f"trained {arch.name} N={args.n}: accuracy {res.accuracy:.4f} -> {out / 'net.json'}", metrics)
    return 0


def cmd_enumerate(args) -> int:
    net = _read_net(args.net)
    domain = _parse_domain(args.domain, net.input_dim)
    fs = enumerate_facets(net, domain, _enum_config(args))
    if args.out:
        dump_facets(fs, args.out)
    _emit(args, str(fs.count), {"count": fs.count, "stats": fs.stats, "out": args.out})
    return 0


def cmd_verify(args) -> int:
    net = _read_net(args.net)
    task = load_task(args.property)
    if args.facets:
        fs = load_facets(args.facets)
    else:
        domain = _parse_domain(args.domain, net.input_dim) if args.domain else _hull_of(task)
        fs = enumerate_facets(net, domain, _enum_config(args))
    cfg = VerifyConfig(fail_fast=args.fail_fast, parallel=args.workers > 1, workers=args.workers)
    verdict = verify(net, task, fs, cfg)
    doc = verdict_to_dict(verdict)
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=1) + "\n")
    text = verdict.status
    if verdict.counterexample is not None:
        cex = verdict.counterexample
        text += f"\ncounterexample x = ({', '.join(str(v) for v in cex.input)}), f(x) = ({', '.join(str(v) for v in cex.output)})"
    _emit(args, text, doc)
    return 0 if verdict.holds else 1


def cmd_export(args) -> int:
    from .export import to_milp_lp, to_smtlib

    net = _read_net(args.net)
    task = load_task(args.property)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    indices = [args.precondition] if args.precondition is not None else range(len(task.preconditions))
    for k in indices:
        stem = task.name if len(task.preconditions) == 1 else f"{task.name}.{k}"
        if args.format in ("smt2", "both"):
            p = out / f"{stem}.smt2"
            p.write_text(to_smtlib(net, task, precondition=k, simplify=args.simplify))
            written.append(str(p))
        if args.format in ("lp", "both"):
            p = out / f"{stem}.lp"
            p.write_text(to_milp_lp(net, task, precondition=k))
            written.append(str(p))
    _emit(args, "\n".join(written), {"files": written})
    return 0


def cmd_sample(args) -> int:
    net = _read_net(args.net)
    domain = _parse_domain(args.domain, net.input_dim)
    hist = analysis.sample_histogram(net, domain, args.samples, args.seed, workers=args.workers)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    analysis.write_histogram_csv(out, hist)
    doc = {
        "patterns": len(hist),
        "samples": args.samples,
        "top": [{"pattern": "".join(map(str, p)), "count": c} for p, c in hist[:10]],
        "out": str(out),
    }
    _emit(args, f"{len(hist)} patterns hit by {args.samples} samples -> {out}", doc)
    return 0


def cmd_bounds(args) -> int:
    net = _read_net(args.net)
    bound = analysis.naive_bound(net)
    _emit(args, str(bound), {"relu_count": net.relu_count, "naive_bound": bound})
    return 0


def cmd_report(args) -> int:
    net = _read_net(args.net)
    domain = _parse_domain(args.domain, net.input_dim)
    if args.facets:
        fs = load_facets(args.facets)
        count = fs.count
    else:
        count = enumerate_facets(net, domain, EnumConfig(parallel=args.workers > 1, workers=args.workers, collect="count-only")).count
    hist = analysis.sample_histogram(net, domain, args.samples, args.seed, workers=args.workers)
    training = None
    if args.metrics:
        training = _TrainingLog.from_dir(Path(args.metrics))
    paths = analysis.report(
        args.out_dir,
        net,
        count,
        hist,
        training,
        architecture=args.arch,
        mmr=args.mmr,
        accuracy=training.accuracy if training else None,
    )
    doc = {k: str(v) for k, v in paths.items()}
    doc["facet_count"] = count
    _emit(args, "\n".join(str(v) for v in paths.values()), doc)
    return 0


class _TrainingLog:
    """Training metrics read back from a ``train`` output directory."""

    def __init__(self, losses, accuracies, penalties, accuracy):
        self.losses, self.accuracies, self.penalties, self.accuracy = losses, accuracies, penalties, accuracy

    @classmethod
    def from_dir(cls, d: Path) -> "_TrainingLog":
        import csv

        losses, accs, pens = [], [], []
        with open(d / "training.csv") as fh:
            for row in csv.DictReader(fh):
                losses.append(float(row["loss"]))
                accs.append(float(row["accuracy"]))
                pens.append(float(row["mmr_penalty"]))
        acc = None
        if (d / "metrics.json").exists():
            acc = json.loads((d / "metrics.json").read_text()).get("accuracy")
        return cls(losses, accs, pens, acc)


# -- parser --------------------------------------------------------------------

def build_parser() -> _Parser:
    common = _Parser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable output on stdout")
    common.add_argument("--json-errors", action="store_true", help="report failures as JSON on stderr")
    common.add_argument("--config", help="JSON file with flag defaults (default: ./disco.json)")
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--seed", type=int, default=0)

    p = _Parser(prog="disco", description="Facet enumeration and verification for small ReLU networks.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", parents=[common], help="train a benchmark network")
    t.add_argument("--problem", choices=["multiplication", "perception"], default="multiplication")
    t.add_argument("--n", type=int, default=2, help="input count (multiplication) or image side (perception)")
    t.add_argument("--arch", choices=["simple", "big", "super"], default="simple")
    t.add_argument("--samples", type=int, default=200)
    t.add_argument("--data-seed", type=int, default=0, help="dataset seed; --seed drives the initialisation")
    t.add_argument("--epochs", type=int, default=100)
    t.add_argument("--lr", type=float, default=0.02)
    t.add_argument("--batch", type=int, default=10)
    t.add_argument("--mmr-weight", type=float, default=0.0)
    t.add_argument("--mmr-gamma", type=float, default=0.5)
    t.add_argument("--mmr-p", default="2", choices=["1", "2", "inf"])
    t.add_argument("--out-dir", default="out")

    e = sub.add_parser("enumerate", parents=[common], help="enumerate facets over a box")
    e.add_argument("--net", required=True)
    e.add_argument("--domain", required=True, help="lo,hi (all inputs) or lo1,hi1;lo2,hi2;...")
    e.add_argument("--out", help="facet set JSON")

    v = sub.add_parser("verify", parents=[common], help="verify a property facet by facet")
    v.add_argument("--net", required=True)
    v.add_argument("--property", required=True)
    v.add_argument("--facets", help="facet set JSON from `enumerate` (else enumerated on the fly)")
    v.add_argument("--domain", help="enumeration box when --facets is absent (default: precondition hull)")
    v.add_argument("--fail-fast", action="store_true")
    v.add_argument("--out", help="verdict report JSON")

    x = sub.add_parser("export", parents=[common], help="write SMT-LIB / CPLEX LP encodings")
    x.add_argument("--net", required=True)
    x.add_argument("--property", required=True)
    x.add_argument("--format", choices=["smt2", "lp", "both"], default="both")
    x.add_argument("--precondition", type=int)
    x.add_argument("--simplify", action="store_true", help="drop ite for neurons fixed by interval bounds")
    x.add_argument("--out-dir", default="out")

    s = sub.add_parser("sample", parents=[common], help="histogram of sampled activation patterns")
    s.add_argument("--net", required=True)
    s.add_argument("--domain", required=True)
    s.add_argument("--samples", type=int, default=10000)
    s.add_argument("--out", default="histogram.csv")

    b = sub.add_parser("bounds", parents=[common], help="print the naive 2^m facet bound")
    b.add_argument("--net", required=True)

    r = sub.add_parser("report", parents=[common], help="write the CSV report bundle")
    r.add_argument("--net", required=True)
    r.add_argument("--domain", required=True)
    r.add_argument("--facets")
    r.add_argument("--samples", type=int, default=10000)
    r.add_argument("--metrics", help="output directory of a `train` run")
    r.add_argument("--arch", default="")
    r.add_argument("--mmr", action="store_true")
    r.add_argument("--out-dir", default="out")
    return p


def _apply_config(parser: _Parser, argv: list[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    path = Path(known.config) if known.config else Path("disco.json")
    if not path.exists():
        if known.config:
            raise UsageError(f"config file {path} not found")
        return
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise UsageError(f"config file {path} must hold a JSON object")
    doc = {k.replace("-", "_"): v for k, v in doc.items()}
    for action in parser._subparsers._group_actions:
        for sp in action.choices.values():
            dests = {a.dest for a in sp._actions}
            sp.set_defaults(**{k: v for k, v in doc.items() if k in dests})
            for a in sp._actions:
                if a.dest in doc and a.required:
                    a.required = False


HANDLERS = {
    "train": cmd_train,
    "enumerate": cmd_enumerate,
    "verify": cmd_verify,
    "export": cmd_export,
    "sample": cmd_sample,
    "bounds": cmd_bounds,
    "report": cmd_report,
}


def run(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    json_errors = "--json-errors" in argv
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        if args.command == "train" and args.mmr_p != "inf":
            args.mmr_p = int(args.mmr_p)
        elif args.command == "train":
            args.mmr_p = float("inf")
        if args.workers < 1:
            raise UsageError("--workers must be at least 1")
        return HANDLERS[args.command](args)
    except UsageError as exc:
        _fail(json_errors, "usage", str(exc), parser.format_usage())
    except (OSError, ValueError, RuntimeError, KeyError) as exc:
        _fail(json_errors, type(exc).__name__, str(exc), None)
    return 2


def _fail(json_errors: bool, kind: str, message: str, usage: str | None) -> None:
    if json_errors:
        print(json.dumps({"error": kind, "message": message, "exit_code": 2}), file=sys.stderr)
    else:
        if usage:
            sys.stderr.write(usage)
        print(f"error: {message}", file=sys.stderr)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
