"""Train a 2-multiplication net, enumerate its facets, verify both bounds, write CSVs.

    python3 scripts/end_to_end.py --out-dir out/e2e
"""

import argparse
import json
import time
from pathlib import Path

from disco.analysis import concentration, report, sample_histogram
from disco.facets import dump_facets, enumerate_facets
from disco.network import make_architecture, save_network
from disco.train import TrainConfig, gen_multiplication, train
from disco.verify import multiplication_property, verdict_to_dict, verify


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2)
    ap.add_argument("--arch", default="simple")
    ap.add_argument("--epochs", type=int, default=2000)
    ap.add_argument("--samples", type=int, default=200)
    ap.add_argument("--seed", type=int, default=5)
    ap.add_argument("--out-dir", default="out/e2e")
    args = ap.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    data = gen_multiplication(args.n, args.samples, 0)
    net, res = train(make_architecture(args.arch, args.n), data, TrainConfig(epochs=args.epochs, seed=args.seed))
    save_network(net, out / "net.json")
    t1 = time.perf_counter()
    print(f"trained in {t1 - t0:.1f}s, accuracy {res.accuracy:.3f}")

    lower = multiplication_property(args.n, "lower")
    domain = lower.preconditions[0]
    fs = enumerate_facets(net, domain)
    dump_facets(fs, out / "facets.json")
    t2 = time.perf_counter()
    print(f"{fs.count} facets ({fs.stats['lp_calls']} LP calls) in {t2 - t1:.2f}s")

    for side in ("lower", "upper"):
        task = multiplication_property(args.n, side)
        v = verify(net, task, fs)
        (out / f"verdict-{side}.json").write_text(json.dumps(verdict_to_dict(v), indent=1) + "\n")
        msg = v.status
        if v.counterexample is not None:
            msg += f" at x = {[float(c) for c in v.counterexample.input]}"
        print(f"{side} bound: {msg}")
    t3 = time.perf_counter()

    hist = sample_histogram(net, domain, 10_000, seed=0)
    report(out, net, fs, hist, res, architecture=args.arch)
    print(f"facets holding 70% of samples: {concentration(hist, 0.7)} of {len(hist)} hit")
    print(f"verification {t3 - t2:.2f}s, total {time.perf_counter() - t0:.1f}s; CSVs in {out}")


if __name__ == "__main__":
    main()
