"""Facet counts and accuracy with and without MMR at matched seeds.

Writes one facets.csv row per (seed, setting). Example:

    python3 scripts/mmr_sweep.py --n 2 --seeds 5 --gamma 0.2 0.5 --weight 0.1 1.0
"""

import argparse
import itertools
from pathlib import Path

from disco.analysis import FacetRow, naive_bound, write_facets_csv
from disco.facets import count_facets
from disco.lp import ConstraintSystem
from disco.network import make_architecture
from disco.train import MmrConfig, TrainConfig, gen_multiplication, train


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2)
    ap.add_argument("--arch", default="simple")
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--epochs", type=int, default=300)
    ap.add_argument("--samples", type=int, default=200)
    ap.add_argument("--gamma", type=float, nargs="+", default=[0.2])
    ap.add_argument("--weight", type=float, nargs="+", default=[0.1])
    ap.add_argument("--p", default="2", choices=["1", "2", "inf"])
    ap.add_argument("--out", default="out/mmr_sweep.csv")
    args = ap.parse_args()

    p = float("inf") if args.p == "inf" else int(args.p)
    arch = make_architecture(args.arch, args.n)
    data = gen_multiplication(args.n, args.samples, 0)
    domain = ConstraintSystem.box([0.5] * args.n, [2] * args.n)
    rows = []
    for seed in range(args.seeds):
        net, res = train(arch, data, TrainConfig(epochs=args.epochs, seed=seed))
        base = count_facets(net, domain)
        rows.append(FacetRow(args.n, args.arch, False, base, naive_bound(net), res.accuracy))
        print(f"seed {seed} plain: {base} facets, accuracy {res.accuracy:.3f}")
        for g, w in itertools.product(args.gamma, args.weight):
            cfg = TrainConfig(epochs=args.epochs, seed=seed, mmr=MmrConfig(gamma_rb=g, p=p, weight=w))
            net, res = train(arch, data, cfg)
            n = count_facets(net, domain)
            rows.append(FacetRow(args.n, args.arch, True, n, naive_bound(net), res.accuracy))
            print(f"seed {seed} mmr gamma={g} weight={w}: {n} facets, accuracy {res.accuracy:.3f}")
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_facets_csv(args.out, rows)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
