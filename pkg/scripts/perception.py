"""Train an obstacle-detection net on side x side images and decide both properties.

Each precondition polytope is enumerated on its own box, which is much
smaller than the whole cube [0, 1]^(side^2).

    python3 scripts/perception.py --side 3
"""

import argparse
import time
import warnings

from disco.facets import enumerate_facets
from disco.lp import bounding_box, ConstraintSystem
from disco.network import make_architecture
from disco.train import TrainConfig, gen_perception, train
from disco.verify import VerificationTask, VerifyConfig, perception_properties, verify


def decide(net, task):
    """Verify a task one precondition at a time; stop at the first counterexample."""
    facets = 0
    for k, pre in enumerate(task.preconditions):
        box = ConstraintSystem.box(*bounding_box(pre))
        fs = enumerate_facets(net, box)
        facets += fs.count
        v = verify(net, VerificationTask((pre,), task.postcondition, task.name), fs, VerifyConfig(fail_fast=True))
        if not v.holds:
            return v, facets, k
    return v, facets, None


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--side", type=int, default=3)
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--samples", type=int, default=400)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # widths of 25/2 and 25/4 are floored
        arch = make_architecture("perception", args.side ** 2)
    data = gen_perception(args.side, args.samples, args.seed)
    t = time.perf_counter()
    net, res = train(arch, data, TrainConfig(epochs=args.epochs, seed=args.seed, lr=0.01))
    print(f"{args.side}x{args.side}: hidden {arch.hidden}, accuracy {res.accuracy:.3f}, trained in {time.perf_counter() - t:.1f}s", flush=True)
    for task in perception_properties(args.side):
        t = time.perf_counter()
        v, facets, k = decide(net, task)
        where = ""
        if v.counterexample is not None:
            where = f" (precondition {k}, output {float(v.counterexample.output[0]):.4f})"
        print(f"{task.name}: {v.status}{where}; {facets} facets, {time.perf_counter() - t:.1f}s", flush=True)


if __name__ == "__main__":
    main()
