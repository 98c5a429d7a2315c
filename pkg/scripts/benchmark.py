"""Time one bottom-up run per mode on trees of growing size."""
from __future__ import annotations

import argparse
import time

import numpy as np

from bouth.bottomup import ProcedureConfig, run_one_stage, run_two_stage
from bouth.simulate import sample_leaf_ps, select_drivers, synthetic_taxonomy
from bouth.stats import make_rng
from bouth.tree import build_complete


def trees():
    yield "binary 2^7", build_complete(2, 8)
    yield "bushy 10^3", build_complete(10, 4)
    yield "taxonomy 2360", synthetic_taxonomy()
    yield "bushy 10^5", build_complete(10, 6)


def timed(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    print(f"{'tree':<15}{'nodes':>9}  {'unweighted':>11}{'weighted':>11}{'lf':>11}{'two-stage':>11}")
    for name, tree in trees():
        truth = select_drivers(tree, "C2", make_rng(5, 0), "file", level=2,
                               count=min(10, len(tree.members(2))))
        p = sample_leaf_ps(tree, truth, "beta", 4.0, make_rng(5, 1))
        cols = []
        for mode in ("unweighted", "weighted", "least_favorable"):
            cfg = ProcedureConfig(q=0.1, mode=mode)
            cols.append(timed(lambda: run_one_stage(tree, p, cfg), args.repeat))
        cfg = ProcedureConfig(q=0.1, mode="weighted", two_stage=(0.05, 0.05))
        cols.append(timed(lambda: run_two_stage(tree, p, cfg), args.repeat))
        print(f"{name:<15}{tree.n_nodes:>9}  " + "".join(f"{c:>10.3f}s" for c in cols))


if __name__ == "__main__":
    main()
