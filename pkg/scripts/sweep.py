"""Nine-scenario sweep: binary, bushy and a synthetic taxonomy, each under C1, C2, C3.

Writes one metrics table with every method and effect size.

    python3 scripts/sweep.py --reps 1000 --threads 4 --output sweep.tsv
"""
from __future__ import annotations

import argparse
import tempfile
import time
from pathlib import Path

from bouth.simulate import METHODS, SimScenario, run_scenario, synthetic_taxonomy
from bouth.tsvio import write_edge_list, write_metrics

# drivers on the synthetic taxonomy: (level, count) per pattern
FILE_LAYOUT = {"C1": (1, 20), "C2": (4, 5), "C3": (6, 1)}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=200)
    ap.add_argument("--beta", default="2,3,4,5")
    ap.add_argument("--q", type=float, default=0.10)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--output", default="sweep.tsv")
    args = ap.parse_args(argv)
    grid = tuple(float(b) for b in args.beta.split(","))

    with tempfile.TemporaryDirectory() as tmp:
        taxonomy = Path(tmp) / "taxonomy.tsv"
        write_edge_list(synthetic_taxonomy(), taxonomy)
        rows = []
        for tree in ("binary", "bushy", str(taxonomy)):
            for pattern in ("C1", "C2", "C3"):
                extra = {}
                if tree == str(taxonomy):
                    extra = dict(zip(("driver_level", "driver_count"), FILE_LAYOUT[pattern]))
                sc = SimScenario(tree, pattern, effect_grid=grid, q=args.q, reps=args.reps,
                                 seed=args.seed, methods=METHODS, **extra)
                t0 = time.perf_counter()
                rows += run_scenario(sc, threads=args.threads).rows
                print(f"{sc.label(grid[0]).rsplit('/', 1)[0]}: {time.perf_counter() - t0:.1f}s")
    write_metrics(args.output, rows)
    print(f"wrote {len(rows)} rows to {args.output}")


if __name__ == "__main__":
    main()
