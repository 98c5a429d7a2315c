"""``bouth test`` runs one procedure on a lineage table; ``bouth simulate``
runs a Monte-Carlo scenario; ``bouth tree`` dumps a lineage table's tree."""
from __future__ import annotations

import argparse
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import conjunction_method, naive_method, top_down_method
from .bottomup import ProcedureConfig, driver_mask, run_one_stage, run_two_stage
from .simulate import DEFAULT_GRID, METHODS, PATTERNS, SimScenario, make_tree, run_scenario
from .tree import TreeError, build_from_lineages
from .tsvio import (RESULT_COLUMNS, InputError, digest, read_lineage_tsv, result_rows,
                    write_edge_list, write_manifest, write_metrics, write_table)

TEST_METHODS = ("weighted", "unweighted", "lf", "two-stage", "naive", "topdown", "conjunction")


class UsageError(ValueError):
    pass


def _unit(name):
    def parse(s):
        try:
            v = float(s)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be a number, got {s!r}") from None
        if not 0 < v < 1:
            raise argparse.ArgumentTypeError(f"{name} must lie in (0, 1), got {v}")
        return v
    return parse


def _grid(s):
    try:
        vals = tuple(float(x) for x in s.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad effect grid {s!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty effect grid")
    return vals


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bouth", description=__doc__)
    ap.add_argument("--version", action="version", version=f"bouth {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    t = sub.add_parser("test", help="test a tree of leaf p-values")
    t.add_argument("--input", required=True, help="TSV with leaf_id, lineage, p_value")
    t.add_argument("--q", type=_unit("q"), default=0.10)
    t.add_argument("--tau0", type=_unit("tau0"), default=0.3)
    t.add_argument("--method", choices=TEST_METHODS, default="weighted")
    t.add_argument("--q1", type=_unit("q1"), help="leaf-level target (two-stage)")
    t.add_argument("--q-rest", type=_unit("q-rest"), help="target above the leaves (two-stage)")
    t.add_argument("--topdown-family-q", type=_unit("topdown-family-q"))
    t.add_argument("--output", required=True)

    s = sub.add_parser("simulate", help="Monte-Carlo error rates and accuracy")
    s.add_argument("--tree", required=True, help="binary, bushy or an edge-list TSV")
    s.add_argument("--pattern", required=True, choices=PATTERNS)
    s.add_argument("--model", choices=tuple(DEFAULT_GRID), default="beta")
    s.add_argument("--beta", type=_grid, help="comma-separated effect sizes")
    s.add_argument("--q", type=_unit("q"), default=0.10)
    s.add_argument("--tau0", type=_unit("tau0"), default=0.3)
    s.add_argument("--q1", type=_unit("q1"), default=0.05)
    s.add_argument("--q-rest", type=_unit("q-rest"), default=0.05)
    s.add_argument("--reps", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--methods", default="all", help="'all' or a comma-separated subset")
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--fix-drivers", action="store_true")
    s.add_argument("--driver-level", type=int)
    s.add_argument("--driver-count", type=int)
    s.add_argument("--driver-node")
    s.add_argument("--topdown-family-q", type=_unit("topdown-family-q"))
    s.add_argument("--output", required=True)

    d = sub.add_parser("tree", help="write the tree of a lineage table as an edge list")
    d.add_argument("--input", required=True)
    d.add_argument("--output", required=True)
    return ap


def _load(path):
    try:
        return build_from_lineages(read_lineage_tsv(path))
    except TreeError as e:
        raise InputError(f"{path}: {e}") from None


def cmd_test(args) -> dict:
    tree, leaf_p = _load(args.input)
    m = args.method
    head = list(RESULT_COLUMNS)
    if m in ("weighted", "unweighted", "lf"):
        cfg = ProcedureConfig(q=args.q, tau0=args.tau0,
                              mode="least_favorable" if m == "lf" else m)
        res = run_one_stage(tree, leaf_p, cfg)
        st = res.state
        rows = result_rows(tree, st.p_value, res.reported, res.reported & st.auto_detected,
                           res.driver)
    elif m == "two-stage":
        q1 = args.q1 if args.q1 is not None else args.q / 2
        qr = args.q_rest if args.q_rest is not None else args.q / 2
        cfg = ProcedureConfig(q=args.q, tau0=args.tau0, two_stage=(q1, qr))
        res = run_two_stage(tree, leaf_p, cfg)
        st = res.state
        head = ["stage"] + head
        rows = []
        for k, rep in ((1, res.stage1), (2, res.stage2)):
            drv = driver_mask(tree, rep)
            rows += [[str(k)] + r for r in result_rows(tree, st.p_value, rep,
                                                       rep & st.auto_detected, drv)]
    else:
        if m == "naive":
            rep = naive_method(tree, leaf_p, args.q)
        elif m == "topdown":
            rep = top_down_method(tree, leaf_p, args.q, args.topdown_family_q)
        else:
            rep = conjunction_method(tree, leaf_p, args.q)
        head = ["method"] + head
        none = np.zeros(tree.n_nodes, dtype=bool)
        rows = [[m] + r for r in result_rows(tree, rep.p_value, rep.detected, none, rep.drivers)]
    write_table(args.output, head, rows)
    return {"method": m, "q": args.q, "tau0": args.tau0, "q1": args.q1, "q_rest": args.q_rest,
            "topdown_family_q": args.topdown_family_q, "n_nodes": tree.n_nodes,
            "n_leaves": int(tree.is_leaf.sum()), "n_levels": tree.n_levels}


def cmd_simulate(args) -> dict:
    if args.methods == "all":
        methods = METHODS
    else:
        methods = tuple(x.strip() for x in args.methods.split(",") if x.strip())
        bad = [x for x in methods if x not in METHODS]
        if bad or not methods:
            raise UsageError(f"unknown methods {bad}; choose from {', '.join(METHODS)}")
    if args.threads < 1:
        raise UsageError("--threads must be >= 1")
    if args.tree not in ("binary", "bushy") and not Path(args.tree).is_file():
        raise UsageError(f"--tree must be binary, bushy or an existing file, got {args.tree!r}")
    seed = args.seed
    env = os.environ.get("BOUTH_SEED")
    if env:
        try:
            seed = int(env)
        except ValueError:
            raise UsageError(f"BOUTH_SEED must be an integer, got {env!r}") from None
    grid = args.beta if args.beta is not None else DEFAULT_GRID[args.model]
    sc = SimScenario(tree_spec=args.tree, pattern=args.pattern, effect_model=args.model,
                     effect_grid=grid, q=args.q, reps=args.reps, seed=seed, methods=methods,
                     tau0=args.tau0, two_stage=(args.q1, args.q_rest),
                     fix_drivers=args.fix_drivers, topdown_family_q=args.topdown_family_q,
                     driver_level=args.driver_level, driver_count=args.driver_count,
                     driver_node=args.driver_node)
    tree, _ = make_tree(args.tree)
    res = run_scenario(sc, threads=args.threads, tree=tree)
    write_metrics(args.output, res.rows)
    return {"tree": args.tree, "pattern": sc.pattern, "model": sc.effect_model,
            "grid": list(grid), "q": sc.q, "tau0": sc.tau0, "two_stage": list(sc.two_stage),
            "reps": sc.reps, "seed": seed, "methods": list(methods), "threads": args.threads,
            "fix_drivers": sc.fix_drivers, "topdown_family_q": sc.topdown_family_q,
            "driver_level": sc.driver_level, "driver_count": sc.driver_count,
            "driver_node": sc.driver_node}


def cmd_tree(args) -> dict:
    tree, _ = _load(args.input)
    write_edge_list(tree, args.output)
    return {"n_nodes": tree.n_nodes, "n_levels": tree.n_levels}


COMMANDS = {"test": cmd_test, "simulate": cmd_simulate, "tree": cmd_tree}


def _stamp():
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    start, t0 = _stamp(), time.perf_counter()
    try:
        config = COMMANDS[args.command](args)
    except (InputError, TreeError, UsageError, ValueError, OSError) as e:
        print(f"bouth {args.command}: error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001
        print(f"bouth {args.command}: internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    inputs = {}
    for name in ("input", "tree"):
        path = getattr(args, name, None)
        if path and Path(path).is_file():
            inputs[path] = digest(path)
    write_manifest(str(args.output) + ".manifest.json", {
        "command": ["bouth"] + argv,
        "subcommand": args.command,
        "config": config,
        "seed": config.get("seed"),
        "inputs": inputs,
        "start": start,
        "stop": _stamp(),
        "wall_seconds": round(time.perf_counter() - t0, 3),
        "version": __version__,
        "numpy": np.__version__,
    })
    return 0


if __name__ == "__main__":
    sys.exit(main())
