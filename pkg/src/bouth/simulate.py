"""Monte-Carlo comparison of the bottom-up procedures and the baselines.

Every replicate draws its own driver nodes and leaf p-values from streams
keyed by ``(seed, purpose, replicate, ...)``, so results do not depend on
the order or the process in which replicates run.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .baselines import conjunction_method, naive_method, top_down_method
from .bottomup import ProcedureConfig, run_one_stage, run_two_stage
from .metrics import (TruthModel, error_rates, false_fraction, pinpoint_rate, replay,
                      truth_conjunction, truth_modified, weighted_jaccard)
from .stats import make_rng, sample_beta_p, sample_gaussian_p
from .tree import TaxTree, build_complete, build_from_lineages

METHODS = ("unweighted", "weighted", "lf", "two-stage", "naive", "topdown", "conjunction")
DEFAULT_METHODS = ("unweighted", "weighted", "naive", "topdown", "conjunction")
PATTERNS = ("C1", "C2", "C3")
DEFAULT_GRID = {"beta": (1.5, 2.0, 3.0, 4.0, 6.0), "gaussian": (1.0, 2.0, 3.0, 4.0)}

# (level, count) of driver nodes per tree kind and causal pattern
DRIVER_LAYOUT = {
    "binary": {"C1": (1, 10), "C2": (4, 10), "C3": (7, 1)},
    "bushy": {"C1": (1, 20), "C2": (2, 10), "C3": (3, 1)},
    "file": {"C1": (1, 36), "C2": (4, 5), "C3": (-2, 1)},
}


def make_tree(spec: str) -> tuple[TaxTree, str]:
    """``binary`` (2 children, 10 levels), ``bushy`` (10 children, 4 levels) or an edge-list path."""
    if spec == "binary":
        return build_complete(2, 10), "binary"
    if spec == "bushy":
        return build_complete(10, 4), "bushy"
    from .tsvio import read_edge_list

    return read_edge_list(spec), "file"


def select_drivers(tree: TaxTree, pattern: str, rng: np.random.Generator,
                   kind: str = "file", level: int | None = None,
                   count: int | None = None, node: str | None = None) -> TruthModel:
    """Sample driver nodes for a causal pattern.

    ``level``/``count`` override the layout for the tree kind; a negative
    level counts down from the root level. ``node`` names a fixed driver.
    """
    if pattern not in PATTERNS:
        raise ValueError(f"unknown causal pattern {pattern!r}")
    if node is not None:
        if node not in tree.index:
            raise ValueError(f"no node named {node!r}")
        return TruthModel.from_drivers(tree, [tree.index[node]])
    dlev, dcount = DRIVER_LAYOUT[kind][pattern]
    dlev = dlev if level is None else level
    dcount = dcount if count is None else count
    if dlev < 0:
        dlev = tree.n_levels + dlev
    if not 1 <= dlev <= tree.n_levels:
        raise ValueError(f"driver level {dlev} outside the tree")
    pool = tree.members(dlev)
    if dcount > len(pool):
        raise ValueError(f"asked for {dcount} drivers but level {dlev} has {len(pool)} nodes")
    picked = rng.choice(pool, size=dcount, replace=False)
    return TruthModel.from_drivers(tree, np.sort(picked))


def sample_leaf_ps(tree: TaxTree, truth: TruthModel, model: str, beta: float,
                   rng: np.random.Generator) -> np.ndarray:
    """Per-node array with p-values on the leaves, NaN elsewhere."""
    out = np.full(tree.n_nodes, np.nan)
    leaves = tree.leaves
    out[leaves] = rng.random(len(leaves))
    assoc = np.flatnonzero(truth.associated_leaves)
    if model == "beta":
        out[assoc] = sample_beta_p(beta, rng, len(assoc))
    elif model == "gaussian":
        out[assoc] = sample_gaussian_p(beta, rng, len(assoc))
    else:
        raise ValueError(f"unknown effect model {model!r}")
    return out


@dataclass(frozen=True)
class SimScenario:
    tree_spec: str
    pattern: str
    effect_model: str = "beta"
    effect_grid: Sequence[float] = (3.0,)
    q: float = 0.10
    reps: int = 1000
    seed: int = 0
    methods: Sequence[str] = DEFAULT_METHODS
    tau0: float = 0.3
    two_stage: tuple[float, float] = (0.05, 0.05)
    fix_drivers: bool = False
    topdown_family_q: float | None = None
    driver_level: int | None = None
    driver_count: int | None = None
    driver_node: str | None = None

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.pattern not in PATTERNS:
            raise ValueError(f"unknown causal pattern {self.pattern!r}")
        if self.effect_model not in DEFAULT_GRID:
            raise ValueError(f"unknown effect model {self.effect_model!r}")
        if self.effect_model == "beta" and any(b < 1 for b in self.effect_grid):
            raise ValueError("beta effect sizes must be >= 1")
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ValueError(f"unknown methods {sorted(bad)}")

    def label(self, beta: float) -> str:
        tree = self.tree_spec if self.tree_spec in ("binary", "bushy") else "file"
        return f"{tree}/{self.pattern}/{self.effect_model}={beta:g}"


@dataclass(frozen=True)
class MetricRow:
    scenario: str
    method: str
    metric: str
    value: float
    mc_se: float
    reps: int


def _bottomup_metrics(tree, truth, leaf_p, cfg, true_set):
    res = run_one_stage(tree, leaf_p, cfg)
    er = error_rates(tree, truth, res.reported, res.state, weighted=cfg.mode != "unweighted")
    return {"FAR": er.FAR, "FDR": er.FDR, "FDRc": er.FDRc,
            "jaccard": weighted_jaccard(tree, res.reported, true_set),
            "pinpoint": pinpoint_rate(tree, res.reported, truth)}


def _two_stage_metrics(tree, truth, leaf_p, cfg, true_set):
    res = run_two_stage(tree, leaf_p, cfg)
    mod = truth_modified(tree, truth, res.state)
    both = res.stage1 | res.stage2
    er = error_rates(tree, truth, both, res.state)
    return {"FAR_otu": false_fraction(res.stage1, mod),
            "FAR_taxa": false_fraction(res.stage2, mod),
            "FAR": er.FAR, "FDR": er.FDR, "FDRc": er.FDRc,
            "jaccard": weighted_jaccard(tree, both, true_set),
            "pinpoint": pinpoint_rate(tree, both, truth)}


def _baseline_metrics(tree, truth, rep, true_set):
    st = replay(tree, rep.detected, rep.p_value)
    er = error_rates(tree, truth, rep.detected, st)
    return {"FAR": er.FAR, "FDR": er.FDR, "FDRc": er.FDRc,
            "jaccard": weighted_jaccard(tree, rep.detected, true_set),
            "pinpoint": pinpoint_rate(tree, rep.detected, truth)}


def evaluate_replicate(tree: TaxTree, kind: str, sc: SimScenario,
                       rep: int) -> dict[tuple[float, str, str], float]:
    """All metrics of one replicate, keyed by (beta, method, metric)."""
    truth_rng = make_rng(sc.seed, 0, 0 if sc.fix_drivers else rep)
    truth = select_drivers(tree, sc.pattern, truth_rng, kind, sc.driver_level,
                           sc.driver_count, sc.driver_node)
    true_set = truth_conjunction(tree, truth)
    out = {}
    for bi, beta in enumerate(sc.effect_grid):
        leaf_p = sample_leaf_ps(tree, truth, sc.effect_model, beta, make_rng(sc.seed, 1, rep, bi))
        for method in sc.methods:
            if method in ("unweighted", "weighted", "lf"):
                mode = "least_favorable" if method == "lf" else method
                m = _bottomup_metrics(tree, truth, leaf_p,
                                      ProcedureConfig(q=sc.q, tau0=sc.tau0, mode=mode), true_set)
            elif method == "two-stage":
                cfg = ProcedureConfig(q=sc.q, tau0=sc.tau0, two_stage=tuple(sc.two_stage))
                m = _two_stage_metrics(tree, truth, leaf_p, cfg, true_set)
            elif method == "naive":
                m = _baseline_metrics(tree, truth, naive_method(tree, leaf_p, sc.q), true_set)
            elif method == "topdown":
                r = top_down_method(tree, leaf_p, sc.q, sc.topdown_family_q)
                m = _baseline_metrics(tree, truth, r, true_set)
            else:
                m = _baseline_metrics(tree, truth, conjunction_method(tree, leaf_p, sc.q), true_set)
            for metric, v in m.items():
                out[(beta, method, metric)] = v
    return out


def _chunk(args):
    tree, kind, sc, reps = args
    rows = []
    for r in reps:
        try:
            rows.append(evaluate_replicate(tree, kind, sc, r))
        except Exception as e:
            raise RuntimeError(f"replicate {r} (seed {sc.seed}) failed: {e}") from e
    return rows


@dataclass
class ScenarioResult:
    scenario: SimScenario
    rows: list[MetricRow]
    per_replicate: dict[tuple[float, str, str], np.ndarray] = field(repr=False)

    def get(self, beta: float, method: str, metric: str) -> MetricRow:
        label = self.scenario.label(beta)
        for row in self.rows:
            if (row.scenario, row.method, row.metric) == (label, method, metric):
                return row
        raise KeyError((beta, method, metric))


def run_scenario(sc: SimScenario, threads: int = 1, tree: TaxTree | None = None) -> ScenarioResult:
    """Run every replicate and reduce to mean and Monte-Carlo standard error."""
    if tree is None:
        tree, kind = make_tree(sc.tree_spec)
    else:
        kind = sc.tree_spec if sc.tree_spec in DRIVER_LAYOUT else "file"
    # surface layout errors as bad input before any replicate runs
    select_drivers(tree, sc.pattern, make_rng(sc.seed, 0, 0), kind, sc.driver_level,
                   sc.driver_count, sc.driver_node)
    reps = list(range(sc.reps))
    if threads > 1 and sc.reps > 1:
        size = math.ceil(sc.reps / (4 * threads))
        chunks = [(tree, kind, sc, reps[i:i + size]) for i in range(0, sc.reps, size)]
        with ProcessPoolExecutor(threads) as ex:
            results = [row for part in ex.map(_chunk, chunks) for row in part]
    else:
        results = _chunk((tree, kind, sc, reps))

    per = {key: np.array([r[key] for r in results]) for key in results[0]}
    rows = []
    for (beta, method, metric), vals in per.items():
        se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
        rows.append(MetricRow(sc.label(beta), method, metric, float(vals.mean()), se, len(vals)))
    return ScenarioResult(sc, rows, per)


def synthetic_taxonomy(n_leaves: int = 2360, seed: int = 0,
                       rank_sizes: Sequence[int] = (1, 12, 24, 36, 60, 110, 150),
                       missing: Sequence[float] = (0.152, 0.569, 0.913)) -> TaxTree:
    """Random incomplete seven-rank taxonomy with OTU leaves.

    ``rank_sizes`` are the taxa available per rank (kingdom to species).
    ``missing`` holds the overall fraction of leaves lacking a family,
    genus and species; lower ranks are blanked below the first missing one.
    """
    rng = make_rng(seed, 7)
    names: list[list[tuple[str, ...]]] = [[("k0",)]]
    for r, size in enumerate(rank_sizes[1:], 1):
        prev = names[-1]
        # every upper taxon keeps at least one child
        par = np.concatenate([np.arange(len(prev)),
                              rng.integers(0, len(prev), max(size - len(prev), 0))])[:size]
        names.append([prev[p] + (f"{'kpcofgs'[r]}{i}",) for i, p in enumerate(par)])
    species = names[-1]
    # skewed abundance so a few lineages dominate, as in gut taxonomies
    pop = rng.pareto(1.2, len(species)) + 1
    pick = rng.choice(len(species), size=n_leaves, p=pop / pop.sum())
    fam, gen, spe = missing
    cond = (fam, (gen - fam) / (1 - fam), (spe - gen) / (1 - gen))
    rows = []
    for i, s in enumerate(pick):
        lin = list(species[s])
        for k, pr in enumerate(cond):
            if rng.random() < pr:
                lin[4 + k:] = [""] * (3 - k)
                break
        rows.append((f"otu{i}", lin, 0.5))
    tree, _ = build_from_lineages(rows)
    return tree
