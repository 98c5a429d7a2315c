"""Bottom-up, level-by-level testing with false-assignment-rate control.

Levels are processed from the leaves upward. On each level the nodes that
still have an undetected child are tested with a step-down procedure; a
rejection detects the node and every ancestor it completes. The p-values
of nodes that survive are truncated at the first failed threshold and
combined with Stouffer's method into p-values for their parents.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .stats import norm_sf, stouffer_z
from .tree import TaxTree
from .weights import active_level, least_favorable_weights, sorted_weights_complete

MODES = ("unweighted", "weighted", "least_favorable")


@dataclass(frozen=True)
class ProcedureConfig:
    """Targets for one run.

    ``level_split`` gives q_l per level (index ``l - 1``); by default q is
    split in proportion to the number of nodes per level. ``two_stage`` is
    ``(q1, q_rest)``: separate budgets for the leaf level and the rest.
    """

    q: float = 0.10
    tau0: float = 0.3
    mode: str = "weighted"
    level_split: Sequence[float] | None = None
    two_stage: tuple[float, float] | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0 < self.tau0 < 1:
            raise ValueError("tau0 must lie in (0, 1)")
        if self.two_stage is None:
            if not 0 < self.q < 1:
                raise ValueError("q must lie in (0, 1)")
        else:
            q1, q_rest = self.two_stage
            if not (0 < q1 < 1 and 0 < q_rest < 1):
                raise ValueError("q1 and q_rest must lie in (0, 1)")
            if self.mode == "unweighted":
                raise ValueError("the two-stage procedure uses weighted thresholds")
        if self.level_split is not None and any(x < 0 for x in self.level_split):
            raise ValueError("level targets must be non-negative")

    def level_targets(self, tree: TaxTree) -> np.ndarray:
        sizes = tree.level_sizes.astype(float)
        if self.level_split is not None:
            out = np.asarray(self.level_split, dtype=float)
            if out.shape != sizes.shape:
                raise ValueError(f"level_split needs {len(sizes)} entries")
            return out
        if self.two_stage is None:
            return self.q * sizes / sizes.sum()
        q1, q_rest = self.two_stage
        out = np.zeros_like(sizes)
        out[0] = q1
        if len(sizes) > 1:
            out[1:] = q_rest * sizes[1:] / sizes[1:].sum()
        return out


@dataclass
class DetectionState:
    """Per-node outcome of a run plus per-level counters.

    ``trigger[i]`` is the rejected node whose rejection detected ``i``
    (itself when ``i`` was rejected). ``weight[j]`` is the realised number
    of detections caused by rejecting ``j``. Counters are indexed by
    ``level - 1``; ``D_cum`` holds the running detection count after each
    level as used in the next level's thresholds.
    """

    detected: np.ndarray
    auto_detected: np.ndarray
    rejected: np.ndarray
    p_value: np.ndarray
    trigger: np.ndarray
    weight: np.ndarray
    decided_at: np.ndarray
    d_star: np.ndarray
    D_cum: np.ndarray
    alpha_cut: np.ndarray
    n_star: np.ndarray
    schedules: dict[int, np.ndarray] = field(default_factory=dict)

    @classmethod
    def empty(cls, tree: TaxTree) -> "DetectionState":
        n, L = tree.n_nodes, tree.n_levels
        return cls(
            detected=np.zeros(n, dtype=bool),
            auto_detected=np.zeros(n, dtype=bool),
            rejected=np.zeros(n, dtype=bool),
            p_value=np.full(n, np.nan),
            trigger=np.full(n, -1, dtype=np.int64),
            weight=np.zeros(n, dtype=np.int64),
            decided_at=np.zeros(n, dtype=np.int64),
            d_star=np.zeros(L, dtype=np.int64),
            D_cum=np.zeros(L, dtype=np.int64),
            alpha_cut=np.full(L, np.nan),
            n_star=np.zeros(L, dtype=np.int64),
        )

    @property
    def tested(self) -> np.ndarray:
        return ~np.isnan(self.p_value)


@dataclass(frozen=True)
class NodeResult:
    node: int
    level: int
    p_value: float
    detected: bool
    auto_detected: bool
    driver: bool


def driver_mask(tree: TaxTree, detected: np.ndarray) -> np.ndarray:
    """Detected nodes with no detected ancestor."""
    covered = np.zeros(tree.n_nodes, dtype=bool)
    for lev in range(tree.n_levels, 0, -1):
        m = tree.members(lev)
        m = m[tree.parent[m] >= 0]
        par = tree.parent[m]
        covered[m] = covered[par] | detected[par]
    return detected & ~covered


@dataclass
class BottomUpResult:
    tree: TaxTree
    mode: str
    state: DetectionState
    reported: np.ndarray

    @property
    def driver(self) -> np.ndarray:
        return driver_mask(self.tree, self.reported)

    @property
    def detected_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.reported)

    def results(self) -> list[NodeResult]:
        st, tree, drv = self.state, self.tree, self.driver
        return [NodeResult(i, int(tree.level[i]), float(st.p_value[i]),
                           bool(self.reported[i]),
                           bool(self.reported[i] and st.auto_detected[i]), bool(drv[i]))
                for i in range(tree.n_nodes)]


@dataclass
class TwoStageResult:
    tree: TaxTree
    state: DetectionState
    stage1: np.ndarray
    stage2: np.ndarray

    def stage(self, k: int) -> BottomUpResult:
        rep = self.stage1 if k == 1 else self.stage2
        return BottomUpResult(self.tree, "two_stage", self.state, rep)


def thresholds(n_star: int, D_prev: float, q_l: float, tau0: float,
               weights: np.ndarray | None = None) -> np.ndarray:
    """Ascending step-down thresholds for one level.

    Solves ``a / (1 - a) = min(ratio_j * q_l, tau0 / (1 - tau0))`` where
    ``ratio_j = (D_prev + j) / (n* - j + 1)`` without weights, and uses the
    prefix and suffix sums of the sorted weights in place of the counts
    otherwise.
    """
    if weights is None:
        j = np.arange(1, n_star + 1, dtype=float)
        num, den = D_prev + j, n_star - j + 1
    else:
        w = np.asarray(weights, dtype=float)
        if len(w) != n_star:
            raise ValueError("need one weight per tested node")
        num = D_prev + np.cumsum(w)
        den = np.cumsum(w[::-1])[::-1]
    odds = np.minimum(num / den * q_l, tau0 / (1 - tau0))
    return odds / (1 + odds)


def step_down(sorted_ps: np.ndarray, schedule: np.ndarray) -> int:
    """Number of leading sorted p-values that clear their thresholds."""
    fail = np.asarray(sorted_ps) > np.asarray(schedule)
    return int(np.argmax(fail)) if fail.any() else len(fail)


def propagate_up(tree: TaxTree, detected: np.ndarray) -> np.ndarray:
    """Detect every inner node whose children are all detected; returns new nodes."""
    det = np.array(detected, dtype=bool)
    new = np.zeros_like(det)
    for h in range(2, tree.n_levels + 1):
        ep, ec = tree.level_edges[h - 1]
        if len(ep) == 0:
            continue
        open_children = np.bincount(ep[~det[ec]], minlength=tree.n_nodes)
        m = tree.members(h)
        hit = m[(open_children[m] == 0) & ~det[m]]
        det[hit] = True
        new[hit] = True
    return np.flatnonzero(new)


def aggregate_level(tree: TaxTree, detected: np.ndarray, adjusted: np.ndarray,
                    level: int) -> dict[int, float]:
    """Stouffer p-values for the undetected nodes on ``level``.

    ``adjusted`` holds truncation-adjusted p-values of the undetected nodes
    below; nodes without undetected children get no p-value.
    """
    nodes, p = _aggregate(tree, detected, adjusted, level)
    return dict(zip(nodes.tolist(), p.tolist()))


def _aggregate(tree, detected, adjusted, level):
    ep, ec = tree.level_edges[level - 1]
    open_ = ~detected[ec]
    ep, ec = ep[open_], ec[open_]
    n = tree.n_nodes
    z = stouffer_z(adjusted[ec])
    sums = np.bincount(ep, weights=z, minlength=n)
    counts = np.bincount(ep, minlength=n)
    m = tree.members(level)
    m = m[(counts[m] > 0) & ~detected[m]]
    return m, norm_sf(sums[m] / np.sqrt(counts[m]))


def _level_weights(tree, mode, detected, level):
    if mode == "unweighted":
        return None
    act = active_level(tree, detected, level)
    if mode == "weighted" and tree.is_complete:
        return sorted_weights_complete(act)
    return least_favorable_weights(act)


def _run(tree: TaxTree, leaf_p: np.ndarray, mode: str, q_levels: np.ndarray,
         tau0: float, reset_after_leaves: bool = False) -> BottomUpResult:
    leaf_p = np.asarray(leaf_p, dtype=float)
    if leaf_p.shape != (tree.n_nodes,):
        raise ValueError("leaf p-values must be a per-node array")
    lp = leaf_p[tree.leaves]
    if np.any(np.isnan(lp)):
        raise ValueError("every leaf needs a p-value")
    if np.any((lp < 0) | (lp > 1)):
        raise ValueError("leaf p-values must lie in [0, 1]")

    st = DetectionState.empty(tree)
    detected, auto, rejected = st.detected, st.auto_detected, st.rejected
    reported = np.zeros(tree.n_nodes, dtype=bool)
    adjusted = np.full(tree.n_nodes, np.nan)
    open_children = tree.n_children.tolist()
    parent = tree.parent.tolist()
    weighted = mode != "unweighted"
    D = 0

    for lev in range(1, tree.n_levels + 1):
        if lev == 1:
            tested = tree.members(1)
            p = leaf_p[tested]
        else:
            tested, p = _aggregate(tree, detected, adjusted, lev)
        n_star = len(tested)
        st.n_star[lev - 1] = n_star
        if n_star:
            st.p_value[tested] = p
            order = np.lexsort((tested, p))
            ts, ps = tested[order], p[order]
            wv = _level_weights(tree, mode, detected, lev)
            alpha = thresholds(n_star, D, q_levels[lev - 1], tau0,
                               None if wv is None else wv.sorted)
            st.schedules[lev] = alpha
            d = step_down(ps, alpha)
            added = 0
            for j in ts[:d].tolist():
                detected[j] = rejected[j] = True
                st.trigger[j] = j
                st.decided_at[j] = lev
                node, w = j, 1
                while True:
                    par = parent[node]
                    if par < 0:
                        break
                    open_children[par] -= 1
                    if open_children[par]:
                        break
                    detected[par] = auto[par] = True
                    st.trigger[par] = j
                    st.decided_at[par] = lev
                    if weighted:
                        reported[par] = True
                    node = par
                    w += 1
                st.weight[j] = w
                added += w
                # one report per test without weights: the highest node decided
                reported[node if not weighted else j] = True
            st.d_star[lev - 1] = d
            D += added if weighted else d
            if d < n_star:
                cut = alpha[d]
                st.alpha_cut[lev - 1] = cut
                adjusted[ts[d:]] = (ps[d:] - cut) / (1 - cut)
        if reset_after_leaves and lev == 1:
            D = 0
        st.D_cum[lev - 1] = D
    return BottomUpResult(tree, mode, st, reported)


def run_one_stage(tree: TaxTree, leaf_ps: np.ndarray, cfg: ProcedureConfig) -> BottomUpResult:
    """Bottom-up test of every level under one overall FAR target.

    ``leaf_ps`` is a per-node array; only leaf entries are used. With
    ``mode="weighted"`` the ordering-free weights of complete trees are
    used, falling back to least-favourable weights on incomplete trees.
    """
    if cfg.two_stage is not None:
        raise ValueError("config asks for the two-stage procedure")
    return _run(tree, leaf_ps, cfg.mode, cfg.level_targets(tree), cfg.tau0)


def run_two_stage(tree: TaxTree, leaf_ps: np.ndarray, cfg: ProcedureConfig) -> TwoStageResult:
    """Leaf level under ``q1``; all higher levels under ``q_rest`` with a fresh counter.

    Stage 1 reports the detected leaves together with every taxon they
    complete. Stage 2 reports detections made from level 2 upward.
    """
    if cfg.two_stage is None:
        raise ValueError("config has no (q1, q_rest) pair")
    res = _run(tree, leaf_ps, cfg.mode, cfg.level_targets(tree), cfg.tau0,
               reset_after_leaves=True)
    first = res.reported & (res.state.decided_at == 1)
    return TwoStageResult(tree, res.state, first, res.reported & ~first)
