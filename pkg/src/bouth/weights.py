"""Detection-multiplicity weights for one level of bottom-up testing.

Rejecting a tested node can complete one or more ancestors (every child of
the ancestor detected), which are then detected along with it. The weight
of a tested node is the number of detections its rejection would entail
when the level's tested nodes are rejected in ascending p-value order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tree import TaxTree


@dataclass(frozen=True)
class ActiveLevel:
    """Tested nodes on one level and the ancestors they can complete.

    ``active`` lists, in ascending level order, the undetected nodes above
    ``level`` whose children are all either detected, tested on this level,
    or themselves active. Only these ancestors can be detected as a side
    effect of step-down rejections on this level.
    """

    tree: TaxTree
    level: int
    tested: np.ndarray
    active: np.ndarray

    @property
    def n_tested(self) -> int:
        return len(self.tested)


@dataclass(frozen=True)
class WeightVector:
    runtime: dict[int, int] | None
    sorted: np.ndarray

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.sorted)

    @property
    def reverse_cumulative(self) -> np.ndarray:
        return np.cumsum(self.sorted[::-1])[::-1]


def active_mask(tree: TaxTree, detected: np.ndarray, level: int,
                tested: np.ndarray | None = None) -> np.ndarray:
    """Boolean mask of the ancestors completable from ``level``."""
    n = tree.n_nodes
    if tested is None:
        m = tree.members(level)
        tested = m[~detected[m]]
    ok = detected.copy()
    ok[tested] = True
    active = np.zeros(n, dtype=bool)
    for h in range(level + 1, tree.n_levels + 1):
        ep, ec = tree.level_edges[h - 1]
        if len(ep) == 0:
            continue
        blocked = np.bincount(ep[~ok[ec]], minlength=n)
        m = tree.members(h)
        act = m[(blocked[m] == 0) & ~detected[m]]
        active[act] = True
        ok[act] = True
    return active


def active_level(tree: TaxTree, detected: np.ndarray, level: int) -> ActiveLevel:
    detected = np.asarray(detected, dtype=bool)
    m = tree.members(level)
    tested = m[~detected[m]]
    mask = active_mask(tree, detected, level, tested)
    act = np.flatnonzero(mask)
    act = act[np.argsort(tree.level[act], kind="stable")]
    return ActiveLevel(tree, level, tested, act)


def _p_lookup(pvalues, nodes):
    if isinstance(pvalues, dict):
        try:
            return np.array([pvalues[int(j)] for j in nodes], dtype=float)
        except KeyError as e:
            raise ValueError(f"tested node {e.args[0]} has no p-value") from None
    p = np.asarray(pvalues, dtype=float)[nodes]
    if np.any(np.isnan(p)):
        raise ValueError("tested node has no p-value")
    return p


def rejection_order(nodes: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Positions of ``nodes`` sorted by p-value, ties by node index."""
    return np.lexsort((nodes, p))


def runtime_weights(active: ActiveLevel, pvalues) -> dict[int, int]:
    """Weights realised when the tested nodes are rejected in p-value order.

    ``pvalues`` is a mapping or a per-node array covering the tested nodes.
    """
    tree = active.tree
    p = _p_lookup(pvalues, active.tested)
    is_active = np.zeros(tree.n_nodes, dtype=bool)
    is_active[active.active] = True
    pending = set(active.tested.tolist()) | set(active.active.tolist())
    # children still to be detected before each active ancestor completes
    remaining = {a: sum(1 for c in tree.children[a] if c in pending)
                 for a in active.active.tolist()}
    parent = tree.parent
    out: dict[int, int] = {}
    for pos in rejection_order(active.tested, p).tolist():
        j = int(active.tested[pos])
        w = 1
        node = j
        while True:
            par = int(parent[node])
            if par < 0 or not is_active[par]:
                break
            remaining[par] -= 1
            if remaining[par]:
                break
            w += 1
            node = par
        out[j] = w
    return out


def sorted_weights_complete(active: ActiveLevel) -> WeightVector:
    """The ordering-free sorted weights of a complete tree."""
    if not active.tree.is_complete:
        raise ValueError("sorted weights are ordering-free only on complete trees; "
                         "use least_favorable_weights")
    # any ordering gives the same multiset; index order is as good as any
    run = runtime_weights(active, dict.fromkeys(active.tested.tolist(), 0.5))
    return WeightVector(run, np.sort(np.fromiter(run.values(), dtype=np.int64)))


def least_favorable_weights(active: ActiveLevel) -> WeightVector:
    """Sorted weights with the smallest prefix sums over all p-value orderings.

    Starting from one per tested node, every active ancestor (lowest level
    first) adds one to the largest weight among its tested descendants,
    ties going to the lowest node index.
    """
    tree = active.tree
    w = {int(j): 1 for j in active.tested}
    # heaviest tested descendant of each completed subtree
    winner = {j: j for j in w}
    for a in active.active.tolist():
        best = -1
        for c in tree.children[a]:
            cand = winner.get(c)
            if cand is None:
                continue
            if best < 0 or w[cand] > w[best] or (w[cand] == w[best] and cand < best):
                best = cand
        w[best] += 1
        winner[a] = best
    return WeightVector(w, np.sort(np.fromiter(w.values(), dtype=np.int64, count=len(w))))
