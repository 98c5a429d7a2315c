"""Ground truth under the global, modified and conjunction nulls, and the
error-rate and accuracy measures computed from one detection set."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .bottomup import DetectionState, driver_mask
from .tree import TaxTree


@dataclass(frozen=True)
class TruthModel:
    """Driver nodes and the leaves they make associated (boolean node masks)."""

    driver_nodes: np.ndarray
    associated_leaves: np.ndarray

    @classmethod
    def from_drivers(cls, tree: TaxTree, drivers: Iterable[int]) -> "TruthModel":
        dmask = np.zeros(tree.n_nodes, dtype=bool)
        dmask[np.asarray(list(drivers), dtype=np.int64)] = True
        below = dmask & ~driver_mask(tree, dmask)
        if below.any():
            raise ValueError("driver nodes must not be nested")
        inside = np.zeros(tree.n_nodes, dtype=bool)
        for lev in range(tree.n_levels - 1, 0, -1):
            m = tree.members(lev)
            par = tree.parent[m]
            inside[m] = inside[par] | dmask[par]
        return cls(dmask, (inside | dmask) & tree.is_leaf)


def _assoc_counts(tree: TaxTree, truth: TruthModel) -> np.ndarray:
    counts = truth.associated_leaves.astype(np.int64)
    for ep, ec in tree.level_edges[1:]:
        np.add.at(counts, ep, counts[ec])
    return counts


def truth_global(tree: TaxTree, truth: TruthModel) -> np.ndarray:
    """Non-null iff at least one descendant leaf is associated."""
    return _assoc_counts(tree, truth) > 0


def truth_conjunction(tree: TaxTree, truth: TruthModel) -> np.ndarray:
    """Non-null iff every descendant leaf is associated."""
    return _assoc_counts(tree, truth) == tree.leaf_count


def truth_modified(tree: TaxTree, truth: TruthModel, state: DetectionState) -> np.ndarray:
    """Non-null status relative to the detections recorded in ``state``.

    A leaf is non-null iff associated. A tested inner node is non-null iff
    one of its children left undetected when it was tested is non-null. A
    node detected only because all its children were detected inherits the
    status of the rejection that completed it.
    """
    if state.detected.shape != (tree.n_nodes,) or len(state.d_star) != tree.n_levels:
        raise ValueError("detection trace does not match the tree")
    mod = np.zeros(tree.n_nodes, dtype=bool)
    mod[tree.leaves] = truth.associated_leaves[tree.leaves]
    tested = state.tested
    undetected = ~state.detected
    for lev in range(2, tree.n_levels + 1):
        ep, ec = tree.level_edges[lev - 1]
        hit = ec[undetected[ec] & mod[ec]]
        m = tree.members(lev)
        has = np.zeros(tree.n_nodes, dtype=bool)
        has[tree.parent[hit]] = True
        t = m[tested[m]]
        mod[t] = has[t]
        a = m[state.auto_detected[m]]
        mod[a] = mod[state.trigger[a]]
    return mod


def replay(tree: TaxTree, detected: np.ndarray, p_value: np.ndarray) -> DetectionState:
    """Reinterpret a detection set as level-by-level modified-null tests.

    Each level's undetected nodes count as tested; those in ``detected`` are
    rejected in ascending ``p_value`` order and complete ancestors exactly as
    in the bottom-up procedure, so completed ancestors join the set.
    """
    detected = np.asarray(detected, dtype=bool)
    st = DetectionState.empty(tree)
    open_children = tree.n_children.tolist()
    parent = tree.parent.tolist()
    total = 0
    for lev in range(1, tree.n_levels + 1):
        m = tree.members(lev)
        tested = m[~st.detected[m]]
        st.n_star[lev - 1] = len(tested)
        p = np.asarray(p_value, dtype=float)[tested]
        st.p_value[tested] = np.where(np.isnan(p), 1.0, p)
        rej = tested[detected[tested]]
        rej = rej[np.lexsort((rej, st.p_value[rej]))]
        for j in rej.tolist():
            st.detected[j] = st.rejected[j] = True
            st.trigger[j] = j
            st.decided_at[j] = lev
            node, w = j, 1
            while (par := parent[node]) >= 0:
                open_children[par] -= 1
                if open_children[par]:
                    break
                st.detected[par] = st.auto_detected[par] = True
                st.trigger[par] = j
                st.decided_at[par] = lev
                node, w = par, w + 1
            st.weight[j] = w
            total += w
        st.d_star[lev - 1] = len(rej)
        st.D_cum[lev - 1] = total
    return st


@dataclass(frozen=True)
class ErrorRates:
    FAR: float
    FDR: float
    FDRc: float


def false_fraction(nodes: np.ndarray, nonnull: np.ndarray) -> float:
    """Share of ``nodes`` (mask) that are null; 0 for an empty set."""
    r = int(nodes.sum())
    return float((nodes & ~nonnull).sum() / r) if r else 0.0


def error_rates(tree: TaxTree, truth: TruthModel, reported: np.ndarray,
                state: DetectionState, weighted: bool = True) -> ErrorRates:
    """Realised false proportions for one replicate.

    FDR and FDRc are taken over ``reported``. FAR is taken over all nodes
    detected in ``state`` when ``weighted`` (each rejection counted with its
    realized weight), otherwise over the reported nodes with unit counts.
    """
    mod = truth_modified(tree, truth, state)
    far_nodes = state.detected if weighted else reported
    return ErrorRates(false_fraction(far_nodes, mod),
                      false_fraction(reported, truth_global(tree, truth)),
                      false_fraction(reported, truth_conjunction(tree, truth)))


def weighted_jaccard(tree: TaxTree, detected: np.ndarray, true_set: np.ndarray) -> float:
    """Leaf-count weighted Jaccard similarity of two node masks; 1 when both empty."""
    detected = np.asarray(detected, dtype=bool)
    true_set = np.asarray(true_set, dtype=bool)
    w = tree.leaf_count
    union = w[detected | true_set].sum()
    if union == 0:
        return 1.0
    return float(w[detected & true_set].sum() / union)


def pinpoint_rate(tree: TaxTree, detected: np.ndarray, truth: TruthModel) -> float:
    """Fraction of drivers detected with no detected ancestor."""
    drivers = truth.driver_nodes
    n = int(drivers.sum())
    if n == 0:
        return 0.0
    return float((driver_mask(tree, np.asarray(detected, dtype=bool)) & drivers).sum() / n)
