"""Comparison procedures: BH over all nodes with Stouffer or max-p inner
p-values, and top-down family-wise BH starting at the root."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bottomup import driver_mask
from .stats import P_EPS, norm_quantile, norm_sf
from .tree import TaxTree

BASELINES = ("naive", "topdown", "conjunction")


@dataclass
class BaselineReport:
    method: str
    tree: TaxTree
    p_value: np.ndarray
    detected: np.ndarray

    @property
    def drivers(self) -> np.ndarray:
        return driver_mask(self.tree, self.detected)

    @property
    def detected_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.detected)


def bh_reject(p: np.ndarray, q: float) -> np.ndarray:
    """Benjamini-Hochberg step-up; boolean rejection mask aligned with ``p``."""
    p = np.asarray(p, dtype=float)
    m = len(p)
    out = np.zeros(m, dtype=bool)
    if m == 0:
        return out
    order = np.argsort(p, kind="stable")
    ok = p[order] <= q * np.arange(1, m + 1) / m
    if ok.any():
        k = int(np.flatnonzero(ok)[-1]) + 1
        out[order[:k]] = True
    return out


def bh_stepup(ps: Sequence[tuple[str, float]], q: float) -> list[str]:
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    ids = [i for i, _ in ps]
    rej = bh_reject(np.array([p for _, p in ps], dtype=float), q)
    return [i for i, r in zip(ids, rej) if r]


def stouffer_all_leaves(tree: TaxTree, leaf_p: np.ndarray) -> np.ndarray:
    """Per-node Stouffer p-value over every descendant leaf, no truncation."""
    z = np.zeros(tree.n_nodes)
    lv = tree.leaves
    z[lv] = -norm_quantile(np.clip(leaf_p[lv], P_EPS, 1 - P_EPS))
    for ep, ec in tree.level_edges[1:]:
        np.add.at(z, ep, z[ec])
    out = norm_sf(z / np.sqrt(tree.leaf_count))
    out[lv] = leaf_p[lv]
    return out


def max_all_leaves(tree: TaxTree, leaf_p: np.ndarray) -> np.ndarray:
    """Per-node maximum over descendant leaf p-values."""
    out = np.full(tree.n_nodes, -np.inf)
    out[tree.leaves] = leaf_p[tree.leaves]
    for ep, ec in tree.level_edges[1:]:
        np.maximum.at(out, ep, out[ec])
    return out


def naive_method(tree: TaxTree, leaf_p: np.ndarray, q: float) -> BaselineReport:
    p = stouffer_all_leaves(tree, np.asarray(leaf_p, dtype=float))
    return BaselineReport("naive", tree, p, bh_reject(p, q))


def conjunction_method(tree: TaxTree, leaf_p: np.ndarray, q: float) -> BaselineReport:
    p = max_all_leaves(tree, np.asarray(leaf_p, dtype=float))
    return BaselineReport("conjunction", tree, p, bh_reject(p, q))


def top_down_method(tree: TaxTree, leaf_p: np.ndarray, q: float,
                    family_q: float | None = None) -> BaselineReport:
    """Test the root at ``q``; below each rejected node run BH on its children.

    ``family_q`` sets the BH level inside child families (default ``q``).
    """
    p = stouffer_all_leaves(tree, np.asarray(leaf_p, dtype=float))
    fq = q if family_q is None else family_q
    det = np.zeros(tree.n_nodes, dtype=bool)
    if p[tree.root] <= q:
        det[tree.root] = True
        todo = [tree.root]
        while todo:
            node = todo.pop()
            kids = np.array(tree.children[node], dtype=np.int64)
            if len(kids) == 0:
                continue
            hit = kids[bh_reject(p[kids], fq)]
            det[hit] = True
            todo.extend(hit.tolist())
    return BaselineReport("topdown", tree, p, det)
