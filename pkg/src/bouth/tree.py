"""Branching trees of hypotheses stored as flat index arrays.

Nodes are dense integers. Every array attached to a :class:`TaxTree` is
read-only; the tree never changes after construction, so it can be shared
freely between procedure runs.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np


class TreeError(ValueError):
    """Raised for malformed tree input."""


@dataclass(frozen=True)
class NodeRecord:
    id: str
    parent: int | None
    children: tuple[int, ...]
    level: int
    leaf_count: int


def _frozen(a) -> np.ndarray:
    a = np.asarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TaxTree:
    """Immutable rooted tree with investigator-assigned levels.

    ``parent[i]`` is -1 for the root. ``level[i]`` is 1 for every leaf and
    strictly larger than the level of each child for inner nodes.
    """

    ids: tuple[str, ...]
    parent: np.ndarray
    level: np.ndarray

    def __post_init__(self):
        n = len(self.ids)
        if n == 0:
            raise TreeError("tree has no nodes")
        parent = np.asarray(self.parent, dtype=np.int64)
        level = np.asarray(self.level, dtype=np.int64)
        if parent.shape != (n,) or level.shape != (n,):
            raise TreeError("ids, parent and level must have equal length")
        roots = np.flatnonzero(parent < 0)
        if len(roots) != 1:
            raise TreeError(f"expected exactly one root, found {len(roots)}")
        if np.any(parent >= n):
            raise TreeError("parent index out of range")
        if len(set(self.ids)) != n:
            raise TreeError("node ids are not unique")
        object.__setattr__(self, "parent", _frozen(parent))
        object.__setattr__(self, "level", _frozen(level))

        n_children = np.bincount(parent[parent >= 0], minlength=n)
        is_leaf = n_children == 0
        if np.any(level[is_leaf] != 1):
            bad = self.ids[int(np.flatnonzero(is_leaf & (level != 1))[0])]
            raise TreeError(f"leaf {bad!r} must be on level 1")
        child = np.flatnonzero(parent >= 0)
        if np.any(level[parent[child]] <= level[child]):
            c = int(child[np.argmax(level[parent[child]] <= level[child])])
            raise TreeError(
                f"node {self.ids[int(parent[c])]!r} must sit on a higher level "
                f"than its child {self.ids[c]!r}")
        # strict level increase toward the parent rules out cycles
        object.__setattr__(self, "n_children", _frozen(n_children))

    # -- basic shape -----------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return len(self.ids)

    @cached_property
    def root(self) -> int:
        return int(np.flatnonzero(self.parent < 0)[0])

    @cached_property
    def n_levels(self) -> int:
        return int(self.level.max())

    @cached_property
    def is_leaf(self) -> np.ndarray:
        return _frozen(self.n_children == 0)

    @cached_property
    def leaves(self) -> np.ndarray:
        return _frozen(np.flatnonzero(self.is_leaf))

    @cached_property
    def level_members(self) -> tuple[np.ndarray, ...]:
        """``level_members[l - 1]`` holds the node indices on level ``l``."""
        order = np.argsort(self.level, kind="stable")
        bounds = np.searchsorted(self.level[order], np.arange(1, self.n_levels + 2))
        return tuple(_frozen(order[bounds[i]:bounds[i + 1]])
                     for i in range(self.n_levels))

    def members(self, level: int) -> np.ndarray:
        return self.level_members[level - 1]

    @cached_property
    def level_sizes(self) -> np.ndarray:
        return _frozen(np.array([len(m) for m in self.level_members]))

    @cached_property
    def children(self) -> tuple[tuple[int, ...], ...]:
        kids: list[list[int]] = [[] for _ in range(self.n_nodes)]
        for c, p in enumerate(self.parent.tolist()):
            if p >= 0:
                kids[p].append(c)
        return tuple(tuple(k) for k in kids)

    @cached_property
    def depth(self) -> np.ndarray:
        d = np.zeros(self.n_nodes, dtype=np.int64)
        for lev in range(self.n_levels, 0, -1):
            m = self.members(lev)
            m = m[self.parent[m] >= 0]
            # a parent is always on a higher level, so it is already set
            d[m] = d[self.parent[m]] + 1
        return _frozen(d)

    @cached_property
    def leaf_count(self) -> np.ndarray:
        counts = self.is_leaf.astype(np.int64)
        for ep, ec in self.level_edges:
            np.add.at(counts, ep, counts[ec])
        return _frozen(counts)

    @cached_property
    def level_edges(self) -> tuple[tuple[np.ndarray, np.ndarray], ...]:
        """Per parent level ``h`` (index ``h - 1``): (parent, child) edge arrays."""
        child = np.flatnonzero(self.parent >= 0)
        par = self.parent[child]
        plev = self.level[par]
        out = []
        for h in range(1, self.n_levels + 1):
            sel = plev == h
            out.append((_frozen(par[sel]), _frozen(child[sel])))
        return tuple(out)

    @cached_property
    def is_complete(self) -> bool:
        """True when every level coincides with a single depth."""
        d = self.depth
        return bool(np.all(d + self.level == d[self.root] + self.level[self.root]))

    @cached_property
    def index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.ids)}

    # -- structural queries ------------------------------------------------

    def node(self, i: int) -> NodeRecord:
        p = int(self.parent[i])
        return NodeRecord(self.ids[i], None if p < 0 else p, self.children[i],
                          int(self.level[i]), int(self.leaf_count[i]))

    @property
    def nodes(self) -> list[NodeRecord]:
        return [self.node(i) for i in range(self.n_nodes)]

    def ancestors(self, i: int) -> list[int]:
        out = []
        p = int(self.parent[i])
        while p >= 0:
            out.append(p)
            p = int(self.parent[p])
        return out

    def descendants(self, i: int) -> list[int]:
        """All proper descendants of ``i`` in breadth-first order."""
        out: list[int] = []
        todo = deque(self.children[i])
        while todo:
            c = todo.popleft()
            out.append(c)
            todo.extend(self.children[c])
        return out

    @cached_property
    def ancestor_matrix(self):
        """Sparse (node x leaf) incidence: entry 1 if the leaf descends from the node."""
        from scipy import sparse

        rows, cols = [], []
        leaf_pos = np.full(self.n_nodes, -1)
        leaf_pos[self.leaves] = np.arange(len(self.leaves))
        for leaf in self.leaves.tolist():
            node = leaf
            while node >= 0:
                rows.append(node)
                cols.append(leaf_pos[leaf])
                node = int(self.parent[node])
        data = np.ones(len(rows))
        return sparse.csr_matrix((data, (rows, cols)),
                                 shape=(self.n_nodes, len(self.leaves)))


def descendants_leaves(tree: TaxTree, node: int) -> list[int]:
    """Leaf indices below ``node``; a leaf returns itself."""
    if tree.is_leaf[node]:
        return [node]
    return sorted(c for c in tree.descendants(node) if tree.is_leaf[c])


def build_complete(branching: int, levels: int, max_nodes: int = 5_000_000) -> TaxTree:
    """Complete tree where each inner node has ``branching`` children.

    Nodes are numbered breadth-first from the root; ``level = levels - depth``.
    """
    if branching < 2 or levels < 2:
        raise TreeError("need branching >= 2 and levels >= 2")
    n = (branching ** levels - 1) // (branching - 1)
    if n > max_nodes:
        raise TreeError(f"complete tree would have {n} nodes (limit {max_nodes})")
    idx = np.arange(n)
    parent = np.where(idx == 0, -1, (idx - 1) // branching)
    level = np.empty(n, dtype=np.int64)
    ids = []
    start = 0
    for depth in range(levels):
        width = branching ** depth
        level[start:start + width] = levels - depth
        ids.extend(f"L{levels - depth}.{j + 1}" for j in range(width))
        start += width
    return TaxTree(tuple(ids), parent, level)


def from_edges(edges: Iterable[tuple[str, str | None, int]]) -> TaxTree:
    """Tree from ``(node_id, parent_id or None, level)`` triples, order kept."""
    edges = list(edges)
    ids = tuple(e[0] for e in edges)
    pos = {}
    for i, name in enumerate(ids):
        if name in pos:
            raise TreeError(f"duplicate node id {name!r}")
        pos[name] = i
    parent = np.empty(len(ids), dtype=np.int64)
    for i, (name, par, _) in enumerate(edges):
        if par is None:
            parent[i] = -1
        elif par not in pos:
            raise TreeError(f"node {name!r} has unknown parent {par!r}")
        else:
            parent[i] = pos[par]
    return TaxTree(ids, parent, np.array([int(e[2]) for e in edges], dtype=np.int64))


def to_edges(tree: TaxTree) -> list[tuple[str, str | None, int]]:
    return [(tree.ids[i], None if tree.parent[i] < 0 else tree.ids[int(tree.parent[i])],
             int(tree.level[i])) for i in range(tree.n_nodes)]


def build_from_lineages(rows: Sequence[tuple[str, Sequence[str], float]],
                        root_id: str = "root") -> tuple[TaxTree, np.ndarray]:
    """Build a taxonomy tree from per-leaf lineages.

    Each row is ``(leaf_id, tokens, p_value)`` with tokens ordered from the
    top rank outward; an empty token marks a missing rank and everything
    after it must be empty too. A leaf attaches to its deepest named rank.
    Inner nodes sit on ``level = n_ranks - rank_position + 1`` so that levels
    follow the rank list, not the depth. A synthetic root is added when the
    top rank carries more than one name.

    Returns the tree and a per-node p-value array (NaN on inner nodes).
    """
    if not rows:
        raise TreeError("no input rows")
    n_ranks = max(len(r[1]) for r in rows)
    seen: set[str] = set()
    lineages: list[tuple[str, ...]] = []
    for lineno, (leaf_id, tokens, p) in enumerate(rows, 1):
        if leaf_id in seen:
            raise TreeError(f"row {lineno}: duplicate leaf id {leaf_id!r}")
        seen.add(leaf_id)
        if not (0.0 <= p <= 1.0):
            raise TreeError(f"row {lineno}: p-value {p!r} outside [0, 1]")
        toks = [t.strip() for t in tokens]
        depth = 0
        while depth < len(toks) and toks[depth]:
            depth += 1
        if any(toks[depth:]):
            raise TreeError(f"row {lineno}: lineage of {leaf_id!r} has a named rank "
                            "after a missing one")
        if depth == 0:
            raise TreeError(f"row {lineno}: leaf {leaf_id!r} has no taxonomy")
        lineages.append(tuple(toks[:depth]))

    top = {lin[0] for lin in lineages}
    synthetic_root = len(top) > 1
    prefixes = sorted({lin[:k] for lin in lineages for k in range(1, len(lin) + 1)})
    if synthetic_root and (root_id,) in set(prefixes):
        raise TreeError(f"root id {root_id!r} clashes with a rank name")

    ids: list[str] = []
    parent: list[int] = []
    level: list[int] = []
    where: dict[tuple[str, ...], int] = {}
    if synthetic_root:
        ids.append(root_id)
        parent.append(-1)
        level.append(n_ranks + 2)
        where[()] = 0
    for pre in prefixes:
        where[pre] = len(ids)
        ids.append(";".join(pre))
        up = pre[:-1]
        parent.append(where[up] if up in where else -1)
        level.append(n_ranks - len(pre) + 2)

    leaf_order = sorted(range(len(rows)), key=lambda i: (lineages[i], rows[i][0]))
    taken = set(ids)
    pvals = [np.nan] * len(ids)
    for i in leaf_order:
        leaf_id = rows[i][0]
        if leaf_id in taken:
            raise TreeError(f"leaf id {leaf_id!r} collides with a taxon name")
        ids.append(leaf_id)
        parent.append(where[lineages[i]])
        level.append(1)
        pvals.append(float(rows[i][2]))
    tree = TaxTree(tuple(ids), np.array(parent), np.array(level))
    return tree, np.array(pvals)
