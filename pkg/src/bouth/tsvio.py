"""On-disk formats: lineage and edge-list inputs, result, metrics and manifest outputs."""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .stats import format_p
from .tree import TaxTree, TreeError, from_edges, to_edges

RESULT_COLUMNS = ("node_id", "level", "p_value", "detected", "auto_detected", "driver")
METRIC_COLUMNS = ("scenario", "method", "metric", "value", "mc_se", "reps")


class InputError(ValueError):
    """Malformed input file; the message names the offending line."""


def _open_tsv(path):
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines:
        raise InputError(f"{path}: empty file")
    header = lines[0].split("\t")
    return header, [(i + 2, ln.split("\t")) for i, ln in enumerate(lines[1:]) if ln.strip()]


def _columns(path, header, required):
    missing = [c for c in required if c not in header]
    if missing:
        raise InputError(f"{path}: header lacks column(s) {', '.join(missing)}")
    return [header.index(c) for c in required]


def read_lineage_tsv(path) -> list[tuple[str, list[str], float]]:
    """Rows of ``leaf_id``, ``lineage`` (``;``-joined ranks) and ``p_value``."""
    header, body = _open_tsv(path)
    ci, cl, cp = _columns(path, header, ("leaf_id", "lineage", "p_value"))
    rows = []
    for lineno, f in body:
        if len(f) != len(header):
            raise InputError(f"{path}:{lineno}: expected {len(header)} fields, got {len(f)}")
        try:
            p = float(f[cp])
        except ValueError:
            raise InputError(f"{path}:{lineno}: p_value {f[cp]!r} is not a number") from None
        if not 0.0 <= p <= 1.0:
            raise InputError(f"{path}:{lineno}: p_value {p} outside [0, 1]")
        rows.append((f[ci], f[cl].split(";"), p))
    if not rows:
        raise InputError(f"{path}: no data rows")
    return rows


def read_edge_list(path) -> TaxTree:
    """Tree from ``node_id``, ``parent_id`` (``-`` for the root) and ``level`` columns."""
    header, body = _open_tsv(path)
    cn, cp, cl = _columns(path, header, ("node_id", "parent_id", "level"))
    edges = []
    for lineno, f in body:
        if len(f) != len(header):
            raise InputError(f"{path}:{lineno}: expected {len(header)} fields, got {len(f)}")
        try:
            lev = int(f[cl])
        except ValueError:
            raise InputError(f"{path}:{lineno}: level {f[cl]!r} is not an integer") from None
        edges.append((f[cn], None if f[cp] == "-" else f[cp], lev))
    try:
        return from_edges(edges)
    except TreeError as e:
        raise InputError(f"{path}: {e}") from None


def write_edge_list(tree: TaxTree, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(("node_id", "parent_id", "level"))
        for node, par, lev in to_edges(tree):
            w.writerow((node, "-" if par is None else par, lev))


def result_rows(tree: TaxTree, p_value: np.ndarray, detected: np.ndarray,
                auto: np.ndarray, driver: np.ndarray,
                nodes: Iterable[int] | None = None) -> list[list[str]]:
    nodes = range(tree.n_nodes) if nodes is None else nodes
    return [[tree.ids[i], str(int(tree.level[i])), format_p(float(p_value[i])),
             str(int(detected[i])), str(int(auto[i])), str(int(driver[i]))] for i in nodes]


def write_table(path, header: Sequence[str], rows: Iterable[Sequence[str]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def read_table(path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh, delimiter="\t"))


def write_metrics(path, rows) -> None:
    write_table(path, METRIC_COLUMNS,
                ([r.scenario, r.method, r.metric, f"{r.value:.12g}", f"{r.mc_se:.12g}", str(r.reps)]
                 for r in rows))


def digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(path, manifest: dict) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
