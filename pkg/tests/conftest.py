"""Collects acceptance results and prints one line per criterion at the end of the run."""
from __future__ import annotations

ACCEPTANCE: dict[str, list[tuple[str, bool, str]]] = {}

TITLES = {
    "1": "FAR control, one-stage modes",
    "2": "FAR control, two-stage",
    "3": "naive FAR inflation",
    "4": "conjunction FDRc control",
    "5": "driver pinpointing",
    "6": "least-favourable weights vs enumeration",
    "7": "worked numbers",
    "8": "null uniformity of aggregated p-values",
    "9": "runtime on a 2360-leaf taxonomy",
}


def record(criterion: str, name: str, ok: bool, detail: str) -> None:
    ACCEPTANCE.setdefault(criterion, []).append((name, bool(ok), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=int):
        parts = ACCEPTANCE[key]
        ok = all(p[1] for p in parts)
        info = "; ".join(f"{n}: {d}" + ("" if good else " [failed]") for n, good, d in parts)
        tr.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {key} ({TITLES[key]}): {info}")
