"""Regression suite: run every bundled program pair and tabulate thresholds."""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from .analysis import Options, analyze_diff, oracle_check_report
from .imp import load_system
from .invariants import parse_invariant_file, user_invariants_for
from .poly import format_number


def data_dir() -> Path:
    return Path(str(resources.files("diffcost") / "data"))


@dataclass
class Benchmark:
    name: str
    stem: str
    degree: int
    tight: int
    reference_tight: int
    reference_computed: str
    expect: str
    note: str = ""
    box: Optional[Dict[str, List[int]]] = None

    def input_box(self):
        return None if self.box is None else {v: (lo, hi) for v, (lo, hi) in self.box.items()}

    def paths(self, root: Optional[Path] = None):
        root = root or data_dir() / "benchmarks"
        inv = root / f"{self.stem}.inv"
        return root / f"{self.stem}_new.imp", root / f"{self.stem}_old.imp", (inv if inv.exists() else None)


def load_suite(path: Optional[Path] = None) -> List[Benchmark]:
    path = path or data_dir() / "benchmarks" / "suite.json"
    raw = json.loads(Path(path).read_text())
    return [Benchmark(**b) for b in raw["benchmarks"]]


@dataclass
class Row:
    name: str
    tight: int
    reference_tight: int
    reference_computed: str
    expect: str
    status: str = ""
    solver_status: str = ""
    raw: Optional[str] = None
    floor: Optional[int] = None
    certified: Optional[bool] = None
    seconds: float = 0.0
    verdict: str = ""
    error: str = ""
    oracle: str = ""


def classify(b: Benchmark, raw: Optional[Fraction]) -> str:
    """``match``: floor equals tight and raw < tight + 1; ``loose``: a sound
    threshold above that; ``unknown``: none; ``UNSOUND``: below tight."""
    if raw is None:
        return "unknown"
    if raw < b.tight:
        return "UNSOUND"
    if math.floor(raw) == b.tight and raw < b.tight + 1:
        return "match"
    return "loose"


def run_one(b: Benchmark, solver: str = "exact", time_limit: Optional[float] = 300.0,
            root: Optional[Path] = None, oracle: bool = False) -> Row:
    row = Row(b.name, b.tight, b.reference_tight, b.reference_computed, b.expect)
    new_p, old_p, inv_p = b.paths(root)
    start = time.monotonic()
    try:
        user_new = user_old = None
        if inv_p is not None:
            parsed = parse_invariant_file(inv_p.read_text())
            user_new, user_old = user_invariants_for(parsed, "new"), user_invariants_for(parsed, "old")
        rep = analyze_diff(load_system(new_p), load_system(old_p),
                           Options(degree=b.degree, solver=solver, time_limit=time_limit),
                           user_new, user_old)
    except Exception as e:  # reported in the table, never hidden
        row.error = f"{type(e).__name__}: {e}"
        row.verdict = "error"
        row.seconds = time.monotonic() - start
        return row
    row.seconds = time.monotonic() - start
    row.status, row.solver_status, row.certified = rep.status, rep.solver_status, rep.certified
    if rep.threshold_raw is not None:
        row.raw = format_number(rep.threshold_raw)
        row.floor = rep.threshold_int
    row.verdict = classify(b, rep.threshold_raw)
    if oracle and rep.witness is not None:
        try:
            oracle_check_report(rep, b.input_box())
            row.oracle = rep.oracle_check.split(" ")[0]
        except Exception as e:
            row.oracle = f"oracle error: {type(e).__name__}: {e}"
    return row


def _run_star(args):
    return run_one(*args)


def run_suite(names: Optional[Sequence[str]] = None, jobs: int = 1, solver: str = "exact",
              time_limit: Optional[float] = 300.0, suite_path: Optional[Path] = None,
              oracle: bool = False) -> List[Row]:
    suite = load_suite(suite_path)
    root = Path(suite_path).parent if suite_path else None
    if names:
        wanted = {n.lower() for n in names}
        suite = [b for b in suite if b.name.lower() in wanted or b.stem in wanted]
        missing = wanted - {b.name.lower() for b in suite} - {b.stem for b in suite}
        if missing:
            raise KeyError(f"unknown benchmarks: {sorted(missing)}")
    args = [(b, solver, time_limit, root, oracle) for b in suite]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_star, args))
    return [run_one(*a) for a in args]


def format_table(rows: Sequence[Row]) -> str:
    head = ("Benchmark", "Tight", "Ref. tight", "Ref. computed", "Computed", "Floor", "Cert.", "Time (s)",
            "Result", "Expected", "Oracle")
    body = []
    for r in rows:
        computed = r.raw if r.raw is not None else ("error" if r.error else "x")
        if r.raw is not None and "/" in r.raw:
            computed = f"{float(Fraction(r.raw)):.2f} ({r.raw})"
        cert = "-" if r.certified is None else ("yes" if r.certified else "no")
        body.append((r.name, str(r.tight), str(r.reference_tight), r.reference_computed, computed,
                     "" if r.floor is None else str(r.floor), cert, f"{r.seconds:.1f}", r.verdict, r.expect, r.oracle or "-"))
    widths = [max(len(x[i]) for x in [head] + body) for i in range(len(head))]
    line = lambda cells: "  ".join(c.ljust(w) if i == 0 else c.rjust(w)
                                   for i, (c, w) in enumerate(zip(cells, widths)))
    if not rows:
        return "no benchmarks\n"
    out = [line(head), "  ".join("-" * w for w in widths)]
    out += [line(b) for b in body]
    total = sum(r.seconds for r in rows)
    agree = sum(r.verdict == r.expect for r in rows)
    out.append("")
    out.append(f"{agree}/{len(rows)} rows as expected; total analysis time {total:.1f} s")
    for r in rows:
        if r.error:
            out.append(f"{r.name}: {r.error}")
        if r.oracle.startswith("oracle error"):
            out.append(f"{r.name}: {r.oracle}")
    return "\n".join(out) + "\n"


def rows_to_json(rows: Sequence[Row]) -> str:
    return json.dumps([asdict(r) for r in rows], indent=2)
