from __future__ import annotations

import math
import os
import random
from fractions import Fraction
from pathlib import Path
from typing import Dict, List

import pytest

from diffcost.bench import data_dir
from diffcost.constraints import ImplicationConstraint
from diffcost.imp import load_system
from diffcost.invariants import project

SRC = Path(__file__).resolve().parents[1] / "src"
# subprocesses (external solver backends, CLI runs) need the package too
os.environ["PYTHONPATH"] = os.pathsep.join(filter(None, [str(SRC), os.environ.get("PYTHONPATH")]))

JOIN = data_dir() / "join"
BENCH = data_dir() / "benchmarks"
MISC = data_dir() / "misc"

# outcome lines collected by the acceptance tests, printed at the end of the run
ACCEPTANCE: Dict[str, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k.split()[1])):
        terminalreporter.write_line(ACCEPTANCE[key])


@pytest.fixture(scope="session")
def join_pair():
    return load_system(JOIN / "join_new.imp"), load_system(JOIN / "join_old.imp")


@pytest.fixture(scope="session")
def join_ts_pair():
    return load_system(JOIN / "join_new.ts"), load_system(JOIN / "join_old.ts")


def loop_program(body: str, bound: int = 100, extra_decls: str = "") -> str:
    """A one-parameter program running ``body`` n times."""
    return (f"void f(int n) {{\n  assume(1 <= n && n <= {bound});\n  int i = 0;\n{extra_decls}"
            f"  while (i < n) {{\n{body}\n    i = i + 1;\n  }}\n}}\n")


def sample_premise_points(c: ImplicationConstraint, rng: random.Random, want: int,
                          span: int = 120, tries: int = 200) -> List[Dict[str, int]]:
    """Random integer points satisfying every premise of ``c``.

    A start point comes from rejection sampling inside the premises' interval
    hull (clipped to ``[-span, span]``).  With affine premises a coordinate
    walk follows: each step redraws one variable uniformly from the range the
    premises leave it given the others, so every visited point is valid."""
    from diffcost.ts import Assertion

    names = sorted({v for p in c.premises for v in p.variables()}
                   | {v for m in c.conclusion for v, _ in m})
    hull = project(Assertion.of(c.premises), names) if c.premises else {v: (None, None) for v in names}
    if hull is None:
        return []
    ranges = {}
    for v in names:
        lo, hi = hull[v]
        lo = -span if lo is None else max(int(lo), -span)
        hi = span if hi is None else min(int(hi), span)
        if lo > hi:
            return []
        ranges[v] = (lo, hi)
    start = None
    for _ in range(want * tries):
        x = {v: rng.randint(lo, hi) for v, (lo, hi) in ranges.items()}
        if c.premises_hold(x):
            start = x
            break
    if start is None or not names:
        return [start] if start is not None else []
    if any(p.degree() > 1 for p in c.premises):
        return _rejection(c, rng, ranges, want, tries)
    rows = [({next(iter(m))[0]: Fraction(k) for m, k in p.terms.items() if m}, Fraction(p.constant()))
            for p in c.premises]
    out, x = [], dict(start)
    while len(out) < want:
        for v in rng.sample(names, len(names)):
            lo, hi = ranges[v]
            for coefs, const in rows:
                a = coefs.get(v, 0)
                if a == 0:
                    continue
                rest = const + sum(k * x[u] for u, k in coefs.items() if u != v)
                bound = -rest / a  # a * v + rest >= 0
                if a > 0:
                    lo = max(lo, math.ceil(bound))
                else:
                    hi = min(hi, math.floor(bound))
            x[v] = rng.randint(lo, hi)
        out.append(dict(x))
    return out


def _rejection(c, rng, ranges, want, tries):
    out = []
    for _ in range(want * tries):
        x = {v: rng.randint(lo, hi) for v, (lo, hi) in ranges.items()}
        if c.premises_hold(x):
            out.append(x)
            if len(out) == want:
                break
    return out
