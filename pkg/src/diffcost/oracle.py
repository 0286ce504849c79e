"""Brute-force ground truth for small inputs.

Runs are enumerated exhaustively: every nondeterministic update ranges over a
finite integer domain and the search memoizes the minimal and maximal
remaining cost of each visited state.  A run that revisits a state on the
current path, or exceeds ``max_steps`` transitions, violates the termination
assumption under which potential functions bound costs; both cases raise
instead of returning a number.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterator, List, Mapping, Optional, Tuple

from .poly import Polynomial
from .ts import COST, Nondet, TransitionSystem, fresh_name

State = Tuple[int, ...]


class OracleError(RuntimeError):
    pass


class StepBudgetExceeded(OracleError):
    """A run grew longer than ``max_steps``: the input may not terminate."""


class NonTermination(OracleError):
    """A run revisited a state on its own path, so it can loop forever."""


class BlockedRun(OracleError):
    """A non-terminal state has no enabled transition."""


@dataclass
class RunBudget:
    max_steps: int = 10**5
    input_box: Dict[str, Tuple[int, int]] = field(default_factory=dict)
    nondet_domain: Dict[str, Tuple[int, int]] = field(default_factory=dict)
    default_nondet: Tuple[int, int] = (-2, 2)
    max_states: int = 2 * 10**6

    def __post_init__(self):
        if self.max_steps <= 0:
            raise ValueError("max_steps must be positive")
        for name, (lo, hi) in list(self.input_box.items()) + list(self.nondet_domain.items()):
            if lo > hi:
                raise ValueError(f"empty range for {name}: [{lo}, {hi}]")


def _as_int(x: Fraction, what: str) -> int:
    if x.denominator != 1:
        raise OracleError(f"{what} evaluated to non-integer {x}")
    return int(x)


class Interpreter:
    """Successor computation for one transition system."""

    def __init__(self, ts: TransitionSystem, budget: RunBudget, track_cost: bool = False):
        self.ts = ts
        self.budget = budget
        self.vars = list(ts.variables)
        self.ci = self.vars.index(COST)
        self.track_cost = track_cost or not self._cost_is_write_only()
        self.out = {l: [t for t in ts.outgoing(l) if not t.is_terminal_loop(ts.terminal)]
                    for l in ts.locations}

    def _cost_is_write_only(self) -> bool:
        """True when cost is only ever incremented by cost-free amounts."""
        for t in self.ts.transitions:
            if COST in t.guard.variables():
                return False
            for v, e in t.update.entries:
                if isinstance(e, Nondet):
                    if v == COST:
                        return False
                    reads = set().union(*(b.variables() for b in (e.lo, e.hi) if b is not None))
                else:
                    reads = (e - Polynomial.var(COST)).variables() if v == COST else e.variables()
                if COST in reads:
                    return False
        return True

    def key(self, loc: str, state: State):
        if self.track_cost:
            return (loc, state)
        s = list(state)
        s[self.ci] = 0
        return (loc, tuple(s))

    def nondet_range(self, var: str, tid: str, e: Nondet, env) -> range:
        dom = self.budget.nondet_domain.get(fresh_name(var, tid), self.budget.nondet_domain.get(var))
        lo = None if e.lo is None else math.ceil(e.lo.eval(env))
        hi = None if e.hi is None else math.floor(e.hi.eval(env))
        if lo is None and hi is None:
            lo, hi = dom or self.budget.default_nondet
        elif lo is None:
            width = (dom or self.budget.default_nondet)
            lo = hi - (width[1] - width[0])
        elif hi is None:
            width = (dom or self.budget.default_nondet)
            hi = lo + (width[1] - width[0])
        elif dom is not None:
            lo, hi = max(lo, dom[0]), min(hi, dom[1])
        return range(lo, hi + 1)

    def successors(self, loc: str, state: State) -> List[Tuple[str, State, int]]:
        """Enabled moves as ``(target, next_state, cost_delta)``."""
        env = dict(zip(self.vars, state))
        out = []
        for t in self.out[loc]:
            if not t.guard.holds(env):
                continue
            base = list(state)
            choices = []
            for v, e in t.update.entries:
                i = self.vars.index(v)
                if isinstance(e, Nondet):
                    choices.append((i, self.nondet_range(v, t.tid, e, env)))
                else:
                    base[i] = _as_int(e.eval(env), f"update of {v} on {t.tid}")
            if not choices:
                nxt = tuple(base)
                out.append((t.target, nxt, nxt[self.ci] - state[self.ci]))
                continue
            idx = [i for i, _ in choices]
            for combo in itertools.product(*(r for _, r in choices)):
                s = list(base)
                for i, val in zip(idx, combo):
                    s[i] = val
                nxt = tuple(s)
                out.append((t.target, nxt, nxt[self.ci] - state[self.ci]))
        return out


def initial_state(ts: TransitionSystem, x0: Mapping[str, int]) -> State:
    missing = [v for v in ts.variables if v not in x0]
    if missing:
        raise ValueError(f"initial valuation misses {missing}")
    if not ts.theta0.holds(x0):
        raise ValueError(f"initial valuation {dict(x0)} violates theta0")
    return tuple(int(x0[v]) for v in ts.variables)


def explore(ts: TransitionSystem, x0: Mapping[str, int], budget: RunBudget,
            track_cost: bool = False) -> Tuple[Tuple[int, int], Dict]:
    """Exact (inf, sup) of the run cost from ``x0`` plus the per-state memo.

    The memo maps ``(location, state)`` to the (min, max) cost still to be paid
    from that state.  Raises :class:`StepBudgetExceeded` or
    :class:`NonTermination` when the termination assumption fails.
    """
    it = Interpreter(ts, budget, track_cost)
    start = initial_state(ts, x0)
    memo: Dict = {}
    root = it.key(ts.initial, start)
    on_path = set()
    # frame: [key, loc, state, successors, next index, lo, hi]
    stack = []

    def push(loc, state):
        k = it.key(loc, state)
        if len(stack) >= budget.max_steps:
            raise StepBudgetExceeded(
                f"a run exceeded {budget.max_steps} steps (last location {loc}); "
                "the program may not terminate")
        if len(memo) >= budget.max_states:
            raise StepBudgetExceeded(f"more than {budget.max_states} states explored")
        on_path.add(k)
        if loc == ts.terminal:
            stack.append([k, loc, state, [], 0, 0, 0])
            return
        succ = it.successors(loc, state)
        if not succ:
            raise BlockedRun(f"no enabled transition at {loc} with "
                             f"{dict(zip(it.vars, state))}")
        stack.append([k, loc, state, succ, 0, None, None])

    push(ts.initial, start)
    while stack:
        fr = stack[-1]
        succ = fr[3]
        if fr[4] < len(succ):
            tgt, nxt, delta = succ[fr[4]]
            nk = it.key(tgt, nxt)
            if nk in memo:
                fr[4] += 1
                lo, hi = memo[nk]
                fr[5] = lo + delta if fr[5] is None else min(fr[5], lo + delta)
                fr[6] = hi + delta if fr[6] is None else max(fr[6], hi + delta)
                continue
            if nk in on_path:
                raise NonTermination(f"a run revisits location {tgt} with "
                                     f"{dict(zip(it.vars, nxt))}; it can loop forever")
            push(tgt, nxt)
            continue
        stack.pop()
        on_path.discard(fr[0])
        memo[fr[0]] = (fr[5], fr[6])
        if stack:
            parent = stack[-1]
            tgt, nxt, delta = parent[3][parent[4]]
            parent[4] += 1
            lo, hi = fr[5], fr[6]
            parent[5] = lo + delta if parent[5] is None else min(parent[5], lo + delta)
            parent[6] = hi + delta if parent[6] is None else max(parent[6], hi + delta)
    return memo[root], memo


def cost_extremes(ts: TransitionSystem, x0: Mapping[str, int], budget: RunBudget) -> Tuple[int, int]:
    """(CostInf, CostSup) over all runs from ``x0``, relative to the finite nondet domains."""
    return explore(ts, x0, budget)[0]


def reachable_states(ts: TransitionSystem, x0: Mapping[str, int], budget: RunBudget,
                     limit: int) -> Iterator[Tuple[str, Dict[str, int]]]:
    """Breadth-first enumeration of reachable states (at most ``limit``)."""
    it = Interpreter(ts, budget, track_cost=True)
    start = (ts.initial, initial_state(ts, x0))
    seen = {start}
    queue = deque([start])
    count = 0
    while queue and count < limit:
        loc, state = queue.popleft()
        count += 1
        yield loc, dict(zip(it.vars, state))
        if loc == ts.terminal:
            continue
        for tgt, nxt, _ in it.successors(loc, state):
            if (tgt, nxt) not in seen:
                seen.add((tgt, nxt))
                queue.append((tgt, nxt))


# -- input boxes ----------------------------------------------------------------

def default_box(ts: TransitionSystem, width: int = 4) -> Dict[str, Tuple[int, int]]:
    """A ``width``-wide integer box at the low corner of theta0's interval hull."""
    from .invariants import project

    hull = project(ts.theta0, list(ts.variables))
    if hull is None:
        raise ValueError("theta0 is unsatisfiable over the integers")
    box = {}
    for v in ts.variables:
        lo, hi = hull[v]
        if lo is not None and hi is not None and lo == hi:
            continue
        if lo is not None:
            box[v] = (int(lo), int(lo) + width - 1 if hi is None else min(int(hi), int(lo) + width - 1))
        elif hi is not None:
            box[v] = (int(hi) - width + 1, int(hi))
        else:
            box[v] = (0, width - 1)
    return box


def box_points(ts: TransitionSystem, box: Mapping[str, Tuple[int, int]]) -> Iterator[Dict[str, int]]:
    """Integer points of ``box`` extended by theta0's fixed values, filtered by theta0.

    Variables outside the box must be pinned to a single value by theta0.
    """
    from .invariants import project

    hull = project(ts.theta0, list(ts.variables))
    if hull is None:
        return
    fixed = {}
    for v in ts.variables:
        if v in box:
            continue
        lo, hi = hull[v]
        if lo is None or lo != hi:
            raise ValueError(f"variable {v!r} is neither in the input box nor fixed by theta0")
        fixed[v] = int(lo)
    names = sorted(box)
    for combo in itertools.product(*(range(box[v][0], box[v][1] + 1) for v in names)):
        x = dict(fixed)
        x.update(zip(names, combo))
        if ts.theta0.holds(x):
            yield x


@dataclass
class DiffPoint:
    x0: Dict[str, int]
    sup_new: int
    inf_old: int

    @property
    def diff(self) -> int:
        return self.sup_new - self.inf_old


@dataclass
class MaxDiff:
    value: Optional[int]
    argmax: Optional[Dict[str, int]]
    points: List[DiffPoint]


def max_diff(ts_new: TransitionSystem, ts_old: TransitionSystem, budget: RunBudget) -> MaxDiff:
    """max over the input box of CostSup_new(x) - CostInf_old(x)."""
    box = budget.input_box or default_box(ts_new)
    points = []
    for x in box_points(ts_new, box):
        sup_new = cost_extremes(ts_new, x, budget)[1]
        inf_old = cost_extremes(ts_old, x, budget)[0]
        points.append(DiffPoint(x, sup_new, inf_old))
    if not points:
        return MaxDiff(None, None, [])
    best = max(points, key=lambda p: p.diff)
    return MaxDiff(best.diff, best.x0, points)


# -- witness checking -------------------------------------------------------------

@dataclass
class CheckReport:
    points: int = 0
    states: int = 0
    failures: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def merge(self, other: "CheckReport") -> "CheckReport":
        return CheckReport(self.points + other.points, self.states + other.states,
                           self.failures + other.failures)


def _fmt(x: Mapping[str, int]) -> str:
    return "{" + ", ".join(f"{k}={v}" for k, v in x.items()) + "}"


def check_bounds(ts: TransitionSystem, x0: Mapping[str, int], budget: RunBudget,
                 upper: Optional[Mapping[str, Polynomial]] = None,
                 lower: Optional[Mapping[str, Polynomial]] = None,
                 label: str = "") -> CheckReport:
    """Check ``upper(l, x) >= CostSup`` and ``lower(l, x) <= CostInf`` at every
    state reachable from ``x0`` (remaining cost from that state)."""
    mentions_cost = any(COST in p.variables()
                        for m in (upper or {}, lower or {}) for p in m.values())
    _, memo = explore(ts, x0, budget, track_cost=mentions_cost)
    rep = CheckReport(points=1)
    names = list(ts.variables)
    for (loc, state), (lo, hi) in memo.items():
        rep.states += 1
        env = dict(zip(names, state))
        if upper is not None and loc in upper and upper[loc].eval(env) < hi:
            rep.failures.append(f"{label} upper bound at {loc} {_fmt(env)}: "
                                f"{upper[loc].eval(env)} < max remaining cost {hi}")
        if lower is not None and loc in lower and lower[loc].eval(env) > lo:
            rep.failures.append(f"{label} lower bound at {loc} {_fmt(env)}: "
                                f"{lower[loc].eval(env)} > min remaining cost {lo}")
    return rep


def check_witness(witness, ts_new: TransitionSystem, ts_old: TransitionSystem,
                  budget: RunBudget) -> CheckReport:
    """Validate a differential witness on every box point.

    Checks the upper bound of the new version and the lower bound of the old
    one at all reachable states, then the chain
    ``t >= pf_new(l0, x) - antipf_old(l0, x) >= CostSup_new(x) - CostInf_old(x)``.
    """
    box = budget.input_box or default_box(ts_new)
    rep = CheckReport()
    t = witness.threshold_raw
    for x in box_points(ts_new, box):
        rep = rep.merge(check_bounds(ts_new, x, budget, upper=witness.pf_new, label="new"))
        rep = rep.merge(check_bounds(ts_old, x, budget, lower=witness.antipf_old, label="old"))
        gap = witness.pf_new[ts_new.initial].eval(x) - witness.antipf_old[ts_old.initial].eval(x)
        sup_new = cost_extremes(ts_new, x, budget)[1]
        inf_old = cost_extremes(ts_old, x, budget)[0]
        if t is not None and t < gap:
            rep.failures.append(f"threshold {t} below witness gap {gap} at {_fmt(x)}")
        if gap < sup_new - inf_old:
            rep.failures.append(f"witness gap {gap} below true difference "
                                f"{sup_new - inf_old} at {_fmt(x)}")
    return rep
