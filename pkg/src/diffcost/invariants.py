"""Per-location affine invariants: interval propagation plus user annotations."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .poly import Polynomial
from .syntax import Parser, to_dnf
from .ts import Assertion, Nondet, TransitionSystem, dedupe

Bound = Optional[Fraction]  # None = unbounded on that side
Interval = Tuple[Bound, Bound]
Box = Dict[str, Interval]

InvariantMap = Dict[str, Assertion]

TOP: Interval = (None, None)


# -- interval arithmetic -------------------------------------------------------

def iv_add(a: Interval, b: Interval) -> Interval:
    lo = None if a[0] is None or b[0] is None else a[0] + b[0]
    hi = None if a[1] is None or b[1] is None else a[1] + b[1]
    return lo, hi


def iv_scale(a: Interval, k: Fraction) -> Interval:
    if k == 0:
        return (Fraction(0), Fraction(0))
    lo = None if a[0] is None else a[0] * k
    hi = None if a[1] is None else a[1] * k
    return (lo, hi) if k > 0 else (hi, lo)


def iv_mul(a: Interval, b: Interval) -> Interval:
    if a == (0, 0) or b == (0, 0):
        return (Fraction(0), Fraction(0))
    # extended-real endpoint products; None stands for -inf (lo) / +inf (hi)
    ends_a = [(-math.inf if a[0] is None else a[0]), (math.inf if a[1] is None else a[1])]
    ends_b = [(-math.inf if b[0] is None else b[0]), (math.inf if b[1] is None else b[1])]
    prods = []
    for x in ends_a:
        for y in ends_b:
            if x == 0 or y == 0:
                prods.append(Fraction(0))
            else:
                prods.append(x * y)
    lo, hi = min(prods), max(prods)
    return (None if lo == -math.inf else lo, None if hi == math.inf else hi)


def iv_pow(a: Interval, k: int) -> Interval:
    out: Interval = (Fraction(1), Fraction(1))
    if k % 2 == 0 and k > 0:
        # even power of an interval is nonnegative
        m = iv_mul(a, a)
        out = m
        for _ in range(k // 2 - 1):
            out = iv_mul(out, m)
        lo = out[0]
        return (max(lo, Fraction(0)) if lo is not None else Fraction(0), out[1])
    for _ in range(k):
        out = iv_mul(out, a)
    return out


def iv_eval(p: Polynomial, box: Mapping[str, Interval]) -> Interval:
    total: Interval = (Fraction(0), Fraction(0))
    for m, c in p.terms.items():
        term: Interval = (Fraction(1), Fraction(1))
        for v, e in m:
            term = iv_mul(term, iv_pow(box.get(v, TOP), e))
        total = iv_add(total, iv_scale(term, c))
    return total


def _join(a: Interval, b: Interval) -> Interval:
    lo = None if a[0] is None or b[0] is None else min(a[0], b[0])
    hi = None if a[1] is None or b[1] is None else max(a[1], b[1])
    return lo, hi


def _meet(a: Interval, b: Interval) -> Interval:
    lo = b[0] if a[0] is None else (a[0] if b[0] is None else max(a[0], b[0]))
    hi = b[1] if a[1] is None else (a[1] if b[1] is None else min(a[1], b[1]))
    return lo, hi


def _empty(iv: Interval) -> bool:
    return iv[0] is not None and iv[1] is not None and iv[0] > iv[1]


def _integral(iv: Interval) -> Interval:
    lo = None if iv[0] is None else Fraction(math.ceil(iv[0]))
    hi = None if iv[1] is None else Fraction(math.floor(iv[1]))
    return lo, hi


def refine(box: Box, atoms: Iterable[Polynomial], rounds: int = 3, integral: bool = True) -> Optional[Box]:
    """Tighten ``box`` with affine atoms ``a >= 0``; None if the result is empty.

    Each atom ``sum a_k x_k + b >= 0`` bounds every ``x_k`` by the interval of
    the remaining terms (one round of constraint propagation per pass).
    """
    box = dict(box)
    atoms = [a for a in atoms]
    for _ in range(rounds):
        changed = False
        for a in atoms:
            if a.degree() > 1:
                continue
            if a.is_constant():
                if a.constant() < 0:
                    return None
                continue
            lin = {m[0][0]: c for m, c in a.terms.items() if m}
            const = a.constant()
            for v, k in lin.items():
                rest: Interval = (const, const)
                for w, kw in lin.items():
                    if w != v:
                        rest = iv_add(rest, iv_scale(box.get(w, TOP), kw))
                # k*v >= -rest  =>  v >= -rest_hi/k (k>0) or v <= -rest_hi/k (k<0)
                if rest[1] is None:
                    continue
                bound = -rest[1] / k
                new = (bound, None) if k > 0 else (None, bound)
                if integral:
                    new = _integral(new)
                old = box.get(v, TOP)
                nb = _meet(old, new)
                if _empty(nb):
                    return None
                if nb != old:
                    box[v] = nb
                    changed = True
        if not changed:
            break
    return box


def project(assertion: Assertion, variables: Sequence[str]) -> Optional[Box]:
    """Interval hull of the integer points of an assertion (per variable)."""
    return refine({v: TOP for v in variables}, assertion.conjuncts)


# -- propagation ---------------------------------------------------------------

def _post(ts: TransitionSystem, t, box: Box) -> Optional[Box]:
    pre = refine(box, t.guard.conjuncts)
    if pre is None:
        return None
    out = dict(pre)
    for v, e in t.update.entries:
        if isinstance(e, Nondet):
            lo = None if e.lo is None else iv_eval(e.lo, pre)[0]
            hi = None if e.hi is None else iv_eval(e.hi, pre)[1]
            out[v] = _integral((lo, hi))
        else:
            out[v] = _integral(iv_eval(e, pre))
        if _empty(out[v]):
            return None
    return out


def _widen(old: Interval, new: Interval) -> Interval:
    lo = old[0] if (old[0] is not None and new[0] is not None and new[0] >= old[0]) else None
    hi = old[1] if (old[1] is not None and new[1] is not None and new[1] <= old[1]) else None
    return lo, hi


def loop_heads(ts: TransitionSystem) -> set:
    """Targets of back edges in a depth-first search from the initial location."""
    heads = set()
    color = {l: 0 for l in ts.locations}
    stack = [(ts.initial, iter(ts.outgoing(ts.initial)))]
    color[ts.initial] = 1
    while stack:
        loc, it = stack[-1]
        t = next(it, None)
        if t is None:
            color[loc] = 2
            stack.pop()
            continue
        if color[t.target] == 1:
            heads.add(t.target)
        elif color[t.target] == 0:
            color[t.target] = 1
            stack.append((t.target, iter(ts.outgoing(t.target))))
    return heads


def interval_fixpoint(ts: TransitionSystem, widen_after: int = 5, narrow_passes: int = 1) -> Dict[str, Optional[Box]]:
    """Forward interval analysis; ``None`` marks locations found unreachable.

    Widening applies at loop heads once they have been updated ``widen_after``
    times.  Each narrowing pass (one by default) then recomputes every
    location from its predecessors, reusing already narrowed values.
    """
    variables = list(ts.variables)
    state: Dict[str, Optional[Box]] = {l: None for l in ts.locations}
    state[ts.initial] = project(ts.theta0, variables)
    if state[ts.initial] is None:
        return state
    visits = {l: 0 for l in ts.locations}
    heads = loop_heads(ts)
    work = [ts.initial]
    while work:
        loc = work.pop(0)
        box = state[loc]
        if box is None:
            continue
        for t in ts.outgoing(loc):
            post = _post(ts, t, box)
            if post is None:
                continue
            cur = state[t.target]
            if cur is None:
                new = post
            else:
                new = {v: _join(cur[v], post[v]) for v in variables}
                if new == cur:
                    continue
                visits[t.target] += 1
                if t.target in heads and visits[t.target] >= widen_after:
                    new = {v: _widen(cur[v], new[v]) for v in variables}
            state[t.target] = new
            if t.target not in work:
                work.append(t.target)

    # narrowing: recompute every location from its predecessors
    narrowed: Dict[str, Optional[Box]] = dict(state)
    for _ in range(narrow_passes):
        for loc in ts.locations:
            if narrowed[loc] is None:
                continue
            acc: Optional[Box] = project(ts.theta0, variables) if loc == ts.initial else None
            for t in ts.transitions:
                if t.target != loc or narrowed[t.source] is None:
                    continue
                if t.source == t.target and t.update.is_identity():
                    continue  # adds nothing to its own location
                post = _post(ts, t, narrowed[t.source])
                if post is None:
                    continue
                acc = post if acc is None else {v: _join(acc[v], post[v]) for v in variables}
            if acc is not None:
                narrowed[loc] = {v: _meet(narrowed[loc][v], acc[v]) for v in variables}
    return narrowed


def _box_to_atoms(box: Box, skip: Iterable[str]) -> List[Polynomial]:
    skip = set(skip)
    atoms = []
    for v, (lo, hi) in box.items():
        if v in skip:
            continue
        x = Polynomial.var(v)
        if lo is not None:
            atoms.append(x - lo)
        if hi is not None:
            atoms.append(Polynomial.const(hi) - x)
    return atoms


def written_variables(ts: TransitionSystem) -> set:
    out = set()
    for t in ts.transitions:
        out |= t.update.written()
    return out


def propagate_intervals(ts: TransitionSystem, widen_after: int = 5,
                        exclude: Iterable[str] = (), narrow_passes: int = 1) -> InvariantMap:
    """Interval invariant per location, as affine conjuncts.

    Theta0 conjuncts whose variables are never written by any transition are
    added verbatim everywhere, which keeps relational facts such as an initial
    ordering of inputs.  Variables in ``exclude`` get no interval conjuncts.
    """
    exclude = set(exclude)
    boxes = interval_fixpoint(ts, widen_after, narrow_passes)
    frozen = set(ts.variables) - written_variables(ts)
    passthrough = [a for a in ts.theta0.conjuncts
                   if a.variables() <= frozen and not (a.variables() & exclude)]
    out: InvariantMap = {}
    for loc in ts.locations:
        box = boxes[loc]
        atoms = [] if box is None else _box_to_atoms(box, exclude)
        out[loc] = Assertion.of(dedupe(passthrough + atoms))
    return out


def merge_annotations(auto: InvariantMap, user: Mapping[str, Assertion]) -> InvariantMap:
    """Location-wise conjunction of both maps, with duplicates stored once."""
    unknown = set(user) - set(auto)
    if unknown:
        raise ValueError(f"invariant annotation for unknown location(s) {sorted(unknown)}")
    return {l: Assertion.of(dedupe(auto[l].conjuncts + (user[l].conjuncts if l in user else ())))
            for l in auto}


def trivial_invariants(ts: TransitionSystem) -> InvariantMap:
    return {l: Assertion() for l in ts.locations}


# -- user annotation files -----------------------------------------------------

def parse_invariant_file(text: str) -> Dict[str, Dict[str, Assertion]]:
    """Parse lines ``invariant [new|old] <loc>: a >= 0, ...;``.

    Returns a map from scope (``""`` for unscoped, ``"new"``, ``"old"``) to a
    per-location assertion.  Unscoped entries apply to every analyzed system.
    """
    p = Parser(text, comments=("#", "//"))
    out: Dict[str, Dict[str, List[Polynomial]]] = {}
    while not p.at_eof():
        if not p.accept("invariant"):
            p.error(f"expected 'invariant', found {p.tok.text!r}")
        scope = ""
        if p.at("new", "old") and p.peek().kind == "ident":
            scope = p.tok.text
            p.i += 1
        loc = p.ident()
        p.expect(":")
        atoms: List[Polynomial] = []
        while True:
            dnf = to_dnf(p.cond())
            if len(dnf) != 1:
                p.error("invariants must be conjunctions")
            for a in dnf[0]:
                if a.degree() > 1:
                    p.error(f"non-affine invariant atom {a} >= 0")
            atoms.extend(dnf[0])
            if not p.accept(","):
                break
        p.expect(";")
        out.setdefault(scope, {}).setdefault(loc, []).extend(atoms)
    return {s: {l: Assertion.of(dedupe(a)) for l, a in m.items()} for s, m in out.items()}


def user_invariants_for(parsed: Mapping[str, Mapping[str, Assertion]], scope: str) -> Dict[str, Assertion]:
    merged: Dict[str, List[Polynomial]] = {}
    for s in ("", scope):
        for l, a in parsed.get(s, {}).items():
            merged.setdefault(l, []).extend(a.conjuncts)
    return {l: Assertion.of(dedupe(a)) for l, a in merged.items()}


def format_invariants(inv: InvariantMap, ts: TransitionSystem, scope: str = "") -> str:
    order = ts.var_order
    prefix = f"{scope} " if scope else ""
    return "".join(f"invariant {prefix}{l}: {inv[l].to_str(order) or 'true'};\n" for l in ts.locations)


# -- sampled soundness check ---------------------------------------------------

@dataclass
class InvariantViolation:
    location: str
    state: Dict[str, int]
    conjunct: Polynomial

    def __str__(self):
        vals = ", ".join(f"{k}={v}" for k, v in self.state.items())
        return f"at {self.location} with {vals}: {self.conjunct} >= 0 fails"


@dataclass
class InvariantCheckReport:
    states_checked: int
    violations: List[InvariantViolation]

    @property
    def ok(self) -> bool:
        return not self.violations


def check_invariant_sampled(ts: TransitionSystem, inv: InvariantMap, budget: int,
                            box: Optional[Mapping[str, Tuple[int, int]]] = None,
                            nondet_range: Tuple[int, int] = (-2, 2)) -> InvariantCheckReport:
    """Enumerate reachable states from input-box points and test ``inv`` on each.

    ``budget`` caps the number of reachable states examined.  A reported
    violation is a concrete reachable state, so it disproves the invariant.
    """
    from .oracle import RunBudget, box_points, default_box, reachable_states

    if budget <= 0:
        raise ValueError("budget must be positive")
    rb = RunBudget(input_box=dict(box) if box else default_box(ts), default_nondet=nondet_range)
    seen = 0
    violations: List[InvariantViolation] = []
    for x0 in box_points(ts, rb.input_box):
        for loc, state in reachable_states(ts, x0, rb, limit=budget - seen):
            seen += 1
            for a in inv.get(loc, Assertion()).conjuncts:
                if a.eval(state) < 0:
                    violations.append(InvariantViolation(loc, dict(state), a))
                    break
            if seen >= budget:
                return InvariantCheckReport(seen, violations)
    return InvariantCheckReport(seen, violations)
