"""Template-polyhedra invariants.

The abstract state at a location is an upper bound ``L(x) <= b`` for each
linear form ``L`` of a fixed template set (unit forms ``+-v``, differences
``+-(u - v)`` of related variables and the linear parts of guards and theta0 atoms).
Post-images are computed exactly by linear programming: the new bound on
``L`` after a transition is the maximum of ``L(Up(x))`` over the source
polyhedron intersected with the guard.  Bounds are rounded down to integers
because all program variables are integral.
"""

from __future__ import annotations

import math
from fractions import Fraction
from itertools import combinations
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .lp import LinearSystem, Status, simplex
from .poly import LinearCombo, Polynomial
from .ts import COST, Assertion, Nondet, TransitionSystem, dedupe, fresh_name, substitute_update

Form = Tuple[Tuple[str, int], ...]
State = Dict[Form, int]  # form -> upper bound; a missing form is unbounded

FALSE = Polynomial.const(-1)


def form_of(p: Polynomial) -> Optional[Form]:
    """Integer-normalized linear part of an affine polynomial (None if constant)."""
    lin = {next(iter(m))[0]: c for m, c in p.terms.items() if m}
    if not lin:
        return None
    den = math.lcm(*(Fraction(c).denominator for c in lin.values()))
    ints = {v: int(c * den) for v, c in lin.items()}
    g = math.gcd(*ints.values())
    return tuple(sorted((v, c // g) for v, c in ints.items()))


def form_poly(f: Form) -> Polynomial:
    out = Polynomial()
    for v, c in f:
        out = out + Polynomial.var(v) * c
    return out


def _neg(f: Form) -> Form:
    return tuple((v, -c) for v, c in f)


def _related_pairs(ts: TransitionSystem, atoms: Sequence[Polynomial]) -> set:
    """Variable pairs that meet in one atom or on one transition (guard or update).

    Differences of unrelated variables rarely carry information and each form
    costs one LP per post-image, so only related pairs get a template."""
    groups = [a.variables() for a in atoms]
    for t in ts.transitions:
        touched = set(t.guard.variables())
        for v, e in t.update.entries:
            if isinstance(e, Nondet):
                if e.lo is None and e.hi is None:
                    continue  # a free havoc relates nothing
                reads = set().union(*(b.variables() for b in (e.lo, e.hi) if b is not None))
            else:
                reads = e.variables()
            touched |= reads | {v}
        groups.append(touched)
    out = set()
    for g in groups:
        for u, v in combinations(sorted(g), 2):
            out.add((u, v))
            out.add((v, u))
    return out


def template_forms(ts: TransitionSystem, variables: Sequence[str]) -> List[Form]:
    tracked = set(variables)
    forms: List[Form] = []

    def add(f: Optional[Form]):
        if f is None or not {v for v, _ in f} <= tracked:
            return
        for g in (f, _neg(f)):
            if g not in forms:
                forms.append(g)

    atoms = list(ts.theta0.conjuncts)
    for t in ts.transitions:
        atoms.extend(t.guard.conjuncts)
    for v in variables:
        add(((v, 1),))
    related = _related_pairs(ts, atoms)
    for u, v in combinations(variables, 2):
        if (u, v) in related:
            add(tuple(sorted(((u, 1), (v, -1)))))
    for a in atoms:
        if a.degree() == 1:
            add(form_of(a))
    return forms


def _combo(p: Polynomial) -> LinearCombo:
    lc = LinearCombo()
    for m, c in p.terms.items():
        lc.add_term(next(iter(m))[0] if m else None, c)
    return lc


class _Region:
    """A polyhedron over the tracked variables plus fresh nondet values."""

    def __init__(self, variables: Iterable[str], atoms: Iterable[Polynomial]):
        self.sys = LinearSystem()
        for v in variables:
            self.sys.add_var(v)
        self.known = set(self.sys.variables)
        for i, a in enumerate(atoms):
            if a.degree() <= 1 and a.variables() <= self.known:
                self.sys.add_ge(f"a{i}", _combo(a))

    def feasible(self) -> bool:
        self.sys.objective = None
        return simplex(self.sys).status != Status.INFEASIBLE

    def maximum(self, p: Polynomial) -> Optional[Fraction]:
        if p.degree() > 1 or not p.variables() <= self.known:
            return None
        if p.is_constant():
            return p.constant()
        self.sys.objective = ("max", _combo(p))
        sol = simplex(self.sys)
        return sol.objective_value if sol.status == Status.OPTIMAL else None


def state_atoms(state: Optional[State]) -> List[Polynomial]:
    if state is None:
        return [FALSE]
    return [Polynomial.const(b) - form_poly(f) for f, b in state.items()]


def _bounds(region: _Region, forms: Sequence[Form], image) -> State:
    out: State = {}
    for f in forms:
        m = region.maximum(image(form_poly(f)))
        if m is not None:
            out[f] = math.floor(m)
    return out


def _post(ts, t, state: State, variables, forms) -> Optional[State]:
    fresh = [fresh_name(v, t.tid) for v, e in t.update.entries if isinstance(e, Nondet)]
    atoms = state_atoms(state) + list(t.guard.conjuncts)
    for v, e in t.update.entries:
        if isinstance(e, Nondet):
            y = Polynomial.var(fresh_name(v, t.tid))
            if e.lo is not None:
                atoms.append(y - e.lo)
            if e.hi is not None:
                atoms.append(e.hi - y)
    region = _Region(list(variables) + fresh, atoms)
    if not region.feasible():
        return None
    return _bounds(region, forms, lambda p: substitute_update(p, t.update, t.tid))


def _join(a: Optional[State], b: Optional[State]) -> Optional[State]:
    if a is None:
        return b
    if b is None:
        return a
    return {f: max(a[f], b[f]) for f in a.keys() & b.keys()}


def _leq(a: Optional[State], b: Optional[State]) -> bool:
    if a is None:
        return True
    if b is None:
        return False
    return all(f in a and a[f] <= v for f, v in b.items())


def _widen(old: State, new: State) -> State:
    return {f: v for f, v in new.items() if f in old and v <= old[f]}


def polyhedra_fixpoint(ts: TransitionSystem, variables: Sequence[str], widen_after: int = 5,
                       narrow_passes: int = 2) -> Dict[str, Optional[State]]:
    """Forward analysis; ``None`` marks locations found unreachable."""
    from .invariants import loop_heads

    forms = template_forms(ts, variables)
    init_region = _Region(variables, ts.theta0.conjuncts)
    init = _bounds(init_region, forms, lambda p: p) if init_region.feasible() else None
    state: Dict[str, Optional[State]] = {l: None for l in ts.locations}
    state[ts.initial] = init
    if init is None:
        return state
    heads = loop_heads(ts)
    visits = {l: 0 for l in ts.locations}
    work = [ts.initial]
    while work:
        loc = work.pop(0)
        if state[loc] is None:
            continue
        for t in ts.outgoing(loc):
            if t.source == t.target and t.update.is_identity():
                continue
            post = _post(ts, t, state[loc], variables, forms)
            if post is None:
                continue
            cur = state[t.target]
            if _leq(post, cur):
                continue
            new = _join(cur, post)
            if cur is not None:
                visits[t.target] += 1
                if t.target in heads and visits[t.target] >= widen_after:
                    new = _widen(cur, new)
            state[t.target] = new
            if t.target not in work:
                work.append(t.target)

    for _ in range(narrow_passes):
        for loc in ts.locations:
            if state[loc] is None:
                continue
            acc = init if loc == ts.initial else None
            for t in ts.transitions:
                if t.target != loc or state[t.source] is None:
                    continue
                if t.source == t.target and t.update.is_identity():
                    continue
                acc = _join(acc, _post(ts, t, state[t.source], variables, forms))
            if acc is None:
                state[loc] = None
            else:
                cur = state[loc]
                state[loc] = {f: min(v, cur.get(f, v)) for f, v in acc.items()} | \
                             {f: v for f, v in cur.items() if f not in acc}
    return state


def drop_redundant(atoms: Sequence[Polynomial], variables: Sequence[str]) -> List[Polynomial]:
    """Remove atoms implied by the remaining ones (checked by LP)."""
    kept = list(dedupe(atoms))
    i = 0
    while i < len(kept):
        a = kept[i]
        rest = kept[:i] + kept[i + 1:]
        region = _Region(variables, rest)
        m = region.maximum(-a)
        if m is not None and m <= 0 and region.feasible():
            kept = rest
        else:
            i += 1
    return kept


def propagate_polyhedra(ts: TransitionSystem, widen_after: int = 5, exclude: Iterable[str] = (COST,),
                        narrow_passes: int = 2, minimize: bool = True) -> Dict[str, Assertion]:
    """Template-polyhedra invariant per location as affine conjuncts.

    Unreachable locations get the single conjunct ``-1 >= 0``.
    """
    exclude = set(exclude)
    variables = [v for v in ts.variables if v not in exclude]
    states = polyhedra_fixpoint(ts, variables, widen_after, narrow_passes)
    out = {}
    for loc in ts.locations:
        atoms = state_atoms(states[loc])
        if minimize and states[loc] is not None:
            atoms = drop_redundant(atoms, variables)
        out[loc] = Assertion.of(atoms)
    return out
