"""Transition systems: locations, affine-guarded transitions, polynomial updates.

The textual ``.ts`` format is line-oriented and ``;``-terminated::

    vars lenA lenB i j cost;
    init l0;
    terminal lout;
    theta0 lenA - 1 >= 0, 100 - lenA >= 0, cost >= 0, -cost >= 0;
    trans l0 -> l1 update i := 0;
    trans l1 -> l2 guard i < lenA update j := 0;
    trans l2 -> l2 guard x >= 0 update y := nondet in [0, 100];

The terminal self-loop is implicit.  Transition ids are ``t0, t1, ...`` in
file order; the implicit terminal loop gets the next free index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from .poly import Polynomial
from .syntax import Parser, ParseError, to_dnf

COST = "cost"


class SemanticError(ValueError):
    """A structurally well-formed input that violates a model invariant."""


# -- assertions ----------------------------------------------------------------

def _affine_key(p: Polynomial):
    return frozenset(p.terms.items())


def normalize_affine(p: Polynomial) -> Polynomial:
    """Scale ``p >= 0`` so that the largest |coefficient| of a variable is 1.

    Used only for syntactic deduplication; the meaning of ``p >= 0`` is kept.
    """
    lin = [abs(c) for m, c in p.terms.items() if m]
    if not lin:
        return p
    return p * (1 / max(lin))


@dataclass(frozen=True)
class Assertion:
    """Conjunction of affine atoms, each read as ``expr >= 0``."""

    conjuncts: Tuple[Polynomial, ...] = ()

    def __post_init__(self):
        for c in self.conjuncts:
            if c.degree() > 1:
                raise SemanticError(f"non-affine conjunct {c} >= 0")

    @classmethod
    def of(cls, conjuncts: Iterable[Polynomial]) -> "Assertion":
        return cls(dedupe(conjuncts))

    def holds(self, x: Mapping[str, int]) -> bool:
        return all(c.eval(x) >= 0 for c in self.conjuncts)

    def variables(self) -> set:
        return set().union(*(c.variables() for c in self.conjuncts)) if self.conjuncts else set()

    def __and__(self, other: "Assertion") -> "Assertion":
        return Assertion.of(self.conjuncts + other.conjuncts)

    def __len__(self):
        return len(self.conjuncts)

    def __iter__(self):
        return iter(self.conjuncts)

    def to_str(self, order=None) -> str:
        if not self.conjuncts:
            return "true"
        return ", ".join(format_atom(c, order) for c in self.conjuncts)


def dedupe(conjuncts: Iterable[Polynomial]) -> Tuple[Polynomial, ...]:
    """Drop syntactic duplicates (up to positive scaling) and trivially true atoms."""
    seen = set()
    out = []
    for c in conjuncts:
        if c.is_constant() and c.constant() >= 0:
            continue
        key = _affine_key(normalize_affine(c))
        if key in seen:
            continue
        seen.add(key)
        out.append(c)
    return tuple(out)


def format_atom(p: Polynomial, order=None) -> str:
    return f"{p.to_str(order)} >= 0"


# -- updates -------------------------------------------------------------------

@dataclass(frozen=True)
class Nondet:
    """Fresh integer value, optionally bounded by affine expressions of the pre-state."""

    lo: Optional[Polynomial] = None
    hi: Optional[Polynomial] = None

    def to_str(self, order=None) -> str:
        if self.lo is None and self.hi is None:
            return "nondet"
        lo = "-inf" if self.lo is None else self.lo.to_str(order)
        hi = "inf" if self.hi is None else self.hi.to_str(order)
        return f"nondet in [{lo}, {hi}]"


UpdateEntry = Union[Polynomial, Nondet]


@dataclass(frozen=True)
class Update:
    """Per-variable assignment; variables not listed keep their value."""

    entries: Tuple[Tuple[str, UpdateEntry], ...] = ()

    @classmethod
    def of(cls, mapping: Mapping[str, UpdateEntry]) -> "Update":
        items = []
        for v, e in mapping.items():
            if isinstance(e, Polynomial) and e == Polynomial.var(v):
                continue
            items.append((v, e))
        return cls(tuple(sorted(items, key=lambda kv: kv[0])))

    def as_dict(self) -> Dict[str, UpdateEntry]:
        return dict(self.entries)

    def entry(self, v: str) -> UpdateEntry:
        for name, e in self.entries:
            if name == v:
                return e
        return Polynomial.var(v)

    def is_identity(self) -> bool:
        return not self.entries

    def nondet_vars(self) -> List[str]:
        return [v for v, e in self.entries if isinstance(e, Nondet)]

    def is_deterministic(self) -> bool:
        return not self.nondet_vars()

    def written(self) -> set:
        return {v for v, _ in self.entries}


def fresh_name(var: str, tid: str) -> str:
    """Name of the fresh value a nondeterministic update gives ``var`` on ``tid``."""
    return f"{var}@{tid}"


def substitute_update(p: Polynomial, up: Update, tid: str) -> Polynomial:
    """``p`` evaluated at the post-state of ``up``, as a polynomial in the pre-state.

    Deterministic entries substitute their polynomial; nondeterministic ones
    substitute the fresh variable ``var@tid``.
    """
    mapping = {}
    for v, e in up.entries:
        mapping[v] = Polynomial.var(fresh_name(v, tid)) if isinstance(e, Nondet) else e
    return p.substitute(mapping) if mapping else p


# -- transitions and systems ---------------------------------------------------

@dataclass(frozen=True)
class Transition:
    tid: str
    source: str
    target: str
    guard: Assertion = Assertion()
    update: Update = Update()

    def is_terminal_loop(self, terminal: str) -> bool:
        return (self.source == terminal and self.target == terminal
                and not self.guard.conjuncts and self.update.is_identity())


@dataclass(frozen=True)
class TransitionSystem:
    variables: Tuple[str, ...]
    transitions: Tuple[Transition, ...]
    initial: str
    terminal: str
    theta0: Assertion
    locations: Tuple[str, ...] = field(default=())
    name: str = ""

    def __post_init__(self):
        if not self.locations:
            locs = [self.initial]
            for t in self.transitions:
                for l in (t.source, t.target):
                    if l not in locs:
                        locs.append(l)
            if self.terminal not in locs:
                locs.append(self.terminal)
            object.__setattr__(self, "locations", tuple(locs))

    @property
    def var_order(self) -> Dict[str, int]:
        return {v: i for i, v in enumerate(self.variables)}

    def outgoing(self, loc: str) -> List[Transition]:
        return [t for t in self.transitions if t.source == loc]

    def transition(self, tid: str) -> Transition:
        for t in self.transitions:
            if t.tid == tid:
                return t
        raise KeyError(tid)

    def program_variables(self) -> Tuple[str, ...]:
        return tuple(v for v in self.variables if v != COST)

    def is_deterministic(self) -> bool:
        return all(t.update.is_deterministic() for t in self.transitions)

    def validate(self) -> "TransitionSystem":
        """Raise :class:`SemanticError` naming the first violated invariant."""
        if COST not in self.variables:
            raise SemanticError("missing cost variable: 'cost' must be declared in vars")
        if len(set(self.variables)) != len(self.variables):
            raise SemanticError("duplicate variable names")
        locs = set(self.locations)
        for l in (self.initial, self.terminal):
            if l not in locs:
                raise SemanticError(f"location {l!r} is not declared")
        known = set(self.variables)
        tids = set()
        for t in self.transitions:
            if t.tid in tids:
                raise SemanticError(f"duplicate transition id {t.tid}")
            tids.add(t.tid)
            if t.source not in locs or t.target not in locs:
                raise SemanticError(f"transition {t.tid} references an unknown location")
            used = t.guard.variables()
            for v, e in t.update.entries:
                if v not in known:
                    raise SemanticError(f"transition {t.tid} updates undeclared variable {v!r}")
                if isinstance(e, Polynomial):
                    used |= e.variables()
                else:
                    for b in (e.lo, e.hi):
                        if b is not None:
                            if b.degree() > 1:
                                raise SemanticError(f"non-affine nondet bound on {t.tid}")
                            used |= b.variables()
            unknown = used - known
            if unknown:
                raise SemanticError(f"transition {t.tid} uses undeclared variables {sorted(unknown)}")
        unknown = self.theta0.variables() - known
        if unknown:
            raise SemanticError(f"theta0 uses undeclared variables {sorted(unknown)}")
        term_out = self.outgoing(self.terminal)
        if len(term_out) != 1 or not term_out[0].is_terminal_loop(self.terminal):
            raise SemanticError(
                "terminal location must have exactly one outgoing transition: "
                "a self-loop with guard true and identity update")
        for l in self.locations:
            if not self.outgoing(l):
                raise SemanticError(f"location {l!r} has no outgoing transition")
        c = Polynomial.var(COST)
        keys = {_affine_key(normalize_affine(a)) for a in self.theta0.conjuncts}
        if _affine_key(c) not in keys or _affine_key(-c) not in keys:
            raise SemanticError("theta0 must entail cost = 0 (conjuncts cost >= 0 and -cost >= 0)")
        return self


def with_cost_init(theta0: Assertion) -> Assertion:
    c = Polynomial.var(COST)
    return Assertion.of(theta0.conjuncts + (c, -c))


def make_system(variables: Sequence[str], transitions: Sequence[Tuple[str, str, Assertion, Update]],
                initial: str, terminal: str, theta0: Assertion, name: str = "") -> TransitionSystem:
    """Assemble a system, numbering transitions and adding the terminal self-loop."""
    ts_list = []
    for i, (src, dst, g, up) in enumerate(transitions):
        ts_list.append(Transition(f"t{i}", src, dst, g, up))
    if not any(t.is_terminal_loop(terminal) for t in ts_list):
        ts_list.append(Transition(f"t{len(ts_list)}", terminal, terminal))
    variables = tuple(variables)
    if COST not in variables:
        variables = variables + (COST,)
    return TransitionSystem(variables, tuple(ts_list), initial, terminal, with_cost_init(theta0), name=name)


def _entry_vars(e: UpdateEntry) -> set:
    if isinstance(e, Nondet):
        return set().union(*(b.variables() for b in (e.lo, e.hi) if b is not None))
    return e.variables()


def cost_relevant(ts: TransitionSystem, keep: Iterable[str] = ()) -> set:
    """Variables that can influence control flow or the value of cost.

    Starts from cost, ``keep`` and every guard variable, then closes under
    "an update of a relevant variable reads v" and "a theta0 conjunct
    relates v to a relevant variable".
    """
    rel = {COST} | set(keep)
    for t in ts.transitions:
        rel |= t.guard.variables()
    while True:
        before = len(rel)
        for t in ts.transitions:
            for v, e in t.update.entries:
                if v in rel:
                    rel |= _entry_vars(e)
        for a in ts.theta0.conjuncts:
            if a.variables() & rel:
                rel |= a.variables()
        if len(rel) == before:
            return rel & set(ts.variables)


def slice_system(ts: TransitionSystem, keep: Iterable[str]) -> TransitionSystem:
    """Drop the variables outside ``keep`` (which must be closed as in
    :func:`cost_relevant`); costs of runs are unchanged."""
    keep = set(keep)
    variables = tuple(v for v in ts.variables if v in keep)
    trans = tuple(Transition(t.tid, t.source, t.target, t.guard,
                             Update(tuple((v, e) for v, e in t.update.entries if v in keep)))
                  for t in ts.transitions)
    theta = Assertion.of(a for a in ts.theta0.conjuncts if a.variables() <= keep)
    return TransitionSystem(variables, trans, ts.initial, ts.terminal, theta, ts.locations, ts.name).validate()


# -- .ts text format -----------------------------------------------------------

def _conj_list(p: Parser, stop: Sequence[str]) -> List[Polynomial]:
    atoms: List[Polynomial] = []
    if p.at(*stop):
        return atoms
    while True:
        cond = p.cond()
        dnf = to_dnf(cond)
        if len(dnf) != 1:
            p.error("guards and assertions must be conjunctions (no disjunction)")
        for a in dnf[0]:
            if a.degree() > 1:
                p.error(f"non-affine atom {a} >= 0 (guards must be affine)")
        atoms.extend(dnf[0])
        if not p.accept(","):
            return atoms


def _update_list(p: Parser) -> Dict[str, UpdateEntry]:
    ups: Dict[str, UpdateEntry] = {}
    while True:
        v = p.ident()
        p.expect(":=")
        if p.accept("nondet"):
            lo = hi = None
            if p.accept("in"):
                p.expect("[")
                lo = _bound(p)
                p.expect(",")
                hi = _bound(p)
                p.expect("]")
            entry: UpdateEntry = Nondet(lo, hi)
        else:
            entry = p.expr()
        if v in ups:
            p.error(f"variable {v!r} updated twice")
        ups[v] = entry
        if not p.accept(","):
            return ups


def _bound(p: Parser) -> Optional[Polynomial]:
    if p.at("-") and p.peek().text == "inf":
        p.i += 2
        return None
    if p.accept("inf"):
        return None
    return p.expr()


def parse_transition_system(text: str, name: str = "") -> TransitionSystem:
    """Parse the ``.ts`` format; raises ParseError or SemanticError."""
    p = Parser(text, comments=("#",))
    variables: List[str] = []
    initial = terminal = None
    theta: List[Polynomial] = []
    trans: List[Tuple[str, str, Assertion, Update]] = []
    declared_locs: List[str] = []
    while not p.at_eof():
        kw = p.tok
        if p.accept("vars"):
            while not p.at(";"):
                variables.append(p.ident())
        elif p.accept("locations"):
            while not p.at(";"):
                declared_locs.append(p.ident())
        elif p.accept("init"):
            initial = p.ident()
        elif p.accept("terminal"):
            terminal = p.ident()
        elif p.accept("theta0"):
            theta.extend(_conj_list(p, (";",)))
        elif p.accept("trans"):
            src = p.ident()
            p.expect("->")
            dst = p.ident()
            guard: List[Polynomial] = []
            ups: Dict[str, UpdateEntry] = {}
            if p.accept("guard"):
                guard = _conj_list(p, ("update", ";"))
            if p.accept("update"):
                ups = _update_list(p)
            trans.append((src, dst, Assertion.of(guard), Update.of(ups)))
        else:
            raise ParseError(f"unknown statement {kw.text!r}", kw.line, kw.col)
        p.expect(";")
    if initial is None or terminal is None:
        raise SemanticError("both 'init' and 'terminal' must be given")
    if COST not in variables:
        raise SemanticError("missing cost variable: 'cost' must be declared in vars")
    ts = make_system(variables, trans, initial, terminal, Assertion.of(theta), name=name)
    if declared_locs:
        extra = [l for l in ts.locations if l not in declared_locs]
        ts = TransitionSystem(ts.variables, ts.transitions, ts.initial, ts.terminal, ts.theta0,
                              tuple(declared_locs) + tuple(extra), name)
    return ts.validate()


def format_transition_system(ts: TransitionSystem) -> str:
    """Inverse of :func:`parse_transition_system` up to formatting."""
    order = ts.var_order
    lines = [
        f"vars {' '.join(ts.variables)};",
        f"locations {' '.join(ts.locations)};",
        f"init {ts.initial};",
        f"terminal {ts.terminal};",
        f"theta0 {', '.join(format_atom(c, order) for c in ts.theta0.conjuncts) or 'true'};",
    ]
    for t in ts.transitions:
        if t.is_terminal_loop(ts.terminal):
            continue
        s = f"trans {t.source} -> {t.target}"
        if t.guard.conjuncts:
            s += " guard " + t.guard.to_str(order)
        if t.update.entries:
            parts = []
            for v, e in t.update.entries:
                parts.append(f"{v} := {e.to_str(order)}")
            s += " update " + ", ".join(parts)
        lines.append(s + ";")
    return "\n".join(lines) + "\n"


def structure(ts: TransitionSystem):
    """Hashable structural summary used for round-trip comparisons."""
    return (
        ts.variables, ts.initial, ts.terminal, frozenset(ts.locations),
        frozenset(_affine_key(c) for c in ts.theta0.conjuncts),
        tuple((t.source, t.target, frozenset(_affine_key(c) for c in t.guard.conjuncts), t.update)
              for t in ts.transitions),
    )
