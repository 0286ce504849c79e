"""Front end for a small C-like language, lowered to transition systems.

Supported: one function with ``int`` parameters, ``assume(...)`` (becomes
theta0), ``int`` declarations, assignments with polynomial right-hand sides
(plus ``+=``, ``-=``, ``*=``, ``++``, ``--``), ``x = nondet();`` and
``x = nondet(lo, hi);``, ``while``, ``for``, ``if``/``else``, ``break`` and
``return``.  Conditions may use ``&&``, ``||``, ``!`` and ``== !=``; they are
split into one transition per DNF disjunct.

Lowering keeps a frontier of pending edges ``(source, guard, update)``.
Straight-line assignments are folded into the pending updates.  A location
is created for every loop head, before any branch whose pending edges carry
updates, and before a cost update that would otherwise share a transition
with a guard.  On the ``join`` example this reproduces the five-location
system with seven transitions (terminal loop included).

A local declared without initializer and never assigned is a source of
nondeterminism.  It gets a fresh value at its declaration and again at every
loop head, both on entry and on each back edge, so its value is stable
within one iteration.  Every other local starts at 0, pinned in theta0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .poly import Polynomial
from .syntax import Parser, ParseError, to_dnf
from .ts import COST, Assertion, Nondet, TransitionSystem, Update, make_system

Pending = Dict[str, Union[Polynomial, Nondet]]


class UnsupportedConstruct(ParseError):
    pass


# -- AST ---------------------------------------------------------------------

@dataclass
class Assign:
    var: str
    expr: Union[Polynomial, Nondet]


@dataclass
class Decl:
    var: str
    init: Optional[Union[Polynomial, Nondet]]


@dataclass
class While:
    cond: object
    body: list


@dataclass
class If:
    cond: object
    then: list
    other: list


@dataclass
class Break:
    pass


@dataclass
class Return:
    pass


@dataclass
class Program:
    name: str
    params: List[str]
    assume: object
    body: list


_UNSUPPORTED = {"bool": "booleans", "float": "floating point", "double": "floating point",
                "struct": "structs", "goto": "goto", "continue": "continue", "do": "do-while",
                "switch": "switch", "char": "chars", "unsigned": "unsigned types"}


class _ImpParser(Parser):
    def program(self) -> Program:
        if not self.accept("void", "int"):
            self.error("expected function definition (void|int name(...))")
        name = self.ident()
        self.expect("(")
        params: List[str] = []
        if not self.at(")"):
            while True:
                self._type()
                params.append(self.ident())
                if self.at("["):
                    self._unsupported("arrays")
                if not self.accept(","):
                    break
        self.expect(")")
        self.expect("{")
        assume = None
        body: list = []
        while not self.accept("}"):
            if self.at("assume"):
                if any(not isinstance(s, Decl) for s in body):
                    self.error("assume(...) must precede all non-declaration statements")
                self.i += 1
                self.expect("(")
                c = self.cond()
                self.expect(")")
                self.expect(";")
                assume = c if assume is None else _and(assume, c)
                continue
            body.extend(self.stmt())
        if not self.at_eof():
            self.error("trailing input after function body")
        return Program(name, params, assume, body)

    def _type(self):
        if self.tok.text in _UNSUPPORTED:
            self._unsupported(_UNSUPPORTED[self.tok.text])
        self.expect("int")
        if self.at("*", "&"):
            self._unsupported("pointers/references")

    def _unsupported(self, what: str):
        raise UnsupportedConstruct(f"unsupported construct: {what}", self.tok.line, self.tok.col)

    def block(self) -> list:
        if self.accept("{"):
            out: list = []
            while not self.accept("}"):
                out.extend(self.stmt())
            return out
        return self.stmt()

    def stmt(self) -> list:
        t = self.tok
        if t.text in _UNSUPPORTED:
            self._unsupported(_UNSUPPORTED[t.text])
        if self.accept(";"):
            return []
        if self.accept("int"):
            if self.at("*", "&"):
                self._unsupported("pointers/references")
            decls = []
            while True:
                v = self.ident()
                if self.at("["):
                    self._unsupported("arrays")
                init = None
                if self.accept("="):
                    init = self._rhs()
                decls.append(Decl(v, init))
                if not self.accept(","):
                    break
            self.expect(";")
            return decls
        if self.accept("while"):
            self.expect("(")
            c = self.cond()
            self.expect(")")
            return [While(c, self.block())]
        if self.accept("for"):
            self.expect("(")
            init = [] if self.at(";") else self.simple()
            self.expect(";")
            c = self.cond() if not self.at(";") else None
            self.expect(";")
            step = [] if self.at(")") else self.simple()
            self.expect(")")
            body = self.block()
            from .syntax import Const
            return init + [While(c if c is not None else Const(True), body + step)]
        if self.accept("if"):
            self.expect("(")
            c = self.cond()
            self.expect(")")
            then = self.block()
            other = self.block() if self.accept("else") else []
            return [If(c, then, other)]
        if self.accept("break"):
            self.expect(";")
            return [Break()]
        if self.accept("return"):
            if not self.at(";"):
                self.expr()
            self.expect(";")
            return [Return()]
        if self.at("assume"):
            self.error("assume(...) is only allowed at the start of the function")
        out = self.simple()
        self.expect(";")
        return out

    def simple(self) -> list:
        """Assignment-like statement(s), comma separated (as in ``for`` headers)."""
        out = []
        while True:
            if self.at("int"):
                self.i += 1
                v = self.ident()
                self.expect("=")
                out.append(Decl(v, None))
                out.append(Assign(v, self._rhs()))
            elif self.accept("++"):
                v = self.ident()
                out.append(Assign(v, Polynomial.var(v) + 1))
            elif self.accept("--"):
                v = self.ident()
                out.append(Assign(v, Polynomial.var(v) - 1))
            else:
                v = self.ident()
                if self.at("["):
                    self._unsupported("arrays")
                if self.at("("):
                    self._unsupported("procedure calls (inline them)")
                x = Polynomial.var(v)
                if self.accept("++"):
                    out.append(Assign(v, x + 1))
                elif self.accept("--"):
                    out.append(Assign(v, x - 1))
                elif self.accept("+="):
                    out.append(Assign(v, x + self.expr()))
                elif self.accept("-="):
                    out.append(Assign(v, x - self.expr()))
                elif self.accept("*="):
                    out.append(Assign(v, x * self.expr()))
                else:
                    self.expect("=")
                    out.append(Assign(v, self._rhs()))
            if not self.accept(","):
                return out

    def _rhs(self):
        if self.accept("nondet"):
            self.expect("(")
            lo = hi = None
            if not self.at(")"):
                lo = self.expr()
                self.expect(",")
                hi = self.expr()
            self.expect(")")
            return Nondet(lo, hi)
        if self.at("*", "&"):
            self._unsupported("pointers/references")
        return self.expr()


def _and(a, b):
    from .syntax import And
    return And((a, b))


def parse_ast(text: str) -> Program:
    return _ImpParser(text, comments=("//", "/*", "#")).program()


# -- lowering ----------------------------------------------------------------

def _assigned(stmts) -> set:
    out = set()
    for s in stmts:
        if isinstance(s, Assign):
            out.add(s.var)
        elif isinstance(s, While):
            out |= _assigned(s.body)
        elif isinstance(s, If):
            out |= _assigned(s.then) | _assigned(s.other)
    return out


def _decls(stmts) -> List[Decl]:
    out = []
    for s in stmts:
        if isinstance(s, Decl):
            out.append(s)
        elif isinstance(s, While):
            out += _decls(s.body)
        elif isinstance(s, If):
            out += _decls(s.then) + _decls(s.other)
    return out


class _Lowerer:
    def __init__(self, variables: Sequence[str], arbitrary: set):
        self.variables = list(variables)
        self.arbitrary = arbitrary
        self.edges: List[Tuple[str, str, List[Polynomial], Pending]] = []
        self.n_locs = 1  # l0 exists
        self.loops: List[List] = []
        self.exits: List = []

    def new_loc(self) -> str:
        name = f"l{self.n_locs}"
        self.n_locs += 1
        return name

    def has_out(self, loc: str) -> bool:
        return any(e[0] == loc for e in self.edges)

    def emit(self, frontier, target: str):
        for src, g, up in frontier:
            self.edges.append((src, target, list(g), dict(up)))

    def flush(self, frontier):
        if len(frontier) == 1:
            src, g, up = frontier[0]
            if not g and not up:
                return frontier
        loc = self.new_loc()
        self.emit(frontier, loc)
        return [(loc, [], {})]

    @staticmethod
    def compose(up: Pending, var: str, rhs) -> Optional[Pending]:
        """Pending update followed by ``var := rhs``; None if it needs a flush."""
        reads = rhs.variables() if isinstance(rhs, Polynomial) else set()
        if isinstance(rhs, Nondet):
            for b in (rhs.lo, rhs.hi):
                if b is not None:
                    reads |= b.variables()
        if any(isinstance(up.get(v), Nondet) for v in reads):
            return None
        subst = {v: e for v, e in up.items() if isinstance(e, Polynomial)}
        if isinstance(rhs, Polynomial):
            new = rhs.substitute(subst) if subst else rhs
        else:
            new = Nondet(*(None if b is None else (b.substitute(subst) if subst else b)
                           for b in (rhs.lo, rhs.hi)))
        out = dict(up)
        if isinstance(new, Polynomial) and new == Polynomial.var(var):
            out.pop(var, None)
        else:
            out[var] = new
        return out

    def assign(self, frontier, var: str, rhs):
        if var == COST and any(g for _, g, _ in frontier):
            frontier = self.flush(frontier)
        if any(self.compose(up, var, rhs) is None for _, _, up in frontier):
            frontier = self.flush(frontier)
        return [(s, g, self.compose(up, var, rhs)) for s, g, up in frontier]

    def havoc(self, frontier):
        """Fresh arbitrary values for never-assigned locals (one per loop iteration)."""
        for v in sorted(self.arbitrary):
            frontier = self.assign(frontier, v, Nondet())
        return frontier

    def branch(self, frontier, dnf):
        out = []
        for s, g, _ in frontier:
            for d in dnf:
                for a in d:
                    if a.degree() > 1:
                        raise UnsupportedConstruct(f"non-affine condition atom {a} >= 0")
                out.append((s, g + list(d), {}))
        return out

    def block(self, frontier, stmts):
        for s in stmts:
            frontier = self.stmt(frontier, s)
        return frontier

    def stmt(self, frontier, s):
        if isinstance(s, Decl):
            if (isinstance(s.init, Polynomial) and s.init.is_zero() and not self.edges
                    and frontier == [("l0", [], {})]):
                return frontier  # theta0 already pins every local to 0 at entry
            if s.init is not None:
                return self.assign(frontier, s.var, s.init)
            if s.var in self.arbitrary:
                return self.assign(frontier, s.var, Nondet())
            return frontier
        if isinstance(s, Assign):
            if s.var not in self.variables:
                raise ParseError(f"assignment to undeclared variable {s.var!r}")
            return self.assign(frontier, s.var, s.expr)
        if isinstance(s, If):
            if any(up for _, _, up in frontier):
                frontier = self.flush(frontier)
            then = self.block(self.branch(frontier, to_dnf(s.cond)), s.then)
            other = self.block(self.branch(frontier, to_dnf(s.cond, negate=True)), s.other)
            return then + other
        if isinstance(s, While):
            frontier = self.havoc(frontier)
            if (len(frontier) == 1 and not frontier[0][1] and not frontier[0][2]
                    and not self.has_out(frontier[0][0])):
                head = frontier[0][0]
            else:
                head = self.new_loc()
                self.emit(frontier, head)
            self.loops.append([])
            body = self.block(self.branch([(head, [], {})], to_dnf(s.cond)), s.body)
            body = self.havoc(body)
            self.emit(body, head)
            breaks = self.loops.pop()
            return self.branch([(head, [], {})], to_dnf(s.cond, negate=True)) + breaks
        if isinstance(s, Break):
            if not self.loops:
                raise ParseError("break outside of a loop")
            self.loops[-1].extend(frontier)
            return []
        if isinstance(s, Return):
            self.exits.extend(frontier)
            return []
        raise TypeError(s)


def lower(prog: Program) -> TransitionSystem:
    params = [p for p in prog.params if p != COST]
    decls = _decls(prog.body)
    assigned = _assigned(prog.body)
    locals_ = []
    for d in decls:
        if d.var in params or d.var == COST:
            raise ParseError(f"variable {d.var!r} redeclared")
        if d.var not in locals_:
            locals_.append(d.var)
    arbitrary = {d.var for d in decls if d.init is None and d.var not in assigned}
    variables = params + locals_ + [COST]
    lw = _Lowerer(variables, arbitrary)
    frontier = lw.block([("l0", [], {})], prog.body)
    lw.emit(frontier + lw.exits, "lout")

    theta: List[Polynomial] = []
    if prog.assume is not None:
        dnf = to_dnf(prog.assume)
        if len(dnf) != 1:
            raise ParseError("assume(...) must be a conjunction")
        theta.extend(dnf[0])
    for v in locals_:
        x = Polynomial.var(v)
        theta.extend([x, -x])
    for a in theta:
        if a.degree() > 1:
            raise UnsupportedConstruct(f"non-affine assumption {a} >= 0")
    unknown = set().union(*(a.variables() for a in theta)) - set(variables) if theta else set()
    if unknown:
        raise ParseError(f"assume uses unknown variables {sorted(unknown)}")

    trans = [(src, dst, Assertion.of(g), Update.of(up)) for src, dst, g, up in lw.edges]
    ts = make_system(variables, trans, "l0", "lout", Assertion.of(theta), name=prog.name)
    return ts.validate()


def parse_program(text: str) -> TransitionSystem:
    """Parse ``.imp`` source and lower it to a validated transition system."""
    return lower(parse_ast(text))


def load_system(path) -> TransitionSystem:
    """Read a ``.ts`` or ``.imp`` file, chosen by extension."""
    from pathlib import Path

    from .ts import parse_transition_system

    path = Path(path)
    text = path.read_text()
    if path.suffix == ".ts":
        return parse_transition_system(text, name=path.stem)
    ts = parse_program(text)
    return ts
