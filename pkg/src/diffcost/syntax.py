"""Tokenizer and recursive-descent parsers for arithmetic and conditions.

Shared by the ``.ts`` reader, the ``.imp`` front end, invariant files and
command-line bound expressions.  Arithmetic parses straight to
:class:`~diffcost.poly.Polynomial`; conditions parse to a small tree that
:func:`to_dnf` turns into disjunctions of affine ``expr >= 0`` atoms using
integer semantics (``a < b`` becomes ``b - a - 1 >= 0``).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

from .poly import Polynomial


class ParseError(Exception):
    """Syntax error with a 1-based line/column position."""

    def __init__(self, msg: str, line: int = 0, col: int = 0):
        self.msg = msg
        self.line = line
        self.col = col
        where = f"{line}:{col}: " if line else ""
        super().__init__(f"{where}{msg}")


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>\#[^\n]*|//[^\n]*|/\*.*?\*/)
  | (?P<num>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_@.']*)
  | (?P<op>:=|->|<=|>=|==|!=|&&|\|\||\+\+|--|\+=|-=|\*=|[-+*/^(){}\[\];,:<>=!])
    """,
    re.VERBOSE | re.DOTALL,
)


@dataclass(frozen=True)
class Token:
    kind: str  # num | ident | op | eof
    text: str
    line: int
    col: int


def tokenize(text: str, comments: Sequence[str] = ("#", "//", "/*")) -> List[Token]:
    out: List[Token] = []
    pos = 0
    line, line_start = 1, 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        tok = m.group()
        if kind == "comment" and not any(tok.startswith(c) for c in comments):
            raise ParseError(f"unexpected {tok[:2]!r}", line, pos - line_start + 1)
        if kind not in ("ws", "comment"):
            out.append(Token(kind, tok, line, pos - line_start + 1))
        nl = tok.count("\n")
        if nl:
            line += nl
            line_start = pos + tok.rindex("\n") + 1
        pos = m.end()
    out.append(Token("eof", "", line, pos - line_start + 1))
    return out


# -- condition trees -----------------------------------------------------------

@dataclass(frozen=True)
class Cmp:
    op: str
    lhs: Polynomial
    rhs: Polynomial


@dataclass(frozen=True)
class Not:
    arg: object


@dataclass(frozen=True)
class And:
    args: Tuple[object, ...]


@dataclass(frozen=True)
class Or:
    args: Tuple[object, ...]


@dataclass(frozen=True)
class Const:
    value: bool


_NEGATE = {"<": ">=", "<=": ">", ">": "<=", ">=": "<", "==": "!=", "!=": "=="}


def _atoms(op: str, lhs: Polynomial, rhs: Polynomial) -> List[List[Polynomial]]:
    """DNF (list of conjunct lists) for one comparison under integer semantics."""
    if op == ">=":
        return [[lhs - rhs]]
    if op == "<=":
        return [[rhs - lhs]]
    if op == ">":
        return [[lhs - rhs - 1]]
    if op == "<":
        return [[rhs - lhs - 1]]
    if op == "==":
        return [[lhs - rhs, rhs - lhs]]
    if op == "!=":
        return [[lhs - rhs - 1], [rhs - lhs - 1]]
    raise ValueError(op)


def to_dnf(cond, negate: bool = False) -> List[List[Polynomial]]:
    """Disjunctive normal form of a condition as lists of ``p >= 0`` atoms."""
    if isinstance(cond, Const):
        return [[]] if cond.value != negate else []
    if isinstance(cond, Cmp):
        op = _NEGATE[cond.op] if negate else cond.op
        return _atoms(op, cond.lhs, cond.rhs)
    if isinstance(cond, Not):
        return to_dnf(cond.arg, not negate)
    if isinstance(cond, (And, Or)):
        conj = isinstance(cond, And) != negate
        parts = [to_dnf(a, negate) for a in cond.args]
        if not conj:
            return [d for p in parts for d in p]
        result: List[List[Polynomial]] = [[]]
        for p in parts:
            result = [r + d for r in result for d in p]
        return result
    raise TypeError(f"not a condition: {cond!r}")


def cond_variables(cond) -> set:
    if isinstance(cond, Cmp):
        return cond.lhs.variables() | cond.rhs.variables()
    if isinstance(cond, Not):
        return cond_variables(cond.arg)
    if isinstance(cond, (And, Or)):
        return set().union(*(cond_variables(a) for a in cond.args))
    return set()


# -- parser --------------------------------------------------------------------

class Parser:
    """Cursor over a token list with expression and condition productions."""

    def __init__(self, text_or_tokens, comments: Sequence[str] = ("#", "//", "/*")):
        if isinstance(text_or_tokens, str):
            self.toks = tokenize(text_or_tokens, comments)
        else:
            self.toks = list(text_or_tokens)
        self.i = 0

    # cursor helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, *texts: str) -> bool:
        t = self.tok
        return t.kind in ("op", "ident") and t.text in texts

    def accept(self, *texts: str) -> Optional[Token]:
        if self.at(*texts):
            t = self.tok
            self.i += 1
            return t
        return None

    def expect(self, text: str) -> Token:
        t = self.accept(text)
        if t is None:
            self.error(f"expected {text!r}, found {self.tok.text or 'end of input'!r}")
        return t

    def ident(self) -> str:
        t = self.tok
        if t.kind != "ident":
            self.error(f"expected identifier, found {t.text or 'end of input'!r}")
        self.i += 1
        return t.text

    def error(self, msg: str):
        raise ParseError(msg, self.tok.line, self.tok.col)

    def at_eof(self) -> bool:
        return self.tok.kind == "eof"

    # arithmetic
    def expr(self) -> Polynomial:
        p = self.term()
        while True:
            if self.accept("+"):
                p = p + self.term()
            elif self.accept("-"):
                p = p - self.term()
            else:
                return p

    def term(self) -> Polynomial:
        p = self.unary()
        while True:
            if self.accept("*"):
                p = p * self.unary()
            elif self.at("/"):
                t = self.tok
                self.i += 1
                d = self.unary()
                if not d.is_constant() or d.is_zero():
                    raise ParseError("division only by non-zero constants", t.line, t.col)
                p = p * (1 / d.constant())
            else:
                return p

    def unary(self) -> Polynomial:
        if self.accept("-"):
            return -self.unary()
        if self.accept("+"):
            return self.unary()
        return self.power()

    def power(self) -> Polynomial:
        base = self.atom()
        if self.accept("^"):
            t = self.tok
            if t.kind != "num":
                self.error("exponent must be a non-negative integer literal")
            self.i += 1
            return base ** int(t.text)
        return base

    def atom(self) -> Polynomial:
        t = self.tok
        if t.kind == "num":
            self.i += 1
            return Polynomial.const(Fraction(int(t.text)))
        if t.kind == "ident" and t.text not in ("true", "false"):
            self.i += 1
            return Polynomial.var(t.text)
        if self.accept("("):
            p = self.expr()
            self.expect(")")
            return p
        self.error(f"expected expression, found {t.text or 'end of input'!r}")

    # conditions
    def cond(self):
        args = [self.conj()]
        while self.accept("||"):
            args.append(self.conj())
        return args[0] if len(args) == 1 else Or(tuple(args))

    def conj(self):
        args = [self.neg()]
        while self.accept("&&"):
            args.append(self.neg())
        return args[0] if len(args) == 1 else And(tuple(args))

    def neg(self):
        if self.accept("!"):
            return Not(self.neg())
        if self.accept("true"):
            return Const(True)
        if self.accept("false"):
            return Const(False)
        if self.at("("):
            save = self.i
            try:
                return self.comparison()
            except ParseError:
                self.i = save
            self.expect("(")
            c = self.cond()
            self.expect(")")
            return c
        return self.comparison()

    def comparison(self) -> Cmp:
        lhs = self.expr()
        t = self.tok
        if not self.at("<", "<=", ">", ">=", "==", "!="):
            self.error(f"expected comparison operator, found {t.text or 'end of input'!r}")
        self.i += 1
        rhs = self.expr()
        return Cmp(t.text, lhs, rhs)


def parse_poly(text: str) -> Polynomial:
    """Parse a standalone polynomial expression such as ``lenA*lenB - 1``."""
    p = Parser(text)
    out = p.expr()
    if not p.at_eof():
        p.error(f"unexpected {p.tok.text!r}")
    return out


def parse_cond(text: str):
    p = Parser(text)
    out = p.cond()
    if not p.at_eof():
        p.error(f"unexpected {p.tok.text!r}")
    return out
