"""Exact multivariate polynomials over named integer variables.

A monomial is a sorted tuple of ``(variable, exponent)`` pairs with positive
exponents; the empty tuple is the constant monomial ``1``.  Coefficients are
:class:`fractions.Fraction` throughout, so nothing in the algebra ever rounds.
"""

from __future__ import annotations

import itertools
from fractions import Fraction
from typing import Dict, Iterable, Iterator, Mapping, Sequence, Tuple, Union

Monomial = Tuple[Tuple[str, int], ...]
Number = Union[int, Fraction]

ONE: Monomial = ()


def mono(*pairs: Tuple[str, int]) -> Monomial:
    """Build a canonical monomial from ``(var, exp)`` pairs (exponents add up)."""
    acc: Dict[str, int] = {}
    for v, e in pairs:
        if e < 0:
            raise ValueError(f"negative exponent for {v}")
        if e:
            acc[v] = acc.get(v, 0) + e
    return tuple(sorted(acc.items()))


def mono_var(v: str) -> Monomial:
    return ((v, 1),)


def mono_mul(a: Monomial, b: Monomial) -> Monomial:
    if not a:
        return b
    if not b:
        return a
    acc = dict(a)
    for v, e in b:
        acc[v] = acc.get(v, 0) + e
    return tuple(sorted(acc.items()))


def mono_degree(m: Monomial) -> int:
    return sum(e for _, e in m)


def mono_vars(m: Monomial) -> Iterator[str]:
    return (v for v, _ in m)


def mono_str(m: Monomial) -> str:
    if not m:
        return "1"
    return "*".join(v if e == 1 else f"{v}^{e}" for v, e in m)


def mono_sort_key(m: Monomial, order: Mapping[str, int]):
    """Graded-lexicographic key: degree first, then exponents in variable order.

    Sorting descending gives ``x^2, x*y, y^2, x, y, 1`` for the order ``x < y``.
    Variables missing from ``order`` rank after all known ones, by name.
    """
    vec = [0] * len(order)
    extra = []
    for v, e in m:
        i = order.get(v)
        if i is None:
            extra.append((v, e))
        else:
            vec[i] = e
    return (mono_degree(m), tuple(vec), tuple((v, e) for v, e in extra))


def monomials(variables: Sequence[str], d: int) -> list[Monomial]:
    """All monomials of total degree at most ``d`` over ``variables``.

    Returned in graded-lexicographic order; there are ``C(len(variables)+d, d)``.
    """
    if d < 0:
        raise ValueError("degree must be non-negative")
    out: list[Monomial] = [ONE]
    for deg in range(1, d + 1):
        for combo in itertools.combinations_with_replacement(variables, deg):
            out.append(mono(*((v, 1) for v in combo)))
    return out


def _frac(c: Number) -> Fraction:
    return c if isinstance(c, Fraction) else Fraction(c)


class Polynomial:
    """Immutable sparse polynomial ``{monomial: coefficient}``.

    Zero coefficients are never stored, so the zero polynomial has no terms and
    structural equality is semantic equality.
    """

    __slots__ = ("terms", "_hash")

    def __init__(self, terms: Mapping[Monomial, Number] | Iterable[Tuple[Monomial, Number]] = ()):
        items = terms.items() if isinstance(terms, Mapping) else terms
        acc: Dict[Monomial, Fraction] = {}
        for m, c in items:
            if c:
                acc[m] = acc.get(m, 0) + _frac(c)
        self.terms: Dict[Monomial, Fraction] = {m: c for m, c in acc.items() if c}
        self._hash = None

    @classmethod
    def _raw(cls, terms: Dict[Monomial, Fraction]) -> "Polynomial":
        p = cls.__new__(cls)
        p.terms = terms
        p._hash = None
        return p

    @classmethod
    def const(cls, c: Number) -> "Polynomial":
        return cls._raw({ONE: _frac(c)} if c else {})

    @classmethod
    def var(cls, v: str) -> "Polynomial":
        return cls._raw({((v, 1),): Fraction(1)})

    @classmethod
    def lift(cls, x: "Polynomial | Number") -> "Polynomial":
        return x if isinstance(x, Polynomial) else cls.const(x)

    # -- queries -----------------------------------------------------------
    def is_zero(self) -> bool:
        return not self.terms

    def degree(self) -> int:
        """Total degree; the zero polynomial has degree -1 by convention."""
        if not self.terms:
            return -1
        return max(mono_degree(m) for m in self.terms)

    def variables(self) -> set[str]:
        return {v for m in self.terms for v, _ in m}

    def coeff(self, m: Monomial) -> Fraction:
        return self.terms.get(m, Fraction(0))

    def constant(self) -> Fraction:
        return self.terms.get(ONE, Fraction(0))

    def is_constant(self) -> bool:
        return all(not m for m in self.terms)

    def eval(self, x: Mapping[str, Number]) -> Fraction:
        total = Fraction(0)
        for m, c in self.terms.items():
            val = c
            for v, e in m:
                try:
                    val *= x[v] ** e
                except KeyError:
                    raise KeyError(f"unbound variable {v!r}") from None
            total += val
        return total

    # -- arithmetic --------------------------------------------------------
    def __add__(self, other):
        other = Polynomial.lift(other)
        acc = dict(self.terms)
        for m, c in other.terms.items():
            s = acc.get(m, 0) + c
            if s:
                acc[m] = s
            else:
                acc.pop(m, None)
        return Polynomial._raw(acc)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial._raw({m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-Polynomial.lift(other))

    def __rsub__(self, other):
        return Polynomial.lift(other) - self

    def __mul__(self, other):
        if not isinstance(other, Polynomial):
            c = _frac(other)
            if not c:
                return Polynomial._raw({})
            return Polynomial._raw({m: k * c for m, k in self.terms.items()})
        acc: Dict[Monomial, Fraction] = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = mono_mul(m1, m2)
                acc[m] = acc.get(m, 0) + c1 * c2
        return Polynomial._raw({m: c for m, c in acc.items() if c})

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if k < 0:
            raise ValueError("negative power")
        result = Polynomial.const(1)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def substitute(self, mapping: Mapping[str, "Polynomial"]) -> "Polynomial":
        """Replace variables by polynomials; unmapped variables stay put."""
        acc = Polynomial._raw({})
        powers: Dict[Tuple[str, int], Polynomial] = {}
        for m, c in self.terms.items():
            term = Polynomial.const(c)
            for v, e in m:
                if v in mapping:
                    key = (v, e)
                    if key not in powers:
                        powers[key] = mapping[v] ** e
                    term = term * powers[key]
                else:
                    term = term * Polynomial._raw({((v, e),): Fraction(1)})
            acc = acc + term
        return acc

    def rename(self, mapping: Mapping[str, str]) -> "Polynomial":
        return self.substitute({k: Polynomial.var(v) for k, v in mapping.items()})

    # -- identity ----------------------------------------------------------
    def __eq__(self, other):
        if isinstance(other, Polynomial):
            return self.terms == other.terms
        if isinstance(other, (int, Fraction)):
            return self.terms == ({ONE: Fraction(other)} if other else {})
        return NotImplemented

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self.terms.items()))
        return self._hash

    def sorted_terms(self, order: Mapping[str, int] | None = None):
        if order is None:
            order = {v: i for i, v in enumerate(sorted(self.variables()))}
        return sorted(self.terms.items(), key=lambda mc: mono_sort_key(mc[0], order), reverse=True)

    def to_str(self, order: Mapping[str, int] | None = None) -> str:
        if not self.terms:
            return "0"
        parts = []
        for m, c in self.sorted_terms(order):
            mag = abs(c)
            sign = "-" if c < 0 else "+"
            if not m:
                body = str(mag)
            elif mag == 1:
                body = mono_str(m)
            else:
                body = f"{mag}*{mono_str(m)}"
            parts.append((sign, body))
        first_sign, first = parts[0]
        out = ("-" if first_sign == "-" else "") + first
        for sign, body in parts[1:]:
            out += f" {sign} {body}"
        return out

    def __str__(self):
        return self.to_str()

    def __repr__(self):
        return f"Polynomial({self.to_str()!r})"


def affine(p: Polynomial) -> Polynomial:
    """Check that ``p`` has degree at most one and return it."""
    if p.degree() > 1:
        raise ValueError(f"expression is not affine: {p}")
    return p


class LinearCombo:
    """``const + sum(coef * var)`` over LP unknowns, with exact coefficients."""

    __slots__ = ("const", "terms")

    def __init__(self, terms: Mapping[str, Number] | None = None, const: Number = 0):
        self.const = _frac(const)
        self.terms: Dict[str, Fraction] = {}
        if terms:
            for v, c in terms.items():
                if c:
                    self.terms[v] = _frac(c)

    @classmethod
    def var(cls, v: str, coef: Number = 1) -> "LinearCombo":
        return cls({v: coef})

    def copy(self) -> "LinearCombo":
        out = LinearCombo.__new__(LinearCombo)
        out.const = self.const
        out.terms = dict(self.terms)
        return out

    def add_term(self, v: str | None, c: Number) -> None:
        """In-place ``self += c * v`` (``v=None`` addresses the constant)."""
        if not c:
            return
        if v is None:
            self.const += c
            return
        s = self.terms.get(v, 0) + c
        if s:
            self.terms[v] = s
        else:
            self.terms.pop(v, None)

    def iadd(self, other: "LinearCombo", scale: Number = 1) -> "LinearCombo":
        if not scale:
            return self
        self.const += other.const * scale
        for v, c in other.terms.items():
            self.add_term(v, c * scale)
        return self

    def __add__(self, other: "LinearCombo") -> "LinearCombo":
        return self.copy().iadd(other)

    def __sub__(self, other: "LinearCombo") -> "LinearCombo":
        return self.copy().iadd(other, -1)

    def __neg__(self) -> "LinearCombo":
        return LinearCombo.__new__(LinearCombo)._set(-self.const, {v: -c for v, c in self.terms.items()})

    def _set(self, const, terms):
        self.const = const
        self.terms = terms
        return self

    def scale(self, k: Number) -> "LinearCombo":
        k = _frac(k)
        if not k:
            return LinearCombo()
        return LinearCombo.__new__(LinearCombo)._set(self.const * k, {v: c * k for v, c in self.terms.items()})

    def is_zero(self) -> bool:
        return not self.const and not self.terms

    def value(self, assignment: Mapping[str, Number]) -> Fraction:
        total = self.const
        for v, c in self.terms.items():
            total += c * assignment.get(v, 0)
        return total

    def __eq__(self, other):
        if not isinstance(other, LinearCombo):
            return NotImplemented
        return self.const == other.const and self.terms == other.terms

    def __repr__(self):
        return f"LinearCombo({format_combo(self)!r})"


def format_number(c: Fraction) -> str:
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


def format_combo(lc: LinearCombo) -> str:
    parts = []
    for v in sorted(lc.terms):
        c = lc.terms[v]
        parts.append(("-" if c < 0 else "+", f"{format_number(abs(c))} {v}"))
    if lc.const or not parts:
        parts.append(("-" if lc.const < 0 else "+", format_number(abs(lc.const))))
    s, body = parts[0]
    out = ("-" if s == "-" else "") + body
    for s, body in parts[1:]:
        out += f" {s} {body}"
    return out


SymbolicPoly = Dict[Monomial, LinearCombo]
"""Polynomial over program variables whose coefficients are LinearCombos."""


def sym_add_scaled(acc: SymbolicPoly, poly: Polynomial, var: str | None, scale: Number = 1) -> None:
    """``acc += scale * var * poly`` where ``var`` is an LP unknown (None = 1)."""
    for m, c in poly.terms.items():
        lc = acc.get(m)
        if lc is None:
            lc = acc[m] = LinearCombo()
        lc.add_term(var, c * scale)


def sym_prune(acc: SymbolicPoly) -> SymbolicPoly:
    return {m: lc for m, lc in acc.items() if not lc.is_zero()}


def sym_instantiate(sp: SymbolicPoly, assignment: Mapping[str, Number]) -> Polynomial:
    return Polynomial({m: lc.value(assignment) for m, lc in sp.items()})
