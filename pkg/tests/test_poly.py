from fractions import Fraction

from hypothesis import given, settings
from hypothesis import strategies as st

from diffcost.poly import LinearCombo, Polynomial, format_combo, monomials, mono
from diffcost.syntax import ParseError, parse_poly
from diffcost.ts import Nondet, Update, substitute_update

import pytest

VARS = ["x", "y", "z"]


@st.composite
def polys(draw, max_terms=4, max_deg=2):
    p = Polynomial()
    for _ in range(draw(st.integers(0, max_terms))):
        c = draw(st.fractions(min_value=-5, max_value=5, max_denominator=4))
        term = Polynomial.const(c)
        for _ in range(draw(st.integers(0, max_deg))):
            term = term * Polynomial.var(draw(st.sampled_from(VARS)))
        p = p + term
    return p


points = st.fixed_dictionaries({v: st.integers(-6, 6) for v in VARS})


def test_eval_examples():
    p = parse_poly("lenA*lenB")
    assert p.eval({"lenA": 100, "lenB": 100}) == 10000
    assert Polynomial().eval({"x": 3}) == 0
    q = parse_poly("2*(lenB - i)*lenA - 2*j")
    assert q.eval({"lenB": 3, "i": 1, "lenA": 2, "j": 1}) == 6


def test_eval_unbound_variable():
    with pytest.raises(KeyError):
        parse_poly("x + y").eval({"x": 1})


def test_monomial_counts():
    assert len(monomials(["x", "y"], 2)) == 6
    assert monomials(["x"], 0) == [mono()]
    assert len(monomials(["a", "b", "c"], 3)) == 20
    assert len(set(monomials(["a", "b", "c"], 3))) == 20


def test_substitute_update():
    x = Polynomial.var("x")
    up = Update.of({"x": x + 1})
    assert substitute_update(x, up, "t0") == x + 1
    assert substitute_update(x * x, up, "t0") == x * x + 2 * x + 1
    hv = Update.of({"y": Nondet()})
    out = substitute_update(Polynomial.var("y"), hv, "t3")
    assert out.variables() == {"y@t3"}


def test_zero_coefficients_vanish():
    x = Polynomial.var("x")
    assert (x - x).is_zero()
    assert (x - x).terms == {}
    assert x * 0 == Polynomial()


def test_parse_poly_errors():
    with pytest.raises(ParseError):
        parse_poly("x + * y")


def test_to_str_round_trips():
    p = parse_poly("3*x^2 - x*y + 1/2")
    assert parse_poly(p.to_str()) == p


def test_linear_combo_format():
    lc = LinearCombo({"a": Fraction(2), "b": Fraction(-1)}, Fraction(3))
    assert lc.value({"a": 1, "b": 5}) == 0
    assert format_combo(lc)


@settings(max_examples=60, deadline=None)
@given(polys(), polys(), polys(), points)
def test_ring_laws(p, q, r, x):
    assert p + q == q + p
    assert p * q == q * p
    assert p * (q + r) == p * q + p * r
    assert (p * q).eval(x) == p.eval(x) * q.eval(x)
    assert (p - q).eval(x) == p.eval(x) - q.eval(x)


@settings(max_examples=40, deadline=None)
@given(polys(), points)
def test_text_round_trip(p, x):
    assert parse_poly(p.to_str() or "0") == p
