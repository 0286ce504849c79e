import pytest

from diffcost.analysis import InputError, Options, invariants_for
from diffcost.imp import load_system, parse_program
from diffcost.invariants import (check_invariant_sampled, merge_annotations, parse_invariant_file,
                                 propagate_intervals, user_invariants_for)
from diffcost.polyhedra import drop_redundant, propagate_polyhedra
from diffcost.syntax import parse_poly
from diffcost.ts import Assertion

from conftest import BENCH, JOIN, loop_program

P = parse_poly


def small_box(ts, hi=4):
    return {v: (1, hi) for v in ts.variables if v in ("n", "m", "lenA", "lenB")}


def test_single_loop_interval_invariant():
    ts = parse_program(loop_program("    cost = cost + 1;"))
    inv = propagate_intervals(ts)
    head = ts.initial
    assert inv[head].holds({"n": 1, "i": 0, "cost": 0})
    assert inv[head].holds({"n": 100, "i": 100, "cost": 100})
    assert not inv[head].holds({"n": 100, "i": -1, "cost": 0})
    assert not inv[head].holds({"n": 101, "i": 0, "cost": 0})


def test_unbounded_nondet_gets_no_conjunct():
    src = "void f(int n) {\n  assume(1 <= n && n <= 10);\n  int y = 0;\n  y = nondet();\n  cost = cost + 1;\n}\n"
    ts = parse_program(src)
    inv = propagate_intervals(ts)
    for loc in ts.locations:
        if loc != ts.initial:
            assert all("y" not in a.variables() for a in inv[loc].conjuncts)


def test_polyhedra_relational_bounds_on_join(join_pair):
    new, _ = join_pair
    inv = propagate_polyhedra(new)
    # the inner counter never exceeds lenA and the outer never exceeds lenB
    assert inv["l2"].holds({"lenA": 3, "lenB": 2, "i": 1, "j": 3})
    assert not inv["l2"].holds({"lenA": 3, "lenB": 2, "i": 1, "j": 4})
    assert not inv["l2"].holds({"lenA": 3, "lenB": 2, "i": 2, "j": 0})


@pytest.mark.parametrize("domain", ["intervals", "polyhedra"])
def test_computed_invariants_are_sound_on_join(join_pair, domain):
    for ts in join_pair:
        inv = invariants_for(ts, Options(domain=domain), None)
        rep = check_invariant_sampled(ts, inv, 10**4, box=small_box(ts))
        assert rep.ok, [str(v) for v in rep.violations[:3]]
        assert rep.states_checked > 100


@pytest.mark.parametrize("stem", ["nested_multiple_dep", "dis2", "ex4", "simple_single", "ddec"])
def test_computed_invariants_are_sound_on_benchmarks(stem):
    for side in ("new", "old"):
        ts = load_system(BENCH / f"{stem}_{side}.imp")
        inv = invariants_for(ts, Options(), None)
        rep = check_invariant_sampled(ts, inv, 5000, nondet_range=(-1, 1))
        assert rep.ok, [str(v) for v in rep.violations[:3]]


def test_planted_wrong_invariant_is_caught():
    ts = parse_program(loop_program("    cost = cost + 1;", bound=5))
    inv = {loc: Assertion() for loc in ts.locations}
    inv[ts.initial] = Assertion.of([P("1 - i")])
    rep = check_invariant_sampled(ts, inv, 1000, box={"n": (1, 5)})
    assert not rep.ok
    assert rep.violations[0].state["i"] >= 2


def test_empty_invariant_is_vacuous(join_pair):
    ts = join_pair[0]
    rep = check_invariant_sampled(ts, {loc: Assertion() for loc in ts.locations}, 500)
    assert rep.ok


def test_merge_annotations():
    auto = {"l1": Assertion.of([P("x")])}
    user = {"l1": Assertion.of([P("n - x"), P("x")])}
    merged = merge_annotations(auto, user)
    assert set(merged["l1"].conjuncts) == {P("x"), P("n - x")}
    assert merge_annotations(auto, {}) == auto


def test_invariant_file_scopes():
    parsed = parse_invariant_file((JOIN / "join.inv").read_text())
    new = user_invariants_for(parsed, "new")
    old = user_invariants_for(parsed, "old")
    assert P("lenB - i") in new["l1"].conjuncts
    assert P("lenA - i") in old["l1"].conjuncts


def test_drop_redundant():
    atoms = [P("x"), P("x + 1"), P("10 - x"), P("20 - x")]
    assert set(drop_redundant(atoms, ["x"])) == {P("x"), P("10 - x")}


def test_unknown_domain_is_an_input_error(join_pair):
    with pytest.raises(InputError):
        invariants_for(join_pair[0], Options(domain="octagons"), None)
