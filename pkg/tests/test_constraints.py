import random
from fractions import Fraction

import pytest

from diffcost.analysis import Options, invariants_for
from diffcost.constraints import (ConstraintError, collect_antipf_constraints, collect_diffcost_constraint,
                                  collect_pf_constraints, collect_refutation_constraints, fix_templates)
from diffcost.handelman import assemble, translate
from diffcost.imp import parse_program
from diffcost.invariants import merge_annotations, parse_invariant_file, trivial_invariants, user_invariants_for
from diffcost.lp import Status, solve
from diffcost.poly import LinearCombo, mono, mono_var
from diffcost.syntax import parse_poly
from diffcost.ts import COST, parse_transition_system

from conftest import JOIN, loop_program, sample_premise_points

P = parse_poly


def assignment_for(tmpl, polys):
    """LP assignment that makes ``tmpl`` equal ``polys`` at every location."""
    out = {}
    for loc, p in polys.items():
        for m, c in p.terms.items():
            out[tmpl.unknowns[loc][m]] = c
    return out


def test_template_counts(join_ts_pair):
    ts = parse_program(loop_program("    cost = cost + 1;"))
    tm = fix_templates(ts, 2, "pf")
    assert len(ts.locations) == 3
    assert len(tm.all_unknowns()) == 3 * 6
    assert len(fix_templates(ts, 0, "pf").all_unknowns()) == 3
    assert len(fix_templates(join_ts_pair[1], 2, "pf").all_unknowns()) == 75
    with pytest.raises(ConstraintError):
        fix_templates(ts, -1, "pf")


def counter_loop():
    return parse_transition_system("""vars x cost;
init l;
terminal lout;
theta0 x >= 0;
trans l -> l update cost := cost + 1, x := x + 1;
trans l -> lout;
""")


def test_pf_single_transition_expansion():
    ts = counter_loop()
    tm = fix_templates(ts, 1, "pf")
    cs = collect_pf_constraints(ts, trivial_invariants(ts), tm)
    loop = next(c for c in cs if c.tag == "pf:t0")
    a = tm.unknowns["l"][mono_var("x")]
    assert set(loop.conclusion) == {mono()}
    assert loop.conclusion[mono()] == LinearCombo({a: Fraction(-1)}, Fraction(-1))


def test_antipf_single_transition_expansion():
    ts = counter_loop()
    tm = fix_templates(ts, 1, "anti")
    cs = collect_antipf_constraints(ts, trivial_invariants(ts), tm)
    loop = next(c for c in cs if c.tag == "anti:t0")
    a = tm.unknowns["l"][mono_var("x")]
    assert loop.conclusion[mono()] == LinearCombo({a: Fraction(1)}, Fraction(1))


def test_terminal_self_loop_is_trivial():
    ts = counter_loop()
    tm = fix_templates(ts, 1, "pf")
    cs = collect_pf_constraints(ts, trivial_invariants(ts), tm)
    term_loop = [t for t in ts.transitions if t.is_terminal_loop(ts.terminal)][0]
    emitted = [c for c in cs if c.tag == f"pf:{term_loop.tid}"]
    assert all(not c.conclusion for c in emitted)


def test_nondet_update_introduces_fresh_variable():
    ts = parse_transition_system("""vars x y cost;
init l;
terminal lout;
theta0 x >= 0;
trans l -> lout update y := nondet in [0, 3], cost := cost + y;
""")
    tm = fix_templates(ts, 1, "anti")
    cs = collect_antipf_constraints(ts, trivial_invariants(ts), tm)
    c = next(c for c in cs if c.tag == "anti:t0")
    assert any(v == "y@t0" for m in c.conclusion for v, _ in m)
    assert P("y@t0") in c.premises and P("3 - y@t0") in c.premises


def test_nondet_cost_update_is_rejected():
    ts = parse_transition_system("""vars x cost;
init l;
terminal lout;
theta0 x >= 0;
trans l -> lout update cost := nondet;
""")
    with pytest.raises(ConstraintError):
        collect_pf_constraints(ts, trivial_invariants(ts), fix_templates(ts, 1, "pf"))


def test_conclusions_are_linear_in_unknowns(join_ts_pair):
    new, old = join_ts_pair
    tn, to = fix_templates(new, 2, "pf_new"), fix_templates(old, 2, "antipf_old")
    cs = (collect_pf_constraints(new, trivial_invariants(new), tn)
          + collect_antipf_constraints(old, trivial_invariants(old), to)
          + [collect_diffcost_constraint(new.theta0, new, tn, old, to, "t")])
    known = set(tn.all_unknowns()) | set(to.all_unknowns()) | {"t"}
    for c in cs:
        for lc in c.conclusion.values():
            assert isinstance(lc, LinearCombo)
            assert set(lc.terms) <= known


def join_annotations():
    pf_new = {"l0": P("2*lenB*lenA"), "l1": P("2*(lenB - i)*lenA"), "l2": P("2*(lenB - i)*lenA - 2*j"),
              "l3": P("2*(lenB - i)*lenA - 2*j"), "lout": P("0")}
    anti_old = {"l0": P("lenA*lenB"), "l1": P("(lenA - i)*lenB"), "l2": P("(lenA - i)*lenB - j"),
                "l3": P("(lenA - i)*lenB - j"), "lout": P("0")}
    return pf_new, anti_old


def test_hand_annotations_satisfy_every_constraint(join_ts_pair):
    new, old = join_ts_pair
    parsed = parse_invariant_file((JOIN / "join.inv").read_text())
    inv_new = merge_annotations(trivial_invariants(new), user_invariants_for(parsed, "new"))
    inv_old = merge_annotations(trivial_invariants(old), user_invariants_for(parsed, "old"))
    tn, to = fix_templates(new, 2, "pf_new"), fix_templates(old, 2, "antipf_old")
    pf_new, anti_old = join_annotations()
    asg = {**assignment_for(tn, pf_new), **assignment_for(to, anti_old), "t": Fraction(10000)}
    cs = (collect_pf_constraints(new, inv_new, tn) + collect_antipf_constraints(old, inv_old, to)
          + [collect_diffcost_constraint(new.theta0, new, tn, old, to, "t")])
    rng = random.Random(0)
    checked = 0
    for c in cs:
        concl = c.instantiate(asg)
        for x in sample_premise_points(c, rng, 40, span=110):
            assert concl.eval(x) >= 0, (c.tag, x)
            checked += 1
    assert checked > 200
    # t = 9999 breaks the differential constraint at the box corner
    diff = collect_diffcost_constraint(new.theta0, new, tn, old, to, "t")
    corner = {"lenA": 100, "lenB": 100, "i": 0, "j": 0, COST: 0}
    assert diff.instantiate({**asg, "t": Fraction(9999)}).eval(corner) < 0


def test_refutation_ground_constraint(join_ts_pair):
    new, old = join_ts_pair
    tn, to = fix_templates(new, 2, "antipf_new"), fix_templates(old, 2, "pf_old")
    x0 = {"lenA": 100, "lenB": 100, "i": 0, "j": 0, COST: 0}
    ground = collect_refutation_constraints(x0, new.theta0, new, tn, old, to, Fraction(9999), Fraction(1))
    assert not ground.premises
    assert list(ground.conclusion) == [mono()]
    assert ground.conclusion[mono()].const == -10000
    with pytest.raises(ConstraintError):
        collect_refutation_constraints({**x0, "lenA": 0}, new.theta0, new, tn, old, to,
                                       Fraction(9999), Fraction(1))


def test_identical_programs_have_zero_threshold(join_ts_pair):
    new, _ = join_ts_pair
    parsed = parse_invariant_file((JOIN / "join.inv").read_text())
    inv = invariants_for(new, Options(domain="intervals"), user_invariants_for(parsed, "new"))
    tn, to = fix_templates(new, 2, "pf_new"), fix_templates(new, 2, "antipf_old")
    cs = (collect_pf_constraints(new, inv, tn) + collect_antipf_constraints(new, inv, to)
          + [collect_diffcost_constraint(new.theta0, new, tn, new, to, "t")])
    frs = [translate(c, 2, f"h{i}") for i, c in enumerate(cs)]
    sys = assemble(tn.all_unknowns() + to.all_unknowns() + ["t"], frs, ("min", LinearCombo.var("t")))
    sol = solve(sys)
    assert sol.status == Status.OPTIMAL and sol.assignment["t"] == 0
