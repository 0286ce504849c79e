from fractions import Fraction

import pytest

from diffcost.analysis import Options, analyze_diff, analyze_refute
from diffcost.imp import load_system, parse_program
from diffcost.oracle import (NonTermination, RunBudget, StepBudgetExceeded, box_points, check_witness,
                             cost_extremes, default_box, max_diff)
from diffcost.poly import Polynomial
from diffcost.ts import COST, parse_transition_system
from diffcost.witness import Witness

from conftest import MISC, loop_program

JOIN_BOX = {"lenA": (1, 4), "lenB": (1, 4)}


def test_deterministic_loop_extremes():
    ts = parse_program(loop_program("    cost = cost + 1;"))
    assert cost_extremes(ts, {"n": 5, "i": 0, COST: 0}, RunBudget()) == (5, 5)


def test_nondet_loop_extremes():
    ts = parse_program(loop_program("    r = nondet(0, 1);\n    cost = cost + r;", extra_decls="  int r = 0;\n"))
    assert cost_extremes(ts, {"n": 3, "i": 0, "r": 0, COST: 0}, RunBudget()) == (0, 3)


def test_nonterminating_program_exhausts_step_budget():
    ts = load_system(MISC / "nonterm.imp")
    with pytest.raises(StepBudgetExceeded):
        cost_extremes(ts, {"x": 0, COST: 0}, RunBudget(max_steps=10**4))


def test_revisited_state_is_nontermination():
    ts = parse_transition_system("vars x cost;\ninit l;\nterminal lout;\ntheta0 x >= 0;\n"
                                 "trans l -> l;\ntrans l -> lout guard x - 5 >= 0;\n")
    with pytest.raises(NonTermination):
        cost_extremes(ts, {"x": 0, COST: 0}, RunBudget())


def test_join_max_diff(join_pair):
    res = max_diff(*join_pair, RunBudget(input_box=JOIN_BOX))
    assert res.value == 16
    assert res.argmax["lenA"] == 4 and res.argmax["lenB"] == 4


def test_identical_and_one_extra_step():
    base = loop_program("    cost = cost + 1;", bound=4)
    extra = base.replace("  int i = 0;\n", "  int i = 0;\n  cost = cost + 1;\n")
    a, b = parse_program(base), parse_program(extra)
    assert max_diff(a, a, RunBudget()).value == 0
    assert max_diff(b, a, RunBudget()).value == 1


def test_extremes_ordering_and_monotonicity():
    ts = parse_program(loop_program("    if (r >= 1) {\n      cost = cost + 2;\n    } else {\n      cost = cost - 1;\n    }",
                                    bound=3, extra_decls="  int r;\n"))
    x = {"n": 3, "i": 0, "r": 0, COST: 0}
    narrow = cost_extremes(ts, x, RunBudget(default_nondet=(0, 0)))
    wide = cost_extremes(ts, x, RunBudget(default_nondet=(-1, 2)))
    assert narrow[0] <= narrow[1] and wide[0] <= wide[1]
    assert wide[0] <= narrow[0] and wide[1] >= narrow[1]


def test_join_witness_passes_and_corruption_fails(join_pair):
    rep = analyze_diff(*join_pair, Options())
    budget = RunBudget(input_box=JOIN_BOX)
    assert check_witness(rep.witness, *join_pair, budget).ok
    bad = Witness(rep.witness.mode, rep.witness.threshold_raw,
                  {role: dict(m) for role, m in rep.witness.bounds.items()})
    # the constant coefficient at the exit location is tight: lowering it breaks the upper bound
    end = join_pair[0].terminal
    bad.bounds["pf_new"][end] = bad.bounds["pf_new"][end] - 1
    res = check_witness(bad, *join_pair, budget)
    assert not res.ok and "upper bound" in res.failures[0]


def test_zero_programs_zero_witness():
    ts = parse_transition_system("vars n cost;\ninit l;\nterminal l;\ntheta0 n >= 0, 2 - n >= 0;\n")
    zero = {l: Polynomial() for l in ts.locations}
    w = Witness("diff", Fraction(0), {"pf_new": zero, "antipf_old": zero})
    assert check_witness(w, ts, ts, RunBudget(input_box={"n": (0, 2)})).ok


def test_refutation_agrees_with_enumeration(join_pair):
    # on a shrunken box the refuted threshold must lie strictly below the true gap
    new, old = join_pair
    rep = analyze_refute(new, old, Fraction(15), {"lenA": 4, "lenB": 4}, Options())
    assert rep.status == "Refuted"
    x = rep.extra["x0"]
    inf_new = cost_extremes(new, x, RunBudget())[0]
    sup_old = cost_extremes(old, x, RunBudget())[1]
    assert inf_new - sup_old > 15


def test_default_box_and_points(join_pair):
    box = default_box(join_pair[0], 3)
    assert box["lenA"] == (1, 3) and box["lenB"] == (1, 3)
    pts = list(box_points(join_pair[0], box))
    assert len(pts) == 9 and all(p["i"] == 0 for p in pts)
