import random
import sys
from fractions import Fraction

import pytest

from diffcost.lp import (LinearSystem, Status, check_dual_certificate, guided_simplex,
                         read_lp, read_solution, residuals, simplex, solve, write_lp, write_solution)
from diffcost.poly import LinearCombo

F = Fraction


def lc(const=0, **terms):
    return LinearCombo({k: F(v) for k, v in terms.items()}, F(const))


def system(objective=None):
    s = LinearSystem()
    s.objective = objective
    return s


@pytest.mark.parametrize("backend", ["exact", "exact-tableau"])
def test_minimize_with_lower_bound(backend):
    s = system(("min", lc(t=1)))
    s.add_var("t")
    s.add_ge("r", lc(-3, t=1))
    sol = solve(s, backend)
    assert sol.status == Status.OPTIMAL
    assert sol.assignment["t"] == 3
    assert check_dual_certificate(s, sol)


@pytest.mark.parametrize("backend", ["exact", "exact-tableau"])
def test_infeasible(backend):
    s = system()
    s.add_var("c", nonneg=True)
    s.add_eq("r", lc(1, c=1))
    assert solve(s, backend).status == Status.INFEASIBLE


@pytest.mark.parametrize("backend", ["exact", "exact-tableau"])
def test_unbounded(backend):
    s = system(("min", lc(t=1)))
    s.add_var("t")
    s.add_ge("r", lc(5, t=-1))
    assert solve(s, backend).status == Status.UNBOUNDED


def test_pivot_cap_gives_timeout():
    s = random_feasible_system(random.Random(3), 12, 10)
    assert simplex(s, max_pivots=1).status == Status.TIMEOUT


def test_unknown_backend():
    with pytest.raises(ValueError):
        solve(system(), "gurobi")


def random_feasible_system(rng, n_vars, n_rows):
    """Rows a.x + b >= 0 built around a known point, plus a bounded objective."""
    s = LinearSystem()
    names = [f"x{i}" for i in range(n_vars)]
    point = {v: F(rng.randint(0, 5)) for v in names}
    for v in names:
        s.add_var(v, nonneg=rng.random() < 0.7)
        s.add_ge(f"ub{v}", lc(10, **{v: -1}))
        s.add_ge(f"lb{v}", lc(10, **{v: 1}))
    for r in range(n_rows):
        coefs = {v: F(rng.randint(-4, 4)) for v in rng.sample(names, 3)}
        val = sum(coefs[v] * point[v] for v in coefs)
        combo = LinearCombo(coefs, -val + rng.randint(0, 3))
        if rng.random() < 0.3:
            s.add_eq(f"e{r}", LinearCombo(coefs, -val))
        else:
            s.add_ge(f"g{r}", combo)
    s.objective = (rng.choice(["min", "max"]), LinearCombo({v: F(rng.randint(-3, 3)) for v in names}))
    return s


def test_random_systems_agree_across_backends():
    rng = random.Random(7)
    for _ in range(20):
        s = random_feasible_system(rng, rng.randint(3, 8), rng.randint(2, 8))
        a = solve(s, "exact")
        b = solve(s, "exact-tableau")
        c = solve(s, f"external:{sys.executable} -m diffcost.lp --float")
        assert a.status == b.status == Status.OPTIMAL
        assert a.objective_value == b.objective_value
        assert abs(float(c.objective_value - b.objective_value)) <= 1e-6
        for sol in (a, b):
            assert all(r == 0 for _, r in residuals(s, sol.assignment))
            assert check_dual_certificate(s, sol)


def test_lp_text_round_trip():
    s = random_feasible_system(random.Random(1), 4, 4)
    assert write_lp(read_lp(write_lp(s))) == write_lp(s)
    sol = solve(s)
    back = read_solution(write_solution(sol))
    assert back.status == sol.status and back.assignment == sol.assignment


def test_external_violating_answer_is_rejected(tmp_path):
    script = tmp_path / "liar.py"
    script.write_text("import sys\nsys.stdin.read()\nprint('status Optimal')\nprint('t = 0')\n")
    s = system(("min", lc(t=1)))
    s.add_var("t")
    s.add_ge("r", lc(-3, t=1))
    sol = solve(s, f"external:{sys.executable} {script}")
    assert sol.status == Status.REJECTED


def test_external_near_feasible_answer_is_repaired(tmp_path):
    script = tmp_path / "close.py"
    script.write_text("import sys\nsys.stdin.read()\nprint('status Optimal')\nprint('t = 2.9999999')\n")
    s = system(("min", lc(t=1)))
    s.add_var("t")
    s.add_ge("r", lc(-3, t=1))
    sol = solve(s, f"external:{sys.executable} {script}")
    assert sol.ok
    assert sol.assignment["t"] == 3


def test_external_failure_is_reported(tmp_path):
    s = system(("min", lc(t=1)))
    s.add_var("t")
    s.add_ge("r", lc(-3, t=1))
    sol = solve(s, f"external:{sys.executable} -c 'import sys; sys.exit(3)'")
    assert sol.status == Status.REJECTED


def test_determinism():
    s = random_feasible_system(random.Random(11), 6, 6)
    assert solve(s).assignment == solve(s).assignment


def test_guided_solver_on_degenerate_system():
    # many equal-cost optima: the certificate must still close
    s = LinearSystem()
    for v in "abcd":
        s.add_var(v, nonneg=True)
    s.add_eq("sum", lc(-4, a=1, b=1, c=1, d=1))
    s.objective = ("min", lc(a=1, b=1, c=1, d=1))
    sol = guided_simplex(s)
    assert sol.status == Status.OPTIMAL and sol.objective_value == 4
    assert check_dual_certificate(s, sol)
