"""Linear systems, an exact rational simplex, and the LP text format.

The built-in solver is a sparse two-phase tableau simplex over ``gmpy2.mpq``.
Free variables are not split into two nonnegative halves.  Each one is
pivoted into the basis up front and never considered for leaving it, which
removes the variable from all ratio tests.  Each original row also carries a
marker column.  Markers never enter the basis; their reduced costs at the
end are the dual values, which gives an optimality certificate that is
re-checked against the original system.

Entering columns are priced by Dantzig's rule with a fall-back to Bland's
rule on degenerate pivots, so the method terminates.

Dense tableaus get slow on larger systems, so the default ``exact`` backend
first asks a floating-point solver (HiGHS through scipy) which columns are
nonzero at its optimum.  The restricted system is then solved exactly, every
left-out column is priced exactly against the restricted duals, and violated
columns are added until none remain.  The final answer is therefore exact
and certified by the same dual check; the float solve only picks columns.
"""

from __future__ import annotations

import enum
import io
import re
import shlex
import subprocess
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from gmpy2 import mpq

from .poly import LinearCombo, format_combo, format_number


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    FEASIBLE = "Feasible"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    TIMEOUT = "Timeout"
    REJECTED = "Rejected"

    def __str__(self):
        return self.value


@dataclass
class LinearSystem:
    """Equalities ``combo = 0`` and inequalities ``combo >= 0`` over named unknowns.

    Variables listed in ``nonneg`` carry an implicit ``v >= 0`` bound (the
    Handelman multipliers); all others are free.
    """

    variables: List[str] = field(default_factory=list)
    nonneg: set = field(default_factory=set)
    equalities: List[Tuple[str, LinearCombo]] = field(default_factory=list)
    inequalities: List[Tuple[str, LinearCombo]] = field(default_factory=list)
    objective: Optional[Tuple[str, LinearCombo]] = None  # ("min"|"max", combo)

    def __post_init__(self):
        self._known = set(self.variables)

    def add_var(self, name: str, nonneg: bool = False) -> str:
        if name in self._known:
            raise ValueError(f"variable {name!r} declared twice")
        self._known.add(name)
        self.variables.append(name)
        if nonneg:
            self.nonneg.add(name)
        return name

    def has_var(self, name: str) -> bool:
        return name in self._known

    def add_eq(self, tag: str, combo: LinearCombo) -> None:
        self.equalities.append((tag, combo))

    def add_ge(self, tag: str, combo: LinearCombo) -> None:
        self.inequalities.append((tag, combo))

    def extend(self, other: "LinearSystem") -> None:
        for v in other.variables:
            if v in self._known:
                raise ValueError(f"variable namespace collision on {v!r}")
            self.add_var(v, v in other.nonneg)
        self.equalities.extend(other.equalities)
        self.inequalities.extend(other.inequalities)

    def check_closed(self) -> None:
        """Every referenced variable must be declared."""
        combos = [c for _, c in self.equalities + self.inequalities]
        if self.objective:
            combos.append(self.objective[1])
        for c in combos:
            for v in c.terms:
                if v not in self._known:
                    raise ValueError(f"undeclared LP variable {v!r}")

    def stats(self) -> Dict[str, int]:
        return {"variables": len(self.variables), "nonneg": len(self.nonneg),
                "equalities": len(self.equalities), "inequalities": len(self.inequalities)}


@dataclass
class Solution:
    status: Status
    assignment: Dict[str, Fraction] = field(default_factory=dict)
    objective_value: Optional[Fraction] = None
    duals: Optional[Dict[str, Fraction]] = None
    pivots: int = 0
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status in (Status.OPTIMAL, Status.FEASIBLE)

    def value(self, v: str) -> Fraction:
        return self.assignment.get(v, Fraction(0))


def _frac(x) -> Fraction:
    return Fraction(int(x.numerator), int(x.denominator))


# -- verification ----------------------------------------------------------------

def residuals(sys: LinearSystem, assignment: Mapping[str, Fraction]) -> List[Tuple[str, Fraction]]:
    """Violations of ``sys`` at ``assignment`` as ``(tag, amount)`` pairs (empty when feasible)."""
    out = []
    for tag, c in sys.equalities:
        r = c.value(assignment)
        if r:
            out.append((tag, abs(r)))
    for tag, c in sys.inequalities:
        r = c.value(assignment)
        if r < 0:
            out.append((tag, -r))
    for v in sys.nonneg:
        r = assignment.get(v, 0)
        if r < 0:
            out.append((f"nonneg:{v}", -r))
    return out


def check_dual_certificate(sys: LinearSystem, sol: Solution) -> bool:
    """Exact optimality check for a minimization/maximization answer.

    With the objective written as ``min c.x + c0``, rows ``a_i.x + b_i (=,>=) 0``
    and duals ``y``, the certificate requires ``c_j = sum_i y_i a_ij`` for free
    ``x_j``, ``c_j >= sum_i y_i a_ij`` for nonnegative ``x_j``, ``y_i >= 0`` on
    inequality rows, and ``-sum_i y_i b_i + c0`` equal to the optimum.
    """
    if sol.status != Status.OPTIMAL or sys.objective is None or sol.duals is None:
        return False
    sense, obj = sys.objective
    sign = 1 if sense == "min" else -1
    rows = [(f"eq{i}", c) for i, (_, c) in enumerate(sys.equalities)]
    rows += [(f"ge{i}", c) for i, (_, c) in enumerate(sys.inequalities)]
    reduced: Dict[str, Fraction] = {v: sign * obj.terms.get(v, Fraction(0)) for v in sys.variables}
    bound = sign * obj.const
    for key, c in rows:
        y = sol.duals.get(key, Fraction(0))
        if not y:
            continue
        if key.startswith("ge") and y < 0:
            return False
        for v, a in c.terms.items():
            reduced[v] -= y * a
        bound -= y * c.const
    for v, r in reduced.items():
        if v in sys.nonneg:
            if r < 0:
                return False
        elif r != 0:
            return False
    return sign * bound == sol.objective_value


# -- exact simplex ---------------------------------------------------------------

class _Tableau:
    """Sparse tableau: ``rows[i]`` maps column -> coefficient, ``rhs[i]`` the basic value."""

    def __init__(self):
        self.rows: List[Dict[int, mpq]] = []
        self.rhs: List[mpq] = []
        self.basis: List[int] = []
        self.pivots = 0

    def pivot(self, r: int, j: int, obj_rows: Sequence[Tuple[Dict[int, mpq], list]]):
        row = self.rows[r]
        p = row[j]
        if p != 1:
            inv = 1 / p
            for k in row:
                row[k] *= inv
            self.rhs[r] *= inv
        row[j] = mpq(1)
        rr = self.rhs[r]
        items = list(row.items())
        for i, other in enumerate(self.rows):
            if i == r:
                continue
            f = other.get(j)
            if f is None:
                continue
            _axpy(other, items, f)
            self.rhs[i] -= f * rr
        for orow, val in obj_rows:
            f = orow.get(j)
            if f is None:
                continue
            _axpy(orow, items, f)
            val[0] -= f * rr
        self.basis[r] = j
        self.pivots += 1


def _axpy(target: Dict[int, mpq], items, f):
    """``target -= f * row`` in place, dropping exact zeros."""
    for k, a in items:
        v = target.get(k)
        if v is None:
            target[k] = -f * a
        else:
            v -= f * a
            if v:
                target[k] = v
            else:
                del target[k]


class _Timeout(Exception):
    pass


def simplex(sys: LinearSystem, max_pivots: int = 10**6, time_limit: Optional[float] = None) -> Solution:
    """Solve ``sys`` exactly.  Returns Optimal, Feasible (no objective), Infeasible,
    Unbounded or Timeout."""
    sys.check_closed()
    start = time.monotonic()
    names = list(sys.variables)
    index = {v: i for i, v in enumerate(names)}
    n_struct = len(names)
    free = [v not in sys.nonneg for v in names]
    kinds: List[str] = ["x"] * n_struct  # x structural, s slack, m marker, a artificial

    def new_col(kind: str) -> int:
        kinds.append(kind)
        free.append(False)
        return len(kinds) - 1

    tab = _Tableau()
    row_keys: List[str] = []
    marker_of_row: List[int] = []
    for prefix, group, slack in (("eq", sys.equalities, False), ("ge", sys.inequalities, True)):
        for i, (_, c) in enumerate(group):
            row = {index[v]: mpq(a.numerator, a.denominator) for v, a in c.terms.items()}
            if slack:
                row[new_col("s")] = mpq(-1)
            m = new_col("m")
            row[m] = mpq(1)
            tab.rows.append(row)
            tab.rhs.append(-mpq(c.const.numerator, c.const.denominator))
            tab.basis.append(-1)
            row_keys.append(f"{prefix}{i}")
            marker_of_row.append(m)

    def check_budget():
        if tab.pivots >= max_pivots:
            raise _Timeout(f"pivot cap {max_pivots} reached")
        if time_limit is not None and time.monotonic() - start > time_limit:
            raise _Timeout(f"time limit {time_limit}s reached")

    try:
        # Phase 0: pivot free variables into the basis.
        for j in range(n_struct):
            if not free[j]:
                continue
            best = None
            for r, row in enumerate(tab.rows):
                if tab.basis[r] == -1 and j in row:
                    if best is None or len(row) < len(tab.rows[best]):
                        best = r
            if best is not None:
                check_budget()
                tab.pivot(best, j, ())

        # Phase 1 on the rows that have no basic variable yet.
        obj1: Dict[int, mpq] = {}
        val1 = [mpq(0)]
        for r in range(len(tab.rows)):
            if tab.basis[r] != -1:
                continue
            if tab.rhs[r] < 0:
                row = tab.rows[r]
                for k in row:
                    row[k] = -row[k]
                tab.rhs[r] = -tab.rhs[r]
            a = new_col("a")
            tab.rows[r][a] = mpq(1)
            tab.basis[r] = a
            # objective: minimize sum of artificials, written in terms of nonbasics
            for k, v in tab.rows[r].items():
                if k != a:
                    obj1[k] = obj1.get(k, mpq(0)) - v
            val1[0] -= tab.rhs[r]
        obj1 = {k: v for k, v in obj1.items() if v}
        _run(tab, obj1, val1, kinds, free, check_budget, phase=1)
        if val1[0] != 0:
            return Solution(Status.INFEASIBLE, pivots=tab.pivots, message="phase 1 optimum > 0")

        # Drive remaining artificials out of the basis (they sit at value 0).
        for r in range(len(tab.rows)):
            if kinds[tab.basis[r]] != "a":
                continue
            for k in sorted(tab.rows[r]):
                if kinds[k] in ("x", "s") and not _is_basic(tab, k):
                    check_budget()
                    tab.pivot(r, k, ((obj1, val1),))
                    break
        keep = [r for r in range(len(tab.rows)) if kinds[tab.basis[r]] != "a"]
        tab.rows = [{k: v for k, v in tab.rows[r].items() if kinds[k] != "a"} for r in keep]
        tab.rhs = [tab.rhs[r] for r in keep]
        tab.basis = [tab.basis[r] for r in keep]

        # Phase 2.
        if sys.objective is None:
            status = Status.FEASIBLE
            obj2: Dict[int, mpq] = {}
            val2 = [mpq(0)]
        else:
            sense, combo = sys.objective
            sign = 1 if sense == "min" else -1
            cost = {index[v]: sign * mpq(a.numerator, a.denominator) for v, a in combo.terms.items()}
            obj2 = dict(cost)
            val2 = [mpq(0)]
            for r, b in enumerate(tab.basis):
                cb = cost.get(b)
                if cb:
                    _axpy(obj2, list(tab.rows[r].items()), cb)
                    val2[0] -= cb * tab.rhs[r]
            obj2 = {k: v for k, v in obj2.items() if v}
            status = _run(tab, obj2, val2, kinds, free, check_budget, phase=2)
            if status == Status.UNBOUNDED:
                return Solution(Status.UNBOUNDED, pivots=tab.pivots)
    except _Timeout as e:
        return Solution(Status.TIMEOUT, pivots=tab.pivots, message=str(e))

    values = [mpq(0)] * len(kinds)
    for r, b in enumerate(tab.basis):
        values[b] = tab.rhs[r]
    assignment = {v: _frac(values[i]) for i, v in enumerate(names)}
    sol = Solution(status, assignment, pivots=tab.pivots)
    if sys.objective is not None:
        sense, combo = sys.objective
        sign = 1 if sense == "min" else -1
        sol.objective_value = combo.value(assignment)
        # the reduced cost of marker column i is -y_i for the sign-adjusted objective
        sol.duals = {key: _frac(-obj2.get(m, mpq(0))) for key, m in zip(row_keys, marker_of_row)}
    return sol


def _is_basic(tab: _Tableau, k: int) -> bool:
    return k in tab.basis


def _run(tab: _Tableau, obj: Dict[int, mpq], val: list, kinds, free, check_budget, phase: int) -> Status:
    """Simplex iterations on ``obj`` (reduced costs, minimization).

    Entering columns are priced by Dantzig's rule (most negative reduced
    cost).  After ``stall`` consecutive degenerate pivots the loop switches
    to Bland's rule and stays there until the objective strictly improves.
    The objective value never repeats between plateaus, a plateau can only
    be revisited finitely often before Bland's rule takes over, and Bland's
    rule cannot cycle, so the iteration terminates.
    """
    stall = 30
    streak = 0
    while True:
        basic = set(tab.basis)
        enter = None
        direction = 1
        best = None
        for k in sorted(obj):
            kind = kinds[k]
            if kind == "m" or k in basic:
                continue
            if phase == 2 and kind == "a":
                continue
            d = obj[k]
            if free[k]:
                enter, direction = k, (1 if d < 0 else -1)
                break
            if d < 0:
                if streak >= stall:
                    enter = k
                    break
                if best is None or d < best:
                    best, enter = d, k
        if enter is None:
            return Status.OPTIMAL
        leave = None
        best_ratio = None
        for r, row in enumerate(tab.rows):
            a = row.get(enter)
            if a is None:
                continue
            b = tab.basis[r]
            if free[b]:
                continue
            a = a * direction
            if a <= 0:
                continue
            ratio = tab.rhs[r] / a
            if (best_ratio is None or ratio < best_ratio
                    or (ratio == best_ratio and b < tab.basis[leave])):
                best_ratio, leave = ratio, r
        if leave is None:
            return Status.UNBOUNDED
        check_budget()
        tab.pivot(leave, enter, [(obj, val)])
        streak = streak + 1 if best_ratio == 0 else 0


# -- LP text format ---------------------------------------------------------------

LP_FORMAT_DOC = """\
Plain-text LP format (one statement per line, '#' starts a comment):

  minimize: <combo>        | maximize: <combo>   | feasibility
  free: v1 v2 ...          (may repeat)
  nonneg: c1 c2 ...        (may repeat; each listed variable is >= 0)
  eq <tag>: <combo> = 0
  ge <tag>: <combo> >= 0

<combo> is a sum of terms '[+|-] <rational> <var>' or '[+|-] <rational>',
with rationals written as integers or p/q.
"""

_TERM_RE = re.compile(r"\s*([+-])?\s*(\d+(?:/\d+)?)(?:\s+([^\s+-][^\s]*))?")


def parse_combo(text: str) -> LinearCombo:
    text = text.strip()
    out = LinearCombo()
    pos = 0
    first = True
    while pos < len(text):
        m = _TERM_RE.match(text, pos)
        if not m or m.end() == pos or (not first and m.group(1) is None):
            raise ValueError(f"bad linear expression near {text[pos:pos + 20]!r}")
        c = Fraction(m.group(2))
        if m.group(1) == "-":
            c = -c
        out.add_term(m.group(3), c)
        pos = m.end()
        first = False
    return out


def write_lp(sys: LinearSystem, out=None) -> str:
    buf = io.StringIO()
    buf.write("# exact LP dump\n")
    if sys.objective is None:
        buf.write("feasibility\n")
    else:
        sense, c = sys.objective
        buf.write(f"{'minimize' if sense == 'min' else 'maximize'}: {format_combo(c)}\n")
    free = [v for v in sys.variables if v not in sys.nonneg]
    nonneg = [v for v in sys.variables if v in sys.nonneg]
    for label, vs in (("free", free), ("nonneg", nonneg)):
        for i in range(0, len(vs), 20):
            buf.write(f"{label}: {' '.join(vs[i:i + 20])}\n")
    for tag, c in sys.equalities:
        buf.write(f"eq {tag}: {format_combo(c)} = 0\n")
    for tag, c in sys.inequalities:
        buf.write(f"ge {tag}: {format_combo(c)} >= 0\n")
    text = buf.getvalue()
    if out is not None:
        out.write(text)
    return text


def read_lp(text: str) -> LinearSystem:
    sys = LinearSystem()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            if line == "feasibility":
                sys.objective = None
            elif line.startswith(("minimize:", "maximize:")):
                head, body = line.split(":", 1)
                sys.objective = ("min" if head == "minimize" else "max", parse_combo(body))
            elif line.startswith(("free:", "nonneg:")):
                head, body = line.split(":", 1)
                for v in body.split():
                    sys.add_var(v, nonneg=head == "nonneg")
            elif line.startswith("eq ") or line.startswith("ge "):
                kind, rest = line.split(" ", 1)
                tag, body = rest.split(": ", 1)
                suffix = "= 0" if kind == "eq" else ">= 0"
                body = body.strip()
                if not body.endswith(suffix):
                    raise ValueError(f"expected '{suffix}' at end of line")
                combo = parse_combo(body[: -len(suffix)])
                (sys.add_eq if kind == "eq" else sys.add_ge)(tag.strip(), combo)
            else:
                raise ValueError(f"unknown statement {line.split()[0]!r}")
        except ValueError as e:
            raise ValueError(f"line {lineno}: {e}") from None
    sys.check_closed()
    return sys


def write_solution(sol: Solution) -> str:
    lines = [f"status {sol.status}"]
    if sol.objective_value is not None:
        lines.append(f"objective {format_number(sol.objective_value)}")
    for v, x in sol.assignment.items():
        lines.append(f"{v} = {format_number(x)}")
    return "\n".join(lines) + "\n"


def read_solution(text: str) -> Solution:
    """Parse solver output: a ``status <name>`` line and ``var = value`` lines.

    Values may be rationals or decimal floats; floats are converted exactly.
    """
    status = None
    assignment: Dict[str, Fraction] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("status"):
            name = line.split(None, 1)[1].strip()
            status = Status(name)
        elif line.startswith("objective"):
            continue
        else:
            v, x = (s.strip() for s in line.split("=", 1))
            assignment[v] = Fraction(x)
    if status is None:
        raise ValueError("solver output lacks a status line")
    return Solution(status, assignment)


# -- backends ------------------------------------------------------------------------

EXTERNAL_TOLERANCE = Fraction(1, 10**6)


def solve_external(sys: LinearSystem, command: str, timeout: Optional[float] = None) -> Solution:
    """Run ``command`` with the LP text on stdin; verify whatever it returns.

    A point violating any constraint by more than 1e-6 is rejected.  Smaller
    residuals are accepted with the objective recomputed exactly at the
    returned point; such answers are labelled Feasible rather than Optimal
    because no exact optimality certificate is available.
    """
    try:
        proc = subprocess.run(shlex.split(command), input=write_lp(sys), capture_output=True,
                              text=True, timeout=timeout)
    except subprocess.TimeoutExpired:
        return Solution(Status.TIMEOUT, message="external solver timed out")
    if proc.returncode != 0:
        return Solution(Status.REJECTED, message=f"external solver failed: {proc.stderr.strip()[:200]}")
    try:
        sol = read_solution(proc.stdout)
    except ValueError as e:
        return Solution(Status.REJECTED, message=f"unreadable solver output: {e}")
    if not sol.ok:
        return sol
    unknown = set(sol.assignment) - set(sys.variables)
    if unknown:
        return Solution(Status.REJECTED, message=f"solver returned unknown variables {sorted(unknown)[:5]}")
    full = {v: sol.assignment.get(v, Fraction(0)) for v in sys.variables}
    worst = max((r for _, r in residuals(sys, full)), default=Fraction(0))
    if worst > EXTERNAL_TOLERANCE:
        return Solution(Status.REJECTED, full,
                        message=f"external answer violates a constraint by {float(worst):.3g}")
    if worst:
        # re-solve exactly on the columns the external answer uses
        support = {v for v, x in full.items() if abs(x) > EXTERNAL_TOLERANCE}
        exact = simplex(_restrict(sys, support), time_limit=timeout)
        if exact.ok:
            point = {v: exact.assignment.get(v, Fraction(0)) for v in sys.variables}
            out = Solution(Status.FEASIBLE, point,
                           message=f"external answer off by {float(worst):.3g}; repaired exactly on its support")
            if sys.objective is not None:
                out.objective_value = sys.objective[1].value(point)
            return out
    out = Solution(Status.FEASIBLE if worst else sol.status, full,
                   message="verified externally" + (f" up to residual {float(worst):.3g}" if worst else ""))
    if sys.objective is not None:
        out.objective_value = sys.objective[1].value(full)
    return out


def _restrict(sys: LinearSystem, cols: set) -> LinearSystem:
    """Same rows with every variable outside ``cols`` fixed at zero."""
    sub = LinearSystem()
    for v in sys.variables:
        if v in cols:
            sub.add_var(v, v in sys.nonneg)
    for group, add in ((sys.equalities, sub.add_eq), (sys.inequalities, sub.add_ge)):
        for tag, c in group:
            add(tag, LinearCombo({v: a for v, a in c.terms.items() if v in cols}, c.const))
    if sys.objective is not None:
        sense, c = sys.objective
        sub.objective = (sense, LinearCombo({v: a for v, a in c.terms.items() if v in cols}, c.const))
    return sub


@dataclass
class _FloatAnswer:
    support: set
    duals: Dict[str, Fraction]
    value: float
    point: Dict[str, float]


def _float_solve(sys: LinearSystem, tol: float = 1e-9) -> Optional[_FloatAnswer]:
    """HiGHS optimum via scipy, or None if scipy is missing or HiGHS reports no optimum."""
    try:
        import numpy as np
        import scipy.sparse as sparse
        from scipy.optimize import linprog
    except ImportError:
        return None
    names = list(sys.variables)
    idx = {v: i for i, v in enumerate(names)}

    def matrix(group, sign):
        if not group:
            return None, None
        r, c, a, b = [], [], [], []
        for i, (_, combo) in enumerate(group):
            for v, coef in combo.terms.items():
                r.append(i)
                c.append(idx[v])
                a.append(sign * float(coef))
            b.append(-sign * float(combo.const))
        return sparse.csr_matrix((a, (r, c)), shape=(len(group), len(names))), np.array(b)

    a_eq, b_eq = matrix(sys.equalities, 1)
    a_ub, b_ub = matrix(sys.inequalities, -1)
    cost = np.zeros(len(names))
    if sys.objective is not None:
        sense, combo = sys.objective
        for v, coef in combo.terms.items():
            cost[idx[v]] = float(coef) if sense == "min" else -float(coef)
    bounds = [(0, None) if v in sys.nonneg else (None, None) for v in names]
    try:
        res = linprog(cost, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq, bounds=bounds, method="highs")
    except ValueError:
        return None
    if res.status != 0:
        return None
    # nonzero columns plus nonnegative columns priced at zero (the optimal face)
    keep = {v for v, x in zip(names, res.x) if abs(x) > tol}
    marg = getattr(getattr(res, "lower", None), "marginals", None)
    if marg is not None:
        keep |= {v for v, m in zip(names, marg) if v in sys.nonneg and abs(m) <= 1e-7}
    duals: Dict[str, Fraction] = {}
    # scipy reports d(objective)/d(rhs); with rows written as a.x + b (=,>=) 0
    # these are the multipliers y of the certificate (negated for >= rows)
    for prefix, group, sign in (("eq", "eqlin", 1), ("ge", "ineqlin", -1)):
        m = getattr(getattr(res, group, None), "marginals", None)
        if m is None:
            continue
        for i, y in enumerate(m):
            y = Fraction(float(y) * sign).limit_denominator(10**6)
            if y:
                duals[f"{prefix}{i}"] = y
    return _FloatAnswer(keep, duals, float(res.fun), dict(zip(names, map(float, res.x))))


def _columns(sys: LinearSystem) -> Dict[str, List[Tuple[str, Fraction]]]:
    cols: Dict[str, List[Tuple[str, Fraction]]] = {v: [] for v in sys.variables}
    for prefix, group in (("eq", sys.equalities), ("ge", sys.inequalities)):
        for i, (_, c) in enumerate(group):
            for v, a in c.terms.items():
                cols[v].append((f"{prefix}{i}", a))
    return cols


def _priced_out(sys: LinearSystem, column_view, duals: Mapping[str, Fraction], skip=()) -> set:
    """Columns whose exact reduced cost under ``duals`` violates optimality."""
    sense, combo = sys.objective
    sign = 1 if sense == "min" else -1
    bad = set()
    for v in sys.variables:
        if v in skip:
            continue
        r = sign * combo.terms.get(v, Fraction(0))
        r -= sum((duals.get(key, 0) * a for key, a in column_view[v]), Fraction(0))
        if (v in sys.nonneg and r < 0) or (v not in sys.nonneg and r != 0):
            bad.add(v)
    return bad


def guided_simplex(sys: LinearSystem, max_pivots: int = 10**6, time_limit: Optional[float] = None,
                   max_rounds: int = 4, round_pivots: int = 3000) -> Solution:
    """Exact solve of ``sys`` on a column subset chosen by a float solver (see module doc).

    The returned point is always exactly feasible.  Status Optimal means a
    dual certificate was verified exactly (from the restricted solve or from
    rationalized float duals); otherwise the answer is labelled Feasible.
    Column-generation rounds after the first are capped at ``round_pivots``
    pivots each, so a hard certification gives up instead of stalling.
    """
    start = time.monotonic()

    def remaining():
        return None if time_limit is None else max(time_limit - (time.monotonic() - start), 0.0)

    fa = _float_solve(sys)
    if fa is None:
        return simplex(sys, max_pivots, time_limit)
    cols = set(fa.support)
    if sys.objective is not None:
        cols |= set(sys.objective[1].terms)
    column_view = _columns(sys) if sys.objective is not None else {}
    pivots = 0
    widened = False
    best: Optional[Solution] = None
    for rnd in range(max_rounds):
        cap = max(max_pivots - pivots, 1)
        if rnd and best is not None:
            cap = min(cap, round_pivots)
        sol = simplex(_restrict(sys, cols), cap, remaining())
        pivots += sol.pivots
        if sol.status == Status.TIMEOUT:
            break
        if not sol.ok:
            if widened:
                break
            cols |= {v for v in sys.variables if v not in sys.nonneg}
            widened = True
            continue
        full = {v: sol.assignment.get(v, Fraction(0)) for v in sys.variables}
        if sys.objective is None:
            return Solution(Status.FEASIBLE, full, pivots=pivots)
        value = sys.objective[1].value(full)
        best = Solution(Status.FEASIBLE, full, value, None, pivots)
        for duals in (sol.duals or {}, fa.duals):
            cand = Solution(Status.OPTIMAL, full, value, dict(duals), pivots)
            if check_dual_certificate(sys, cand):
                return cand
        add = _priced_out(sys, column_view, sol.duals or {}, skip=cols)
        if not add:
            break
        cols |= add
    if best is not None:
        best.pivots = pivots
        best.message = (f"exact feasible point; optimality not certified "
                        f"(float optimum {fa.value:.9g})")
        return best
    sol = simplex(sys, max(max_pivots - pivots, 1), remaining())
    sol.pivots += pivots
    return sol


def solve(sys: LinearSystem, backend: str = "exact", **kw) -> Solution:
    """Dispatch on backend name: ``exact``, ``exact-tableau`` or ``external:<command>``.

    ``exact`` uses :func:`guided_simplex`; ``exact-tableau`` runs the plain
    tableau simplex on the whole system.
    """
    if backend == "exact":
        return guided_simplex(sys, **kw)
    if backend == "exact-tableau":
        return simplex(sys, **kw)
    if backend.startswith("external:"):
        return solve_external(sys, backend[len("external:"):], timeout=kw.get("time_limit"))
    raise ValueError(f"unknown solver backend {backend!r} (use 'exact', 'exact-tableau' or 'external:<cmd>')")


def main(argv=None) -> int:
    """Solve an LP read from stdin and print it in the solution format.

    ``--float`` answers with HiGHS floats instead of the exact solver, which
    makes this module usable as an ``external:`` backend for testing.
    """
    import argparse
    import sys as _sys

    ap = argparse.ArgumentParser(prog="python3 -m diffcost.lp")
    ap.add_argument("--float", action="store_true", help="answer with HiGHS floating-point values")
    a = ap.parse_args(argv)
    lp = read_lp(_sys.stdin.read())
    if a.float:
        ans = _float_solve(lp)
        if ans is None:
            _sys.stdout.write(f"status {Status.REJECTED}\n")
            return 1
        _sys.stdout.write(f"status {Status.OPTIMAL}\n" + "".join(f"{v} = {x!r}\n" for v, x in ans.point.items()))
        return 0
    _sys.stdout.write(write_solution(solve(lp)))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
