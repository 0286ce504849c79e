"""End-to-end analysis pipelines and their reports."""

from __future__ import annotations

import itertools
import json
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .constraints import (ImplicationConstraint, collect_antipf_constraints,
                          collect_diffcost_constraint, collect_pf_constraints,
                          collect_precision_constraints, collect_refutation_constraints,
                          collect_symbolic_bound_constraint, fix_templates)
from .handelman import Fragment, assemble, translate
from .invariants import (InvariantMap, merge_annotations, project,
                         propagate_intervals)
from .lp import LinearSystem, Solution, Status, check_dual_certificate, solve, write_lp
from .polyhedra import drop_redundant, propagate_polyhedra
from .oracle import RunBudget, check_witness, default_box
from .poly import LinearCombo, Polynomial, format_number
from .ts import (COST, Assertion, TransitionSystem, cost_relevant, dedupe, normalize_affine,
                 slice_system)
from .witness import Witness, extract_witness


class InputError(ValueError):
    """Inputs are inconsistent (mismatched theta0, bad witness input, ...)."""


@dataclass
class Options:
    degree: int = 2
    prodk: Optional[int] = None
    include_cost: bool = False
    solver: str = "exact"
    eps: Fraction = Fraction(1)
    widen_after: int = 5
    narrow_passes: int = 1
    domain: str = "polyhedra"
    slice: bool = True
    max_pivots: int = 10**6
    time_limit: Optional[float] = None
    emit_lp: Optional[str] = None

    @property
    def K(self) -> int:
        return self.degree if self.prodk is None else self.prodk

    def params(self) -> Dict[str, object]:
        return {"d": self.degree, "K": self.K, "solver": self.solver, "eps": format_number(Fraction(self.eps)),
                "include_cost": self.include_cost, "widen_after": self.widen_after, "domain": self.domain}


@dataclass
class AnalysisReport:
    mode: str
    status: str
    solver_status: str = ""
    threshold_raw: Optional[Fraction] = None
    witness: Optional[Witness] = None
    systems: Dict[str, TransitionSystem] = field(default_factory=dict)
    invariants: Dict[str, InvariantMap] = field(default_factory=dict)
    params: Dict[str, object] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)
    lp_stats: Dict[str, int] = field(default_factory=dict)
    extra: Dict[str, object] = field(default_factory=dict)
    certified: Optional[bool] = None
    oracle_check: Optional[str] = None
    # pipeline internals kept for inspection; never serialized
    lp: Optional[LinearSystem] = field(default=None, repr=False, compare=False)
    constraints: List[ImplicationConstraint] = field(default_factory=list, repr=False, compare=False)
    fragments: List[Fragment] = field(default_factory=list, repr=False, compare=False)
    solution: Optional[Solution] = field(default=None, repr=False, compare=False)

    @property
    def threshold_int(self) -> Optional[int]:
        if self.threshold_raw is None:
            return None
        return int(self.threshold_raw.numerator // self.threshold_raw.denominator)

    @property
    def success(self) -> bool:
        return self.status != "Unknown"

    def to_dict(self) -> Dict[str, object]:
        d: Dict[str, object] = {
            "mode": self.mode,
            "status": self.status,
            "solver_status": self.solver_status,
            "threshold_raw": None if self.threshold_raw is None else format_number(self.threshold_raw),
            "threshold_int": self.threshold_int,
            "witness": None,
            "invariants": {},
            "parameters": self.params,
            "timings": {k: round(v, 4) for k, v in self.timings.items()},
            "warnings": self.warnings,
            "lp": self.lp_stats,
            "optimality_certified": self.certified,
            "oracle_check": self.oracle_check,
        }
        d.update(self.extra)
        if self.witness is not None:
            w = {}
            for role, polys in self.witness.bounds.items():
                suffix = role.split("_")[-1]
                ts = self.systems.get(suffix)
                if ts is None and len(self.systems) == 1:
                    ts = next(iter(self.systems.values()))
                order = ts.var_order if ts else None
                w[role] = {loc: p.to_str(order) for loc, p in polys.items()}
            d["witness"] = w
        for tag, inv in self.invariants.items():
            ts = self.systems[tag]
            d["invariants"][tag] = {loc: inv[loc].to_str(ts.var_order) or "true" for loc in ts.locations}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_text(self) -> str:
        d = self.to_dict()
        lines = [f"mode: {self.mode}", f"status: {self.status}"]
        if self.solver_status:
            lines.append(f"solver status: {self.solver_status}")
        if d["threshold_raw"] is not None:
            label = {"diff": "threshold", "single": "precision", "refute": "refuted threshold"}.get(
                self.mode, "value")
            lines.append(f"{label}: {d['threshold_raw']} (integer floor {d['threshold_int']})")
        for k in ("x0", "bound"):
            if k in d:
                lines.append(f"{k}: {d[k]}")
        if self.certified is not None:
            lines.append(f"optimality certificate: {'checked' if self.certified else 'not available'}")
        if self.oracle_check:
            lines.append(f"oracle check: {self.oracle_check}")
        if d["witness"]:
            lines.append("witness:")
            for role, polys in d["witness"].items():
                for loc, p in polys.items():
                    lines.append(f"  {role}[{loc}] = {p}")
        if d["invariants"]:
            lines.append("invariants assumed:")
            for tag, m in d["invariants"].items():
                for loc, a in m.items():
                    lines.append(f"  {tag}[{loc}]: {a}")
        lines.append("parameters: " + ", ".join(f"{k}={v}" for k, v in self.params.items()))
        if self.lp_stats:
            lines.append("lp: " + ", ".join(f"{k}={v}" for k, v in self.lp_stats.items()))
        lines.append("timings (s): " + ", ".join(f"{k}={v:.3f}" for k, v in self.timings.items()))
        for w in self.warnings:
            lines.append(f"warning: {w}")
        return "\n".join(lines) + "\n"


# -- helpers ---------------------------------------------------------------------

def _atom_key(a: Polynomial):
    return tuple(sorted(normalize_affine(a).terms.items()))


def align_pair(new: TransitionSystem, old: TransitionSystem) -> Tuple[TransitionSystem, TransitionSystem]:
    """Give both systems the same variables and theta0.

    A variable that occurs in only one system is added to the other, where it
    is never read or written.  Theta0 conjuncts that only constrain such
    variables are copied across; all remaining conjuncts must agree.
    """
    only_new = [v for v in new.variables if v not in old.variables]
    only_old = [v for v in old.variables if v not in new.variables]
    variables = [v for v in new.variables if v != COST] + only_old
    variables = [v for v in variables if v != COST] + [COST]

    def split(theta: Assertion, exclusive):
        own = [a for a in theta.conjuncts if a.variables() and a.variables() <= set(exclusive)]
        shared = [a for a in theta.conjuncts if not (a.variables() and a.variables() <= set(exclusive))]
        return own, shared

    own_new, shared_new = split(new.theta0, only_new)
    own_old, shared_old = split(old.theta0, only_old)
    for a in shared_new + shared_old:
        if a.variables() & set(only_new + only_old):
            raise InputError(f"theta0 conjunct {a} >= 0 relates variables private to one version")
    if {_atom_key(a) for a in shared_new} != {_atom_key(a) for a in shared_old}:
        raise InputError("the two versions have different theta0 on shared variables")
    theta = Assertion.of(dedupe(shared_new + own_new + own_old))

    def rebuild(ts):
        return TransitionSystem(tuple(variables), ts.transitions, ts.initial, ts.terminal, theta,
                                ts.locations, ts.name).validate()

    return rebuild(new), rebuild(old)


def invariants_for(ts: TransitionSystem, opts: Options, user: Optional[Mapping[str, Assertion]]) -> InvariantMap:
    exclude = () if opts.include_cost else (COST,)
    auto = propagate_intervals(ts, opts.widen_after, exclude=exclude, narrow_passes=opts.narrow_passes)
    if opts.domain == "polyhedra":
        poly = propagate_polyhedra(ts, opts.widen_after, exclude=exclude,
                                   narrow_passes=max(opts.narrow_passes, 2))
        auto = {loc: Assertion.of(drop_redundant(list(auto[loc].conjuncts) + list(poly[loc].conjuncts),
                                                 [v for v in ts.variables if v not in exclude]))
                for loc in ts.locations}
    elif opts.domain != "intervals":
        raise InputError(f"unknown invariant domain {opts.domain!r} (use intervals or polyhedra)")
    return merge_annotations(auto, user or {})


def _condense(warnings: List[str]) -> List[str]:
    out, loose = [], 0
    for w in warnings:
        if "unbounded" in w:
            loose += 1
        elif w not in out:
            out.append(w)
    if loose:
        out.append(f"{loose} constraint(s) have premises that leave some variable unbounded; "
                   "the translation may be incomplete for them")
    return out


class _Pipeline:
    def __init__(self, opts: Options):
        self.opts = opts
        self.timings: Dict[str, float] = {}
        self.warnings: List[str] = []
        self._t = time.perf_counter()

    def lap(self, name: str):
        now = time.perf_counter()
        self.timings[name] = self.timings.get(name, 0.0) + now - self._t
        self._t = now

    def translate(self, constraints: Sequence[ImplicationConstraint], prefix: str = "h") -> List[Fragment]:
        frs = [translate(c, self.opts.K, f"{prefix}{i}") for i, c in enumerate(constraints)]
        for f in frs:
            self.warnings.extend(f.warnings)
        self.lap("translate")
        return frs

    def solve(self, sys: LinearSystem) -> Solution:
        if self.opts.emit_lp:
            with open(self.opts.emit_lp, "w") as fh:
                write_lp(sys, fh)
        kw = {"time_limit": self.opts.time_limit}
        if self.opts.solver in ("exact", "exact-tableau"):
            kw["max_pivots"] = self.opts.max_pivots
        sol = solve(sys, self.opts.solver, **kw)
        self.lap("solve")
        return sol

    def report(self, mode: str, status: str, sol: Optional[Solution], **kw) -> AnalysisReport:
        rep = AnalysisReport(mode, status, solver_status=str(sol.status) if sol else "",
                             params=self.opts.params(), timings=self.timings,
                             warnings=_condense(self.warnings), **kw)
        if sol is not None and sol.message:
            rep.warnings.append(f"solver: {sol.message}")
        return rep


# -- modes -----------------------------------------------------------------------

def _user_vars(*maps) -> set:
    out = set()
    for m in maps:
        for a in (m or {}).values():
            out |= a.variables()
    return out


def slice_pair(new: TransitionSystem, old: TransitionSystem, keep=()) -> Tuple[TransitionSystem, TransitionSystem]:
    """Remove variables that influence neither control flow nor cost in either version."""
    rel = cost_relevant(new, keep) | cost_relevant(old, keep)
    rel = cost_relevant(new, rel) | cost_relevant(old, rel)
    return slice_system(new, rel & set(new.variables)), slice_system(old, rel & set(old.variables))


def _diff_setup(new, old, opts, user_new, user_old, pl):
    if opts.slice:
        new, old = slice_pair(new, old, _user_vars(user_new, user_old))
    new, old = align_pair(new, old)
    inv_new = invariants_for(new, opts, user_new)
    inv_old = invariants_for(old, opts, user_old)
    pl.lap("invariants")
    return new, old, inv_new, inv_old


def analyze_diff(new: TransitionSystem, old: TransitionSystem, opts: Options = Options(),
                 user_new=None, user_old=None) -> AnalysisReport:
    """Minimize t subject to PF(new), anti-PF(old) and the differential constraint."""
    pl = _Pipeline(opts)
    new, old, inv_new, inv_old = _diff_setup(new, old, opts, user_new, user_old, pl)
    tn = fix_templates(new, opts.degree, "pf_new", opts.include_cost)
    to = fix_templates(old, opts.degree, "antipf_old", opts.include_cost)
    cs = (collect_pf_constraints(new, inv_new, tn) + collect_antipf_constraints(old, inv_old, to)
          + [collect_diffcost_constraint(new.theta0, new, tn, old, to, "t")])
    pl.lap("constraints")
    frs = pl.translate(cs)
    sys = assemble(tn.all_unknowns() + to.all_unknowns() + ["t"], frs, ("min", LinearCombo.var("t")))
    pl.lap("translate")
    sol = pl.solve(sys)
    rep = pl.report("diff", "Unknown", sol, systems={"new": new, "old": old},
                    invariants={"new": inv_new, "old": inv_old}, lp_stats=sys.stats())
    if sol.status == Status.OPTIMAL or sol.ok:
        rep.status = "Threshold"
        rep.witness = extract_witness(sol, {"pf_new": tn, "antipf_old": to}, "diff", "t")
        rep.threshold_raw = rep.witness.threshold_raw
        rep.certified = check_dual_certificate(sys, sol) if sol.status == Status.OPTIMAL else False
    rep.lp, rep.constraints, rep.fragments, rep.solution = sys, cs, frs, sol
    return rep


def analyze_verify(new: TransitionSystem, old: TransitionSystem, bound: Polynomial,
                   opts: Options = Options(), user_new=None, user_old=None) -> AnalysisReport:
    """Feasibility of PF(new), anti-PF(old) and theta0 => bound - (phi_new - chi_old) >= 0."""
    pl = _Pipeline(opts)
    new, old, inv_new, inv_old = _diff_setup(new, old, opts, user_new, user_old, pl)
    tn = fix_templates(new, opts.degree, "pf_new", opts.include_cost)
    to = fix_templates(old, opts.degree, "antipf_old", opts.include_cost)
    cs = (collect_pf_constraints(new, inv_new, tn) + collect_antipf_constraints(old, inv_old, to)
          + [collect_symbolic_bound_constraint(new.theta0, new, tn, old, to, bound)])
    pl.lap("constraints")
    frs = pl.translate(cs)
    sys = assemble(tn.all_unknowns() + to.all_unknowns(), frs, None)
    sol = pl.solve(sys)
    rep = pl.report("verify", "Unknown", sol, systems={"new": new, "old": old},
                    invariants={"new": inv_new, "old": inv_old}, lp_stats=sys.stats(),
                    extra={"bound": bound.to_str(new.var_order)})
    if sol.ok:
        rep.status = "Verified"
        rep.witness = extract_witness(sol, {"pf_new": tn, "antipf_old": to}, "verify")
    rep.lp, rep.constraints, rep.fragments, rep.solution = sys, cs, frs, sol
    return rep


def _default_value(lo, hi) -> int:
    """A value of an unspecified variable: 0 if the hull allows it, else the nearest end."""
    if lo is not None and lo > 0:
        return int(lo)
    if hi is not None and hi < 0:
        return int(hi)
    return 0


def complete_valuation(ts: TransitionSystem, partial: Mapping[str, int]) -> Dict[str, int]:
    """Extend ``partial`` to every variable.

    Variables left out take the value theta0 pins them to, or else a value
    inside theta0's interval hull (0 when allowed).  Any valuation satisfying
    theta0 is a legitimate refutation point, so the choice is sound.
    """
    hull = project(ts.theta0, list(ts.variables))
    if hull is None:
        raise InputError("theta0 is unsatisfiable")
    unknown = set(partial) - set(ts.variables)
    if unknown:
        raise InputError(f"witness input names unknown variables {sorted(unknown)}")
    out = {v: int(partial[v]) if v in partial else _default_value(*hull[v]) for v in ts.variables}
    if not ts.theta0.holds(out):
        raise InputError(f"witness input {out} does not satisfy theta0")
    return out


def theta0_corners(ts: TransitionSystem) -> List[Dict[str, int]]:
    """Corners of theta0's interval hull that satisfy theta0.

    A variable unbounded on some side contributes its finite ends, or the
    default value when it has none.
    """
    hull = project(ts.theta0, list(ts.variables))
    if hull is None:
        raise InputError("theta0 is unsatisfiable")
    free = []
    for v in ts.variables:
        lo, hi = hull[v]
        ends = {int(e) for e in (lo, hi) if e is not None} or {_default_value(lo, hi)}
        free.append((v, sorted(ends)))
    out = []
    for combo in itertools.product(*(vals for _, vals in free)):
        x = dict(zip((v for v, _ in free), combo))
        if ts.theta0.holds(x):
            out.append(x)
    if not out:
        raise InputError("no corner of theta0's interval hull satisfies theta0; give --x0")
    return out


def analyze_refute(new: TransitionSystem, old: TransitionSystem, t: Fraction,
                   x0: Optional[Mapping[str, int]] = None, opts: Options = Options(),
                   user_new=None, user_old=None) -> AnalysisReport:
    """Try to prove that ``t`` is not a threshold.

    Synthesizes an anti-PF for the new version and a PF for the old one with
    ``chi_new(l0, x0) - phi_old(l0, x0) >= t + eps``.  Without ``x0`` every
    corner of theta0's interval hull is tried in turn.
    """
    pl = _Pipeline(opts)
    new, old, inv_new, inv_old = _diff_setup(new, old, opts, user_new, user_old, pl)
    points = [complete_valuation(new, x0)] if x0 is not None else theta0_corners(new)
    tn = fix_templates(new, opts.degree, "antipf_new", opts.include_cost)
    to = fix_templates(old, opts.degree, "pf_old", opts.include_cost)
    cs = collect_antipf_constraints(new, inv_new, tn) + collect_pf_constraints(old, inv_old, to)
    pl.lap("constraints")
    frs = pl.translate(cs)
    rep = pl.report("refute", "Unknown", None, systems={"new": new, "old": old},
                    invariants={"new": inv_new, "old": inv_old},
                    extra={"t": format_number(Fraction(t)), "points_tried": 0})
    for x in points:
        ground = collect_refutation_constraints(x, new.theta0, new, tn, old, to, Fraction(t), Fraction(opts.eps))
        gfr = translate(ground, opts.K, "g")
        sys = assemble(tn.all_unknowns() + to.all_unknowns(), frs + [gfr], None)
        pl.lap("translate")
        sol = pl.solve(sys)
        rep.extra["points_tried"] += 1
        rep.solver_status = str(sol.status)
        rep.lp_stats = sys.stats()
        if sol.ok:
            rep.status = "Refuted"
            rep.extra["x0"] = x
            rep.witness = extract_witness(sol, {"antipf_new": tn, "pf_old": to}, "refute")
            rep.lp, rep.solution = sys, sol
            break
        if sol.status not in (Status.INFEASIBLE,):
            rep.warnings.append(f"solver returned {sol.status} at {x}")
    rep.timings = pl.timings
    rep.constraints, rep.fragments = cs, frs
    return rep


def analyze_single(ts: TransitionSystem, opts: Options = Options(), user=None) -> AnalysisReport:
    """Upper and lower cost bounds for one program with minimized gap p."""
    pl = _Pipeline(opts)
    if opts.slice:
        ts = slice_system(ts, cost_relevant(ts, _user_vars(user)))
    inv = invariants_for(ts, opts, user)
    pl.lap("invariants")
    tp = fix_templates(ts, opts.degree, "pf", opts.include_cost)
    ta = fix_templates(ts, opts.degree, "antipf", opts.include_cost)
    cs = collect_precision_constraints(ts, inv, tp, ta, "p")
    pl.lap("constraints")
    frs = pl.translate(cs)
    sys = assemble(tp.all_unknowns() + ta.all_unknowns() + ["p"], frs, ("min", LinearCombo.var("p")))
    sol = pl.solve(sys)
    rep = pl.report("single", "Unknown", sol, systems={"": ts}, invariants={"": inv},
                    lp_stats=sys.stats())
    if sol.ok:
        rep.status = "Bounded"
        rep.witness = extract_witness(sol, {"pf": tp, "antipf": ta}, "single", "p")
        rep.threshold_raw = rep.witness.threshold_raw
        rep.certified = check_dual_certificate(sys, sol) if sol.status == Status.OPTIMAL else False
    rep.lp, rep.constraints, rep.fragments, rep.solution = sys, cs, frs, sol
    return rep


def oracle_check_report(rep: AnalysisReport, box: Optional[Mapping[str, Tuple[int, int]]] = None,
                        budget: Optional[RunBudget] = None) -> bool:
    """Re-check a differential witness against brute-force enumeration on a small box."""
    new, old = rep.systems["new"], rep.systems["old"]
    rb = budget or RunBudget()
    rb.input_box = dict(box) if box else default_box(new, 3)
    res = check_witness(rep.witness, new, old, rb)
    rep.oracle_check = ("sound-verified" if res.ok else "FAILED") + \
        f" ({res.points} box points, {res.states} states)"
    if not res.ok:
        rep.warnings.extend(res.failures[:5])
    return res.ok
