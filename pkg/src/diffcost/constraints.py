"""Polynomial templates and the implication constraints they must satisfy.

Every constraint has the shape ``premises >= 0  =>  conclusion(x) >= 0`` where
the premises are affine in program (and fresh nondet) variables and the
conclusion is a polynomial whose coefficients are linear in LP unknowns.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

from .poly import (LinearCombo, Monomial, Polynomial, SymbolicPoly, mono_str, monomials,
                   sym_add_scaled, sym_instantiate, sym_prune)
from .ts import (COST, Assertion, Nondet, TransitionSystem, dedupe, fresh_name,
                 substitute_update)

InvariantMap = Mapping[str, Assertion]


class ConstraintError(ValueError):
    pass


@dataclass
class TemplateMap:
    """Per-location polynomial with one LP unknown per monomial."""

    tag: str
    variables: Tuple[str, ...]
    degree: int
    basis: Tuple[Monomial, ...]
    unknowns: Dict[str, Dict[Monomial, str]]

    def symbolic(self, loc: str) -> SymbolicPoly:
        return {m: LinearCombo.var(u) for m, u in self.unknowns[loc].items()}

    def all_unknowns(self) -> List[str]:
        return [u for loc in self.unknowns for u in self.unknowns[loc].values()]

    def instantiate(self, loc: str, assignment: Mapping[str, Fraction]) -> Polynomial:
        return Polynomial({m: assignment.get(u, 0) for m, u in self.unknowns[loc].items()})

    def instantiate_all(self, assignment: Mapping[str, Fraction]) -> Dict[str, Polynomial]:
        return {loc: self.instantiate(loc, assignment) for loc in self.unknowns}


def fix_templates(ts: TransitionSystem, d: int, tag: str, include_cost: bool = False) -> TemplateMap:
    """Template ``sum_f u[tag:loc:f] * f`` over all monomials of degree <= d."""
    if d < 0:
        raise ConstraintError("template degree must be >= 0")
    variables = tuple(v for v in ts.variables if include_cost or v != COST)
    basis = tuple(monomials(variables, d))
    unknowns = {loc: {m: f"{tag}:{loc}:{mono_str(m)}" for m in basis} for loc in ts.locations}
    return TemplateMap(tag, variables, d, basis, unknowns)


@dataclass
class ImplicationConstraint:
    premises: Tuple[Polynomial, ...]
    conclusion: SymbolicPoly
    tag: str

    def degree(self) -> int:
        return max((sum(e for _, e in m) for m in self.conclusion), default=0)

    def unknowns(self) -> set:
        return {u for lc in self.conclusion.values() for u in lc.terms}

    def instantiate(self, assignment: Mapping[str, Fraction]) -> Polynomial:
        return sym_instantiate(self.conclusion, assignment)

    def premises_hold(self, x: Mapping[str, int]) -> bool:
        return all(p.eval(x) >= 0 for p in self.premises)


def _make(premises: Iterable[Polynomial], conclusion: SymbolicPoly, tag: str) -> Optional[ImplicationConstraint]:
    prem = dedupe(premises)
    if any(p.is_constant() and p.constant() < 0 for p in prem):
        return None  # premises unsatisfiable: the implication holds vacuously
    return ImplicationConstraint(prem, sym_prune(conclusion), tag)


def _substituted(tmpl: TemplateMap, loc: str, up, tid: str) -> SymbolicPoly:
    """Template at ``loc`` evaluated at the post-state of update ``up``."""
    acc: SymbolicPoly = {}
    for m, u in tmpl.unknowns[loc].items():
        sym_add_scaled(acc, substitute_update(Polynomial({m: 1}), up, tid), u)
    return acc


def _cost_delta(t) -> Polynomial:
    e = t.update.entry(COST)
    if isinstance(e, Nondet):
        raise ConstraintError(f"transition {t.tid} updates cost nondeterministically; "
                              "cost must be updated by a polynomial")
    return e - Polynomial.var(COST)


def _nondet_premises(t) -> List[Polynomial]:
    out = []
    for v, e in t.update.entries:
        if isinstance(e, Nondet):
            y = Polynomial.var(fresh_name(v, t.tid))
            if e.lo is not None:
                out.append(y - e.lo)
            if e.hi is not None:
                out.append(e.hi - y)
    return out


def _transition_constraints(ts: TransitionSystem, inv: InvariantMap, tmpl: TemplateMap,
                            kind: str) -> List[ImplicationConstraint]:
    out = []
    for t in ts.transitions:
        delta = _cost_delta(t)
        here = tmpl.symbolic(t.source)
        there = _substituted(tmpl, t.target, t.update, t.tid)
        concl: SymbolicPoly = {}
        if kind == "pf":
            # phi(l, x) - phi(l', Up(x)) - delta >= 0
            for m, lc in here.items():
                concl.setdefault(m, LinearCombo()).iadd(lc)
            for m, lc in there.items():
                concl.setdefault(m, LinearCombo()).iadd(lc, -1)
            sym_add_scaled(concl, delta, None, -1)
        else:
            # chi(l', Up(x)) + delta - chi(l, x) >= 0
            for m, lc in there.items():
                concl.setdefault(m, LinearCombo()).iadd(lc)
            for m, lc in here.items():
                concl.setdefault(m, LinearCombo()).iadd(lc, -1)
            sym_add_scaled(concl, delta, None, 1)
        prem = list(inv[t.source].conjuncts) + list(t.guard.conjuncts) + _nondet_premises(t)
        c = _make(prem, concl, f"{tmpl.tag}:{t.tid}")
        if c is not None:
            out.append(c)
    end = tmpl.symbolic(ts.terminal)
    concl = {m: (lc if kind == "pf" else -lc) for m, lc in end.items()}
    c = _make(inv[ts.terminal].conjuncts, concl, f"{tmpl.tag}:term")
    if c is not None:
        out.append(c)
    return out


def collect_pf_constraints(ts: TransitionSystem, inv: InvariantMap, tmpl: TemplateMap) -> List[ImplicationConstraint]:
    """Potential-function conditions: cost is paid for by the drop in potential,
    and the potential is nonnegative at the terminal location."""
    return _transition_constraints(ts, inv, tmpl, "pf")


def collect_antipf_constraints(ts: TransitionSystem, inv: InvariantMap, tmpl: TemplateMap) -> List[ImplicationConstraint]:
    """Anti-potential conditions: the rise in anti-potential never exceeds the
    cost paid, and the anti-potential is nonpositive at the terminal location."""
    return _transition_constraints(ts, inv, tmpl, "anti")


def _check_same_vars(a: TemplateMap, b: TemplateMap):
    if a.variables != b.variables:
        raise ConstraintError(f"template variable sets differ: {a.variables} vs {b.variables}")


def _gap(upper: TemplateMap, upper_loc: str, lower: TemplateMap, lower_loc: str) -> SymbolicPoly:
    """upper(l0) - lower(l0) as a symbolic polynomial."""
    acc: SymbolicPoly = {}
    for m, lc in upper.symbolic(upper_loc).items():
        acc.setdefault(m, LinearCombo()).iadd(lc)
    for m, lc in lower.symbolic(lower_loc).items():
        acc.setdefault(m, LinearCombo()).iadd(lc, -1)
    return acc


def collect_diffcost_constraint(theta0: Assertion, ts_new: TransitionSystem, tmpl_new: TemplateMap,
                                ts_old: TransitionSystem, tmpl_old: TemplateMap,
                                t: str = "t") -> ImplicationConstraint:
    """theta0  =>  t - (phi_new(l0, x) - chi_old(l0, x)) >= 0."""
    _check_same_vars(tmpl_new, tmpl_old)
    concl = {m: -lc for m, lc in _gap(tmpl_new, ts_new.initial, tmpl_old, ts_old.initial).items()}
    concl.setdefault((), LinearCombo()).add_term(t, 1)
    return _make(theta0.conjuncts, concl, "diffcost") or ImplicationConstraint((), {}, "diffcost")


def collect_symbolic_bound_constraint(theta0: Assertion, ts_new: TransitionSystem, tmpl_new: TemplateMap,
                                      ts_old: TransitionSystem, tmpl_old: TemplateMap,
                                      p: Polynomial) -> ImplicationConstraint:
    """theta0  =>  p(x) - phi_new(l0, x) + chi_old(l0, x) >= 0; needs deg(p) <= d."""
    _check_same_vars(tmpl_new, tmpl_old)
    if p.degree() > tmpl_new.degree:
        raise ConstraintError(f"bound has degree {p.degree()} > template degree {tmpl_new.degree}")
    unknown = p.variables() - set(tmpl_new.variables)
    if unknown:
        raise ConstraintError(f"bound mentions variables outside the templates: {sorted(unknown)}")
    concl = {m: -lc for m, lc in _gap(tmpl_new, ts_new.initial, tmpl_old, ts_old.initial).items()}
    sym_add_scaled(concl, p, None, 1)
    return _make(theta0.conjuncts, concl, "bound") or ImplicationConstraint((), {}, "bound")


def collect_refutation_constraints(x0: Mapping[str, int], theta0: Assertion,
                                   ts_new: TransitionSystem, tmpl_new_anti: TemplateMap,
                                   ts_old: TransitionSystem, tmpl_old_pf: TemplateMap,
                                   t: Fraction, eps: Fraction) -> ImplicationConstraint:
    """Ground constraint chi_new(l0, x0) - phi_old(l0, x0) - t - eps >= 0.

    It has no premises, so its translation reduces to a single linear
    inequality.  The PF/anti-PF constraint sets for the swapped roles are
    collected separately with the usual functions.
    """
    _check_same_vars(tmpl_new_anti, tmpl_old_pf)
    if eps <= 0:
        raise ConstraintError("eps must be positive")
    if not theta0.holds(x0):
        raise ConstraintError(f"witness input {dict(x0)} does not satisfy theta0")
    lc = LinearCombo()
    for m, u in tmpl_new_anti.unknowns[ts_new.initial].items():
        lc.add_term(u, Polynomial({m: 1}).eval(x0))
    for m, u in tmpl_old_pf.unknowns[ts_old.initial].items():
        lc.add_term(u, -Polynomial({m: 1}).eval(x0))
    lc.add_term(None, -(Fraction(t) + Fraction(eps)))
    return ImplicationConstraint((), {(): lc}, "refute")


def collect_precision_constraints(ts: TransitionSystem, inv: InvariantMap, tmpl_pf: TemplateMap,
                                  tmpl_anti: TemplateMap, p: str = "p") -> List[ImplicationConstraint]:
    """PF and anti-PF conditions on one system plus theta0 => p - (phi - chi)(l0) >= 0."""
    out = collect_pf_constraints(ts, inv, tmpl_pf) + collect_antipf_constraints(ts, inv, tmpl_anti)
    concl = {m: -lc for m, lc in _gap(tmpl_pf, ts.initial, tmpl_anti, ts.initial).items()}
    concl.setdefault((), LinearCombo()).add_term(p, 1)
    c = _make(ts.theta0.conjuncts, concl, "precision")
    if c is not None:
        out.append(c)
    return out
