"""Handelman-style translation of implication constraints into linear equalities.

For premises ``a_1 >= 0, ..., a_k >= 0`` the conclusion is required to equal
``sum_g c_g * g`` where ``g`` ranges over products of at most ``K`` premises
(the empty product is 1) and every ``c_g >= 0``.  Equating coefficients
monomial by monomial yields equalities that are linear in the template
unknowns and the multipliers.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from math import comb
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .constraints import ImplicationConstraint
from .lp import LinearSystem
from .poly import LinearCombo, Monomial, Polynomial, mono_str

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ProductTerm:
    factors: Tuple[int, ...]
    expansion: Polynomial


def prod_count(k: int, K: int) -> int:
    """Number of multisets of size 0..K over k premises."""
    if k == 0:
        return 1  # only the empty product
    return sum(comb(k + j - 1, j) for j in range(K + 1))


def prod_k(premises: Sequence[Polynomial], K: int, dedupe: bool = True) -> List[ProductTerm]:
    if K < 0:
        raise ValueError("K must be >= 0")
    out: List[ProductTerm] = []
    seen = set()
    # build level by level so each product reuses its prefix expansion
    level = [((), Polynomial.const(1))]
    for size in range(K + 1):
        nxt = []
        for factors, poly in level:
            if not dedupe or poly not in seen:
                seen.add(poly)
                out.append(ProductTerm(factors, poly))
            if size < K:
                start = factors[-1] if factors else 0
                for i in range(start, len(premises)):
                    nxt.append((factors + (i,), poly * premises[i]))
        level = nxt
    return out


@dataclass
class Fragment:
    system: LinearSystem
    products: List[ProductTerm]
    multipliers: List[str]
    warnings: List[str] = field(default_factory=list)


def _unbounded_vars(premises: Sequence[Polynomial], conclusion_vars: set) -> List[str]:
    from .invariants import TOP, refine

    box = refine({v: TOP for v in conclusion_vars}, premises)
    if box is None:
        return []
    return sorted(v for v, (lo, hi) in box.items() if lo is None or hi is None)


def translate(c: ImplicationConstraint, K: int, prefix: str) -> Fragment:
    """Linear equalities equivalent (for the chosen product basis) to ``c``."""
    sys = LinearSystem()
    if not c.conclusion:
        return Fragment(sys, [], [])
    products = prod_k(c.premises, K)
    names = [sys.add_var(f"{prefix}:c{i}", nonneg=True) for i in range(len(products))]
    warnings = []
    if c.degree() > K:
        warnings.append(f"{c.tag}: conclusion degree {c.degree()} exceeds K={K}; "
                        "higher coefficients are forced to zero")
    cvars = {v for m in c.conclusion for v, _ in m}
    if c.premises:
        loose = _unbounded_vars(c.premises, cvars)
        if loose:
            warnings.append(f"{c.tag}: premises leave {', '.join(loose)} unbounded "
                            "(translation may be incomplete)")
    rows: Dict[Monomial, LinearCombo] = {m: lc.copy() for m, lc in c.conclusion.items()}
    for name, g in zip(names, products):
        for m, coef in g.expansion.terms.items():
            lc = rows.get(m)
            if lc is None:
                lc = rows[m] = LinearCombo()
            lc.add_term(name, -coef)
    for m in sorted(rows, key=lambda m: (sum(e for _, e in m), m)):
        lc = rows[m]
        if not lc.is_zero():
            sys.add_eq(f"{c.tag}:{mono_str(m)}", lc)
    return Fragment(sys, products, names, warnings)


def assemble(free_unknowns: Iterable[str], fragments: Iterable[Fragment],
             objective: Optional[Tuple[str, LinearCombo]] = None) -> LinearSystem:
    """Concatenate fragments over a shared set of free template unknowns."""
    sys = LinearSystem()
    for u in free_unknowns:
        if not sys.has_var(u):
            sys.add_var(u)
    for f in fragments:
        sys.extend(f.system)
    sys.objective = objective
    sys.check_closed()
    return sys


def reexpansion_residual(c: ImplicationConstraint, frag: Fragment, assignment) -> Polynomial:
    """conclusion - sum_g c_g * g under ``assignment``; zero when the translation holds."""
    lhs = c.instantiate(assignment)
    rhs = Polynomial()
    for name, g in zip(frag.multipliers, frag.products):
        val = assignment.get(name, 0)
        if val:
            rhs = rhs + g.expansion * val
    return lhs - rhs
