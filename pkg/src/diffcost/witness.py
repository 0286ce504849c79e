"""Solved certificates: threshold plus concrete per-location bound polynomials."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Mapping, Optional

from .constraints import TemplateMap
from .lp import Solution
from .poly import Polynomial


class WitnessError(ValueError):
    pass


@dataclass
class Witness:
    mode: str
    threshold_raw: Optional[Fraction]
    bounds: Dict[str, Dict[str, Polynomial]] = field(default_factory=dict)

    @property
    def threshold_int(self) -> Optional[int]:
        return None if self.threshold_raw is None else math.floor(self.threshold_raw)

    @property
    def pf_new(self) -> Dict[str, Polynomial]:
        return self.bounds["pf_new"]

    @property
    def antipf_old(self) -> Dict[str, Polynomial]:
        return self.bounds["antipf_old"]


def extract_witness(sol: Solution, tmpls: Mapping[str, TemplateMap], mode: str,
                    threshold_var: Optional[str] = None) -> Witness:
    """Substitute solved coefficients into the templates (zero terms vanish)."""
    if not sol.ok:
        raise WitnessError(f"no witness: solver status is {sol.status}")
    raw = sol.value(threshold_var) if threshold_var else None
    return Witness(mode, raw, {role: t.instantiate_all(sol.assignment) for role, t in tmpls.items()})
