"""Command-line entry point.

Exit codes: 0 when the requested result was obtained (threshold found,
bound verified, threshold refuted, precision bounded), 1 when the answer is
Unknown, 2 on malformed or inconsistent input.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

from .analysis import (AnalysisReport, InputError, Options, analyze_diff, analyze_refute,
                       analyze_single, analyze_verify, invariants_for, oracle_check_report)
from .imp import load_system
from .invariants import format_invariants, parse_invariant_file, user_invariants_for
from .oracle import OracleError, RunBudget, default_box, max_diff
from .syntax import ParseError, parse_poly
from .ts import SemanticError, format_transition_system

EXIT_OK, EXIT_UNKNOWN, EXIT_INPUT = 0, 1, 2


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}")


def _valuation(text: str) -> Dict[str, int]:
    """``lenA=100,lenB=100`` -> {"lenA": 100, "lenB": 100}."""
    out = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        name, sep, value = part.partition("=")
        if not sep:
            raise argparse.ArgumentTypeError(f"expected name=value, got {part!r}")
        try:
            out[name.strip()] = int(value)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not an integer: {value!r}")
    return out


def _box(text: str) -> Dict[str, Tuple[int, int]]:
    """``n=0:3,m=1:4`` -> {"n": (0, 3), "m": (1, 4)}."""
    out = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        name, sep, rng = part.partition("=")
        lo, colon, hi = rng.partition(":")
        if not sep or not colon:
            raise argparse.ArgumentTypeError(f"expected name=lo:hi, got {part!r}")
        try:
            out[name.strip()] = (int(lo), int(hi))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad range in {part!r}")
    return out


def _analysis_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("analysis")
    g.add_argument("--degree", "-d", type=int, default=2, help="template degree d (default 2)")
    g.add_argument("--prodk", "-K", type=int, default=None, help="product bound K (default d)")
    g.add_argument("--invariants", metavar="FILE", help="user invariants conjoined with the computed ones")
    g.add_argument("--solver", default="exact",
                   help="exact (default), exact-tableau or external:<command>")
    g.add_argument("--eps", type=_fraction, default=Fraction(1), help="refutation gap (default 1)")
    g.add_argument("--emit-lp", metavar="FILE", help="write the generated LP in plain text")
    g.add_argument("--include-cost-in-templates", action="store_true",
                   help="let templates mention the cost variable")
    g.add_argument("--domain", choices=("polyhedra", "intervals"), default="polyhedra",
                   help="invariant domain (default polyhedra)")
    g.add_argument("--no-slice", action="store_true", help="keep variables that cannot influence cost")
    g.add_argument("--widen-after", type=int, default=5, help="visits to a loop head before widening")
    g.add_argument("--time-limit", type=float, default=None, help="solver time limit in seconds")
    g.add_argument("--json", action="store_true", help="print the report as JSON")


def _oracle_flags(p: argparse.ArgumentParser):
    p.add_argument("--oracle-check", action="store_true",
                   help="re-check the witness by enumeration on a small input box")
    p.add_argument("--box", type=_box, default=None, help="input box for the oracle, e.g. n=0:3,m=1:4")
    p.add_argument("--max-steps", type=int, default=10**5, help="oracle step budget per run")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="diffcost", description="Differential cost analysis by polynomial "
                                 "potential functions and linear programming.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("diff", help="minimize a threshold t with cost(new) - cost(old) <= t")
    p.add_argument("new")
    p.add_argument("old")
    _analysis_flags(p)
    _oracle_flags(p)

    p = sub.add_parser("verify", help="prove cost(new) - cost(old) <= BOUND for a polynomial BOUND")
    p.add_argument("new")
    p.add_argument("old")
    p.add_argument("bound", help="polynomial over the program variables, e.g. 'lenA*lenB'")
    _analysis_flags(p)

    p = sub.add_parser("refute", help="prove that T is not a threshold")
    p.add_argument("new")
    p.add_argument("old")
    p.add_argument("t", type=_fraction)
    how = p.add_mutually_exclusive_group(required=True)
    how.add_argument("--x0", type=_valuation, help="initial valuation, e.g. lenA=100,lenB=100")
    how.add_argument("--sweep", action="store_true", help="try every corner of theta0's interval hull")
    _analysis_flags(p)

    p = sub.add_parser("single", help="upper and lower cost bounds for one program with minimal gap")
    p.add_argument("program")
    _analysis_flags(p)

    p = sub.add_parser("bench", help="run the bundled regression suite")
    p.add_argument("names", nargs="*", help="benchmark names or file stems (default: all)")
    p.add_argument("--suite", type=Path, default=None, help="suite metadata file (default: bundled)")
    p.add_argument("--jobs", "-j", type=int, default=1, help="parallel workers")
    p.add_argument("--solver", default="exact")
    p.add_argument("--time-limit", type=float, default=300.0)
    p.add_argument("--oracle-check", action="store_true")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("oracle", help="brute-force max cost difference on a small input box")
    p.add_argument("new")
    p.add_argument("old")
    p.add_argument("--box", type=_box, default=None, help="input box, e.g. n=0:3 (default: 4-wide)")
    p.add_argument("--max-steps", type=int, default=10**5)
    p.add_argument("--nondet", type=_box, default=None, help="finite nondet ranges, e.g. r=0:1")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("show", help="print the lowered transition system and its invariants")
    p.add_argument("program")
    p.add_argument("--domain", choices=("polyhedra", "intervals"), default="polyhedra")
    p.add_argument("--no-invariants", action="store_true")
    return ap


def _options(a) -> Options:
    return Options(degree=a.degree, prodk=a.prodk, include_cost=a.include_cost_in_templates,
                   solver=a.solver, eps=a.eps, widen_after=a.widen_after, domain=a.domain,
                   slice=not a.no_slice, time_limit=a.time_limit, emit_lp=a.emit_lp)


def _user_invariants(a, scope: str):
    if not a.invariants:
        return None
    return user_invariants_for(parse_invariant_file(Path(a.invariants).read_text()), scope)


def _emit(rep: AnalysisReport, as_json: bool):
    sys.stdout.write(rep.to_json() + "\n" if as_json else rep.to_text())


def cmd_diff(a) -> int:
    rep = analyze_diff(load_system(a.new), load_system(a.old), _options(a),
                       _user_invariants(a, "new"), _user_invariants(a, "old"))
    if a.oracle_check and rep.witness is not None:
        oracle_check_report(rep, a.box, RunBudget(max_steps=a.max_steps))
    _emit(rep, a.json)
    return EXIT_OK if rep.status == "Threshold" else EXIT_UNKNOWN


def cmd_verify(a) -> int:
    bound = parse_poly(a.bound)
    if bound.degree() > a.degree:
        raise InputError(f"bound has degree {bound.degree()} > d = {a.degree}")
    rep = analyze_verify(load_system(a.new), load_system(a.old), bound, _options(a),
                         _user_invariants(a, "new"), _user_invariants(a, "old"))
    _emit(rep, a.json)
    return EXIT_OK if rep.status == "Verified" else EXIT_UNKNOWN


def cmd_refute(a) -> int:
    rep = analyze_refute(load_system(a.new), load_system(a.old), a.t, None if a.sweep else a.x0,
                         _options(a), _user_invariants(a, "new"), _user_invariants(a, "old"))
    _emit(rep, a.json)
    return EXIT_OK if rep.status == "Refuted" else EXIT_UNKNOWN


def cmd_single(a) -> int:
    rep = analyze_single(load_system(a.program), _options(a), _user_invariants(a, ""))
    _emit(rep, a.json)
    return EXIT_OK if rep.status == "Bounded" else EXIT_UNKNOWN


def cmd_bench(a) -> int:
    from .bench import format_table, rows_to_json, run_suite

    try:
        rows = run_suite(a.names, a.jobs, a.solver, a.time_limit, a.suite, a.oracle_check)
    except KeyError as e:
        raise InputError(str(e.args[0]))
    sys.stdout.write(rows_to_json(rows) + "\n" if a.json else format_table(rows))
    bad = [r for r in rows if r.verdict != r.expect or r.oracle == "FAILED"]
    return EXIT_OK if not bad else EXIT_UNKNOWN


def cmd_oracle(a) -> int:
    new, old = load_system(a.new), load_system(a.old)
    budget = RunBudget(max_steps=a.max_steps, input_box=a.box or default_box(new),
                       nondet_domain=a.nondet or {})
    res = max_diff(new, old, budget)
    if a.json:
        print(json.dumps({"box": {v: list(r) for v, r in budget.input_box.items()}, "max_diff": res.value,
                          "argmax": res.argmax, "points": len(res.points)}, indent=2))
    else:
        print(f"box: {', '.join(f'{v}={lo}:{hi}' for v, (lo, hi) in budget.input_box.items())}")
        print(f"points: {len(res.points)}")
        print(f"max cost difference: {res.value}")
        if res.argmax is not None:
            print(f"attained at: {', '.join(f'{k}={v}' for k, v in res.argmax.items())}")
    return EXIT_OK


def cmd_show(a) -> int:
    ts = load_system(a.program)
    sys.stdout.write(format_transition_system(ts))
    if not a.no_invariants:
        sys.stdout.write("\n" + format_invariants(invariants_for(ts, Options(domain=a.domain), None), ts))
    return EXIT_OK


COMMANDS = {"diff": cmd_diff, "verify": cmd_verify, "refute": cmd_refute, "single": cmd_single,
            "bench": cmd_bench, "oracle": cmd_oracle, "show": cmd_show}


def main(argv: Optional[Sequence[str]] = None) -> int:
    a = build_parser().parse_args(argv)
    try:
        return COMMANDS[a.command](a)
    except OracleError as e:
        print(f"oracle: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_UNKNOWN
    except (ParseError, SemanticError, InputError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
