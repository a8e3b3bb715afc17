"""Command-line front end: ``softabs <command> WORKSPACE ...``.

Exit codes: 0 success or relation holds, 1 relation does not hold,
2 validation error, 3 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any

import numpy as np

from . import abstraction as A
from .constructive import explicit_omega, validate_alignment
from .errors import ModelError, SoftAbsError
from .expr import format_value, render
from .interventions import hard_restriction, precedes_hard, precedes_soft, soft_restriction
from .model_io import FIXTURES, WorkspaceError, fixture_text, parse_intervention, parse_workspace
from .scm import Intervention, Scm, format_setting, replacement_table, same_equations

OK, FAILS, INVALID, USAGE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE, f"{self.prog}: error: {message}\n")


# ---- helpers ---------------------------------------------------------------


def _load(spec: str):
    path = Path(spec)
    if path.is_file():
        return parse_workspace(path.read_text(encoding="utf-8")), str(path)
    stem = path.name[:-4] if path.name.endswith(".sca") else path.name
    if stem in FIXTURES and not path.exists():
        return parse_workspace(fixture_text(stem)), f"{stem}.sca"
    raise UsageError(f"no such workspace file: {spec} (bundled fixtures: {', '.join(FIXTURES)})")


def _pick(kind: str, table: dict, name: str | None, pred=lambda v: True):
    if name is not None:
        if name not in table:
            raise UsageError(f"no {kind} named {name!r}; have {', '.join(sorted(table)) or 'none'}")
        return table[name]
    options = [v for v in table.values() if pred(v)]
    if len(options) != 1:
        raise UsageError(f"workspace has {len(options)} matching {kind}s; choose one with --{kind}")
    return options[0]


def _iset(ws, name: str | None, low: Scm, high: Scm):
    sets = {n: s for n, s in ws.intervention_sets.items() if s.low_model is low and s.high_model is high}
    if name is None:
        if "default" in sets:
            return sets["default"]
        if len(sets) == 1:
            return next(iter(sets.values()))
        raise UsageError("choose an intervention set with --interventions")
    if name not in sets:
        raise UsageError(f"no intervention set {name!r} for {low.name} -> {high.name}")
    return sets[name]


def _tau(ws, args):
    def fits(t):
        return (args.low is None or t.low.name == args.low) and (args.high is None or t.high.name == args.high)

    return _pick("tau", ws.taus, args.tau, fits)


def _value(v):
    return bool(v) if isinstance(v, (bool, np.bool_)) else int(v)


def _setting(s) -> dict[str, Any]:
    return {k: _value(v) for k, v in s.items()}


def _function_rows(m: Scm, target: str, e) -> dict[str, Any]:
    pa = m.parents(target)
    tab = replacement_table(m, target, e)
    rows = []
    for idx in np.ndindex(*tab.shape):
        rows.append([[_value(m.domain(p).value(k)) for p, k in zip(pa, idx)], _value(m.endogenous[target].value(tab[idx]))])
    return {"inputs": list(pa), "rows": rows}


def _intervention(m: Scm, i: Intervention) -> dict[str, Any]:
    return {
        "text": str(i),
        "hard": i.is_hard,
        "replacements": [
            {"target": t, "expr": render(f), "function": _function_rows(m, t, f)} for t, f in i.replacements
        ],
    }


def _cex(c: A.Counterexample | None):
    if c is None:
        return None
    return {
        "intervention": str(c.intervention),
        "candidate": str(c.candidate),
        "exogenous": _setting(c.exogenous),
        "endogenous": _setting(c.endogenous),
        "lhs": _setting(c.lhs),
        "rhs": _setting(c.rhs),
    }


def _fmt_function(fn: dict[str, Any], indent: str) -> list[str]:
    if not fn["inputs"]:
        return [f"{indent}() -> {format_value(fn['rows'][0][1])}"]
    head = ", ".join(fn["inputs"])
    return [f"{indent}({head}) = ({', '.join(format_value(v) for v in k)}) -> {format_value(out)}" for k, out in fn["rows"]]


def _fmt_setting(s: dict[str, Any]) -> str:
    return format_setting(s)


# ---- commands --------------------------------------------------------------


def _literal(text: str) -> Intervention:
    """An intervention given on the command line; a malformed one is a usage error."""
    try:
        return parse_intervention(text)
    except WorkspaceError as exc:
        raise UsageError(f"cannot parse intervention {text!r}: {exc.diagnostics[0]}") from None


def cmd_check(ws, args) -> tuple[dict, int]:
    tau = _tau(ws, args)
    s = _iset(ws, args.interventions, tau.low, tau.high)
    v = A.check(tau, s.low, s.high, args.relation, limit=args.limit)
    report = {
        "relation": v.relation,
        "tau": tau.name,
        "low": tau.low.name,
        "high": tau.high.name,
        "interventions": s.name,
        "holds": v.holds,
        "omega_tables": [
            [{"low": str(e.low), "high": _intervention(tau.high, e.high), "kind": e.kind} for e in t.entries]
            for t in v.tables
        ],
        "truncated": v.truncated,
        "candidates": [{"low": str(i), "high": [str(j) for j in js]} for i, js in v.candidates.items()],
        "rejections": [
            {"low": str(i), "high": str(j), "reason": r.reason, "counterexample": _cex(r.counterexample)}
            for (i, j), r in v.rejections.items()
        ],
        "counterexample": _cex(v.counterexample),
        "failures": v.failures,
        "ambiguity": [{"variable": w.variable, "first": str(w.first), "second": str(w.second)} for w in v.ambiguity],
        "warnings": v.warnings,
    }
    return report, OK if v.holds else FAILS


def _human_check(r: dict) -> list[str]:
    out = [
        f"relation: {r['relation']}  ({r['low']} -> {r['high']} via {r['tau']}, interventions {r['interventions']})",
        f"verdict: {'holds' if r['holds'] else 'does not hold'}",
    ]
    if r["holds"]:
        n = len(r["omega_tables"])
        out.append(f"admissible omega tables: {n}{' (truncated)' if r['truncated'] else ''}")
        for k, table in enumerate(r["omega_tables"], 1):
            out.append(f"  omega #{k}:")
            for e in table:
                out.append(f"    {e['low']}  ->  {e['high']['text']}   [{e['kind']}]")
                for rep in e["high"]["replacements"]:
                    if not e["high"]["hard"]:
                        out.append(f"      {rep['target']} as a table:")
                        out.extend(_fmt_function(rep["function"], "        "))
    for f in r["failures"]:
        out.append(f"failure: {f}")
    if r["counterexample"]:
        c = r["counterexample"]
        out.append(f"counterexample: i = {c['intervention']}, j = {c['candidate']}")
        out.append(f"  x = {_fmt_setting(c['endogenous'])}, e = {_fmt_setting(c['exogenous'])}")
        out.append(f"  lhs = {_fmt_setting(c['lhs'])}")
        out.append(f"  rhs = {_fmt_setting(c['rhs'])}")
    excluded = [x for x in r["rejections"] if x["reason"] == "inconsistent"]
    if excluded:
        out.append("excluded pairs:")
        for x in excluded:
            c = x["counterexample"]
            out.append(
                f"  {x['low']}  -/->  {x['high']}: x = {_fmt_setting(c['endogenous'])}, e = {_fmt_setting(c['exogenous'])}, "
                f"lhs {_fmt_setting(c['lhs'])} vs rhs {_fmt_setting(c['rhs'])}"
            )
    for w in r["ambiguity"]:
        out.append(f"ambiguous pair on {w['variable']}: {w['first']}  |  {w['second']}")
    for w in r["warnings"]:
        out.append(f"warning: {w}")
    return out


def cmd_omega(ws, args) -> tuple[dict, int]:
    a = _pick("alignment", ws.alignments, args.alignment)
    i = _literal(args.intervention)
    rep = validate_alignment(a)
    if not rep.factorizes:
        y, x = rep.violations[0]
        raise ModelError(f"alignment {a.name}: tau does not factor through the cluster of {y} (first at {format_setting(x)})")
    rng = np.random.default_rng(args.seed) if args.seed is not None else None
    j = explicit_omega(a, i, rng=rng, full=args.full)
    report: dict[str, Any] = {
        "alignment": a.name,
        "constructive": rep.constructive,
        "uncovered": list(rep.uncovered),
        "low": str(i),
        "omega": _intervention(a.high, j),
    }
    code = OK
    if args.compare_oracle:
        s = _iset(ws, args.interventions, a.low, a.high)
        cands = A.soft_candidates(a.tau, i, s.high)
        match = len(cands) == 1 and same_equations(a.high, j, cands[0])
        report["oracle"] = {
            "interventions": s.name,
            "candidates": [str(c) for c in cands],
            "match": match,
        }
        code = OK if match else FAILS
    return report, code


def _human_omega(r: dict) -> list[str]:
    out = [f"alignment: {r['alignment']} ({'constructive' if r['constructive'] else 'overlapping clusters'})"]
    if r["uncovered"]:
        out.append(f"uncovered low-level variables: {', '.join(r['uncovered'])}")
    out.append(f"omega({r['low']}) = {r['omega']['text']}")
    for rep in r["omega"]["replacements"]:
        out.append(f"  g_{rep['target']}:")
        out.extend(_fmt_function(rep["function"], "    "))
    if "oracle" in r:
        o = r["oracle"]
        if not o["candidates"]:
            out.append(f"oracle: no member of {o['interventions']} passes the soft conditions")
        else:
            out.append(f"oracle: {' | '.join(o['candidates'])}")
        out.append(f"oracle agreement: {'match' if o['match'] else 'MISMATCH'}")
    return out


def cmd_restrict(ws, args) -> tuple[dict, int]:
    m = _pick("model", ws.models, args.model)
    i = _literal(args.intervention)
    rs = hard_restriction(m, i) if args.hard else soft_restriction(m, i)
    settings = [_setting(s) for s in rs]
    return {
        "model": m.name,
        "intervention": str(i),
        "kind": "hard" if args.hard else "soft",
        "size": len(settings),
        "of": int(rs.mask.size),
        "settings": settings,
    }, OK


def _human_restrict(r: dict, limit: int | None) -> list[str]:
    out = [f"{'Rst' if r['kind'] == 'hard' else 'Rst_soft'}({r['model']}, {r['intervention']}): {r['size']} of {r['of']} settings"]
    shown = r["settings"] if limit is None else r["settings"][:limit]
    out.extend("  " + _fmt_setting(s) for s in shown)
    if len(shown) < len(r["settings"]):
        out.append(f"  ... {len(r['settings']) - len(shown)} more (use --show-all)")
    return out


def cmd_order(ws, args) -> tuple[dict, int]:
    m = _pick("model", ws.models, args.model)
    a, b = _literal(args.a), _literal(args.b)
    report: dict[str, Any] = {
        "model": m.name,
        "a": str(a),
        "b": str(b),
        "a_precedes_b": precedes_soft(m, a, b),
        "b_precedes_a": precedes_soft(m, b, a),
    }
    if a.is_hard and b.is_hard:
        report["a_below_b_hard"] = precedes_hard(m, a, b)
        report["b_below_a_hard"] = precedes_hard(m, b, a)
    return report, OK if report["a_precedes_b"] else FAILS


def _human_order(r: dict) -> list[str]:
    out = [
        f"a = {r['a']}, b = {r['b']} on {r['model']}",
        f"a ⪯ b: {str(r['a_precedes_b']).lower()}",
        f"b ⪯ a: {str(r['b_precedes_a']).lower()}",
    ]
    if "a_below_b_hard" in r:
        out.append(f"a ⊑ b: {str(r['a_below_b_hard']).lower()}")
        out.append(f"b ⊑ a: {str(r['b_below_a_hard']).lower()}")
    return out


def cmd_ambiguity(ws, args) -> tuple[dict, int]:
    m = _pick("model", ws.models, args.model)
    sets = [s for n, s in sorted(ws.intervention_sets.items()) if args.interventions in (None, n)]
    if args.interventions is not None and not sets:
        raise UsageError(f"no intervention set {args.interventions!r}")
    if args.interventions is None:
        named = [s for s in sets if s.name == "default"]
        sets = named or sets
    J: list[Intervention] = []
    for s in sets:
        for j in (s.high if s.high_model is m else s.low if s.low_model is m else ()):
            if j not in J:
                J.append(j)
    pairs = A.detect_ambiguity(m, J)
    return {
        "model": m.name,
        "checked": [str(j) for j in J],
        "pairs": [{"variable": w.variable, "first": str(w.first), "second": str(w.second)} for w in pairs],
    }, OK


def _human_ambiguity(r: dict) -> list[str]:
    out = [f"{len(r['pairs'])} ambiguous pair(s) among {len(r['checked'])} interventions on {r['model']}"]
    for p in r["pairs"]:
        out.append(f"  {p['variable']}: {p['first']}  |  {p['second']}")
    return out


def cmd_validate(ws, args) -> tuple[dict, int]:
    aligns = {}
    for n, a in sorted(ws.alignments.items()):
        rep = validate_alignment(a)
        aligns[n] = {"factorizes": rep.factorizes, "partition": rep.partition, "uncovered": list(rep.uncovered)}
    return {
        "models": {
            n: {"endogenous": list(m.endo), "exogenous": list(m.exo), "order": list(m.order)}
            for n, m in sorted(ws.models.items())
        },
        "taus": {n: {"low": t.low.name, "high": t.high.name} for n, t in sorted(ws.taus.items())},
        "alignments": aligns,
        "interventions": {
            n: {"low": len(s.low), "high": len(s.high)} for n, s in sorted(ws.intervention_sets.items())
        },
    }, OK


def _human_validate(r: dict) -> list[str]:
    out = ["valid"]
    for n, m in r["models"].items():
        out.append(f"  model {n}: endo {', '.join(m['endogenous'])}; exo {', '.join(m['exogenous']) or '-'}")
    for n, t in r["taus"].items():
        out.append(f"  tau {n}: {t['low']} -> {t['high']}")
    for n, a in r["alignments"].items():
        kind = "constructive" if a["partition"] else "overlapping"
        extra = f"; uncovered {', '.join(a['uncovered'])}" if a["uncovered"] else ""
        out.append(f"  align {n}: {kind}{extra}")
    for n, s in r["interventions"].items():
        out.append(f"  interventions {n}: {s['low']} low, {s['high']} high")
    return out


COMMANDS = {
    "check": cmd_check,
    "omega": cmd_omega,
    "restrict": cmd_restrict,
    "order": cmd_order,
    "ambiguity": cmd_ambiguity,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("human", "machine"), default="human")
    ws = argparse.ArgumentParser(add_help=False, parents=[common])
    ws.add_argument("workspace", help=".sca file, or the name of a bundled fixture (fig2, fig3, fig4)")

    p = _Parser(prog="softabs", description="Check soft abstractions between finite structural causal models.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("check", parents=[ws], help="decide tau, low-soft or soft abstraction")
    c.add_argument("--low")
    c.add_argument("--high")
    c.add_argument("--tau")
    c.add_argument("--relation", required=True, choices=A.RELATIONS)
    c.add_argument("--interventions")
    c.add_argument("--limit", type=int, default=1000, help="stop after this many omega tables")

    o = sub.add_parser("omega", parents=[ws], help="explicit omega(i) for a constructive alignment")
    o.add_argument("--alignment", "-a")
    o.add_argument("--intervention", "-i", required=True)
    o.add_argument("--compare-oracle", action="store_true")
    o.add_argument("--interventions", help="intervention set used by --compare-oracle")
    o.add_argument("--seed", type=int, help="pick random preimages with this seed")
    o.add_argument("--full", action="store_true", help="also check every preimage of every point")

    r = sub.add_parser("restrict", parents=[ws], help="print a soft (or hard) restriction set")
    r.add_argument("--model", "-m")
    r.add_argument("--intervention", "-i", required=True)
    r.add_argument("--hard", action="store_true")
    r.add_argument("--show-all", action="store_true")

    od = sub.add_parser("order", parents=[ws], help="compare two interventions under ⪯")
    od.add_argument("--model", "-m")
    od.add_argument("-a", required=True)
    od.add_argument("-b", required=True)

    am = sub.add_parser("ambiguity", parents=[ws], help="report intervention pairs that solve-level checks cannot tell apart")
    am.add_argument("--model", "-m")
    am.add_argument("--interventions")

    sub.add_parser("validate", parents=[ws], help="load and validate a workspace")

    f = sub.add_parser("fixtures", parents=[common], help="print the bundled workspaces")
    f.add_argument("name", nargs="?", choices=FIXTURES)
    return p


def _emit(args, report: dict, code: int) -> None:
    if args.format == "machine":
        doc = {"command": args.command, "argv": args.argv, "exit_code": code, "result": report}
        sys.stdout.write(json.dumps(doc, sort_keys=True, ensure_ascii=False) + "\n")
        return
    cmd = args.command
    if cmd == "check":
        lines = _human_check(report)
    elif cmd == "omega":
        lines = _human_omega(report)
    elif cmd == "restrict":
        lines = _human_restrict(report, None if args.show_all else 32)
    elif cmd == "order":
        lines = _human_order(report)
    elif cmd == "ambiguity":
        lines = _human_ambiguity(report)
    else:
        lines = _human_validate(report)
    sys.stdout.write("\n".join(lines) + "\n")


def _fail(args, code: int, kind: str, messages: list[str]) -> int:
    for m in messages:
        sys.stderr.write(m + "\n")
    if getattr(args, "format", "human") == "machine":
        doc = {"command": args.command, "argv": args.argv, "exit_code": code, "error": {"kind": kind, "messages": messages}}
        sys.stdout.write(json.dumps(doc, sort_keys=True, ensure_ascii=False) + "\n")
    return code


def run(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    args.argv = argv
    if args.command == "fixtures":
        names = [args.name] if args.name else list(FIXTURES)
        if args.format == "machine":
            doc = {"command": "fixtures", "argv": argv, "exit_code": OK, "result": {n: fixture_text(n) for n in names}}
            sys.stdout.write(json.dumps(doc, sort_keys=True, ensure_ascii=False) + "\n")
        else:
            sys.stdout.write("\n".join(f"# ---- {n}.sca ----\n{fixture_text(n)}" for n in names))
        return OK
    try:
        ws, label = _load(args.workspace)
        report, code = COMMANDS[args.command](ws, args)
    except UsageError as exc:
        return _fail(args, USAGE, "usage", [f"softabs: error: {exc}"])
    except WorkspaceError as exc:
        src = args.workspace if "workspace" in vars(args) else "<input>"
        return _fail(args, INVALID, "validation", [f"{src}:{d}" if d.line is not None else f"{src}: {d}" for d in exc.diagnostics])
    except (ModelError, SoftAbsError) as exc:
        return _fail(args, INVALID, "validation", [f"softabs: {getattr(exc, 'code', 'error')}: {exc}"])
    _emit(args, report, code)
    return code


def main(argv: list[str] | None = None) -> None:
    raise SystemExit(run(argv))


if __name__ == "__main__":
    main()
