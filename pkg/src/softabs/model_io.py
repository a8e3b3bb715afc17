"""Reading and writing ``.sca`` workspace files.

A workspace holds named models, tau maps, alignments and intervention
sets. Everything is validated on load; failures come back as a list of
diagnostics with line and column.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

from lark import Lark, Token, Transformer, Tree
from lark.exceptions import UnexpectedInput, VisitError

from . import expr as E
from .abstraction import InterventionSets, TauMap
from .constructive import Alignment, validate_alignment
from .errors import ModelError, Problem, SoftAbsError
from .expr import Value, format_value, render
from .scm import Domain, Intervention, Scm, format_domain, validate_intervention

GRAMMAR = r"""
start: _NL? (_block _NL?)*
_block: domain_decl | model_block | tau_block | align_block | iset_block

domain_decl: "domain" NAME "=" dom_items _NL
dom_items: dom_item ("," dom_item)*
dom_item: value                 -> dom_value
        | int ".." int          -> dom_range

model_block: "model" NAME _NL (_model_line _NL)* "end"
_model_line: exo_decl | endo_decl | eq_decl | weight_decl
exo_decl: "exo" names ":" domref
endo_decl: "endo" names ":" domref
eq_decl: "eq" NAME ":=" expr
weight_decl: "weight" value* "=" int ["/" INT]
domref: NAME                    -> dom_named
      | "{" dom_items "}"       -> dom_inline

tau_block: "tau" NAME ":" NAME "->" NAME _NL (tau_line _NL)* "end"
tau_line: NAME ":=" expr

align_block: "align" NAME ":" NAME _NL (align_line _NL)* "end"
align_line: NAME ":" "{" [names] "}"

iset_block: "interventions" NAME ":" NAME "->" NAME _NL (iset_line _NL)* "end"
iset_line: LEVEL intervention
LEVEL: "low" | "high"

intervention: "eps"             -> eps
            | assign ("," assign)*
assign: NAME "<-" expr

names: NAME ("," NAME)*
value: int | "T" -> true | "F" -> false
int: INT | "-" INT -> negint

?expr: or_e
?or_e: xor_e | or_e "or" xor_e -> or_
?xor_e: and_e | xor_e "xor" and_e -> xor
?and_e: not_e | and_e "and" not_e -> and_
?not_e: eq_e | "not" not_e -> not_
?eq_e: sum_e | sum_e "=" sum_e -> eq
?sum_e: prod_e | sum_e "+" prod_e -> add | sum_e "-" prod_e -> sub
?prod_e: unary_e | prod_e "*" unary_e -> mul | prod_e "mod" INT -> mod
?unary_e: atom | "-" unary_e -> neg
?atom: INT -> const_int
     | "T" -> const_true
     | "F" -> const_false
     | NAME -> var
     | "(" expr ")"
     | "[" expr "]" -> ind
     | "ite" "(" expr "," expr "," expr ")" -> ite
     | "table" "(" [names] ")" "{" [row ("," row)*] "}" -> table
row: value* ":" value

intervention_only: intervention
expr_only: expr

NAME: /[A-Za-z_][A-Za-z0-9_]*/
INT: /[0-9]+/
_NL: /((#[^\n]*)?\n[\t ]*)+/

%ignore /[\t \f]+/
"""

_parser = Lark(
    GRAMMAR,
    parser="lalr",
    start=["start", "intervention_only", "expr_only"],
    propagate_positions=True,
    maybe_placeholders=True,
)


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    line: int | None = None
    column: int | None = None

    def __str__(self) -> str:
        where = f"{self.line}:{self.column}: " if self.line is not None else ""
        return f"{where}{self.code}: {self.message}"


class WorkspaceError(SoftAbsError, ValueError):
    """A workspace failed to parse or validate."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))


class _Exprs(Transformer):
    def const_int(self, c):
        return E.const(int(c[0]))

    def const_true(self, _):
        return E.const(True)

    def const_false(self, _):
        return E.const(False)

    def var(self, c):
        return E.var(str(c[0]))

    def neg(self, c):
        return E.neg(c[0])

    def not_(self, c):
        return E.not_(c[0])

    def ind(self, c):
        return E.ind(c[0])

    def or_(self, c):
        return E.or_(*c)

    def xor(self, c):
        return E.xor(*c)

    def and_(self, c):
        return E.and_(*c)

    def eq(self, c):
        return E.eq(*c)

    def add(self, c):
        return E.add(*c)

    def sub(self, c):
        return E.sub(*c)

    def mul(self, c):
        return E.mul(*c)

    def mod(self, c):
        return E.mod(c[0], int(c[1]))

    def ite(self, c):
        return E.ite(*c)

    def names(self, c):
        return tuple(str(t) for t in c)

    def int(self, c):
        return int(c[0])

    def negint(self, c):
        return -int(c[0])

    def value(self, c):
        return c[0]

    def true(self, _):
        return True

    def false(self, _):
        return False

    def row(self, c):
        return (tuple(c[:-1]), c[-1])

    def table(self, c):
        inputs = c[0] or ()
        rows = tuple(r for r in c[1:] if r is not None)
        for key, _ in rows:
            if len(key) != len(inputs):
                raise ValueError(f"table row {key} has {len(key)} inputs, expected {len(inputs)}")
        return E.Table(tuple(inputs), rows)


_exprs = _Exprs()


def _tree_pos(node) -> tuple[int | None, int | None]:
    meta = getattr(node, "meta", None)
    if meta is not None and not getattr(meta, "empty", True):
        return meta.line, meta.column
    if isinstance(node, Token):
        return node.line, node.column
    return None, None


def _syntax(exc: UnexpectedInput, text: str) -> Diagnostic:
    line, col = getattr(exc, "line", None), getattr(exc, "column", None)
    if line is not None and line < 0:
        line = text.count("\n") + 1
        col = 1
    token = getattr(exc, "token", None)
    if token is not None and getattr(token, "type", "") == "$END":
        what = "unexpected end of input"
    elif token is not None and token.type == "_NL":
        what = "unexpected end of line"
    elif token is not None:
        what = f"unexpected {str(token).strip() or token.type!r}"
    else:
        what = "unexpected character " + repr(text[exc.pos_in_stream]) if getattr(exc, "pos_in_stream", None) is not None else "invalid syntax"
    expected = sorted(t for t in (getattr(exc, "expected", None) or getattr(exc, "allowed", None) or []) if not t.startswith("_"))
    if expected:
        what += " (expected " + ", ".join(expected[:8]) + (", ..." if len(expected) > 8 else "") + ")"
    return Diagnostic("syntax-error", what, line, col)


def _transform(node):
    try:
        return _exprs.transform(node)
    except VisitError as exc:
        raise ValueError(str(exc.orig_exc)) from None


def parse_expr(text: str) -> E.Expr:
    try:
        return _transform(_parser.parse(text, start="expr_only").children[0])
    except UnexpectedInput as exc:
        raise WorkspaceError([_syntax(exc, text)]) from None


def parse_intervention(text: str) -> Intervention:
    """An intervention literal such as ``X4 <- T`` or ``eps``."""
    try:
        tree = _parser.parse(text.strip(), start="intervention_only").children[0]
    except UnexpectedInput as exc:
        raise WorkspaceError([_syntax(exc, text)]) from None
    return _intervention(tree)


def _intervention(tree: Tree) -> Intervention:
    if tree.data == "eps":
        return Intervention()
    reps = []
    for a in tree.children:
        reps.append((str(a.children[0]), _transform(a.children[1])))
    targets = [t for t, _ in reps]
    if len(set(targets)) != len(targets):
        raise ModelError([Problem("intervention-violation", f"duplicate targets in {', '.join(targets)}")])
    return Intervention(tuple(reps))


@dataclass
class Workspace:
    models: dict[str, Scm] = field(default_factory=dict)
    taus: dict[str, TauMap] = field(default_factory=dict)
    alignments: dict[str, Alignment] = field(default_factory=dict)
    intervention_sets: dict[str, InterventionSets] = field(default_factory=dict)

    def signature(self) -> tuple:
        """Structural content as plain data; two workspaces are equal when their signatures are."""

        def model(m: Scm):
            return (
                m.name,
                tuple((x, _dom_sig(d)) for x, d in m.endogenous.items()),
                tuple((x, _dom_sig(d)) for x, d in m.exogenous.items()),
                tuple((x, render(e)) for x, e in m.equations.items()),
                None if m.weights is None else tuple(sorted((tuple(map(_val_sig, k)), w) for k, w in m.weights.items())),
            )

        return (
            tuple(sorted((n, model(m)) for n, m in self.models.items())),
            tuple(sorted(
                (n, t.low.name, t.high.name, tuple(sorted((y, render(e)) for y, e in {**t.endo, **t.exo}.items())))
                for n, t in self.taus.items()
            )),
            tuple(sorted((n, a.tau.name, tuple(sorted(a.pi.items()))) for n, a in self.alignments.items())),
            tuple(sorted(
                (n, s.low_model.name, s.high_model.name, tuple(str(i) for i in s.low), tuple(str(j) for j in s.high))
                for n, s in self.intervention_sets.items()
            )),
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, Workspace):
            return NotImplemented
        return self.signature() == other.signature()


def _val_sig(v: Value):
    return ("b", bool(v)) if isinstance(v, bool) else ("i", int(v))


def _dom_sig(d: Domain):
    return tuple(_val_sig(v) for v in d.values)


_LOAD_ORDER = ("domain_decl", "model_block", "tau_block", "align_block", "iset_block")


class _Loader:
    def __init__(self, text: str):
        self.text = text
        self.diags: list[Diagnostic] = []
        self.domains: dict[str, Domain] = {}
        self.ws = Workspace()
        self.names: set[str] = set()

    def error(self, code: str, message: str, node=None):
        line, col = _tree_pos(node) if node is not None else (None, None)
        self.diags.append(Diagnostic(code, message, line, col))

    def problems(self, exc: ModelError, positions: dict, default_node):
        for p in exc.problems:
            self.error(p.code, p.message, positions.get(p.entity, default_node))

    def claim(self, kind: str, name_tok: Token) -> bool:
        key = (kind, str(name_tok))
        if key in self.names:
            self.error("duplicate-name", f"{kind} {name_tok} is declared twice", name_tok)
            return False
        self.names.add(key)
        return True

    def dom_items(self, tree: Tree) -> Domain | None:
        vals: list[Value] = []
        for item in tree.children:
            if item.data == "dom_value":
                vals.append(_transform(item.children[0]))
            else:
                lo, hi = (_transform(c) for c in item.children)
                if lo > hi:
                    self.error("invalid-domain", f"empty range {lo}..{hi}", item)
                    return None
                vals.extend(range(lo, hi + 1))
        try:
            return Domain(tuple(vals))
        except (ValueError, TypeError) as exc:
            self.error("invalid-domain", str(exc), tree)
            return None

    def domref(self, tree: Tree) -> Domain | None:
        if tree.data == "dom_inline":
            return self.dom_items(tree.children[0])
        name = str(tree.children[0])
        if name not in self.domains:
            self.error("unknown-domain", f"domain {name} is not declared", tree)
            return None
        return self.domains[name]

    def load(self, tree: Tree) -> Workspace:
        # blocks may refer to blocks further down the file
        for block in sorted(tree.children, key=lambda b: _LOAD_ORDER.index(b.data)):
            getattr(self, block.data)(block)
        if self.diags:
            big = float("inf")
            self.diags.sort(key=lambda d: (d.line or big, d.column or big))
            raise WorkspaceError(self.diags)
        return self.ws

    def domain_decl(self, tree: Tree):
        name_tok, items = tree.children
        if not self.claim("domain", name_tok):
            return
        d = self.dom_items(items)
        if d is not None:
            self.domains[str(name_tok)] = d

    def model_block(self, tree: Tree):
        name_tok, *lines = tree.children
        name = str(name_tok)
        endo: dict[str, Domain] = {}
        exo: dict[str, Domain] = {}
        eqs: dict[str, E.Expr] = {}
        weights: dict[tuple, Fraction] = {}
        has_weights = False
        pos: dict = {("model", name): name_tok}
        ok = self.claim("model", name_tok)
        for line in lines:
            kind = line.data
            if kind in ("exo_decl", "endo_decl"):
                names_tree, ref = line.children
                d = self.domref(ref)
                if d is None:
                    ok = False
                    continue
                for tok in names_tree.children:
                    v = str(tok)
                    if v in endo or v in exo:
                        self.error("duplicate-name", f"variable {v} is declared twice in model {name}", tok)
                        ok = False
                        continue
                    (endo if kind == "endo_decl" else exo)[v] = d
                    pos[("var", v)] = tok
            elif kind == "eq_decl":
                tok, e = line.children
                if str(tok) in eqs:
                    self.error("duplicate-equation", f"{tok} has two equations in model {name}", tok)
                    ok = False
                    continue
                try:
                    eqs[str(tok)] = _transform(e)
                except ValueError as exc:
                    self.error("syntax-error", str(exc), e)
                    ok = False
                    continue
                pos[("eq", str(tok))] = tok
            else:
                has_weights = True
                *vals, num, den = line.children
                key = tuple(_transform(v) for v in vals)
                w = Fraction(_transform(num), int(den) if den is not None else 1)
                if key in weights:
                    self.error("invalid-weight", f"duplicate weight for {key}", line)
                    ok = False
                weights[key] = w
                pos[("weight", key)] = line
        if not ok:
            return
        try:
            self.ws.models[name] = Scm(endo, exo, eqs, weights if has_weights else None, name)
        except ModelError as exc:
            self.problems(exc, pos, name_tok)

    def _models(self, tree: Tree, low_tok: Token, high_tok: Token):
        out = []
        for tok in (low_tok, high_tok):
            m = self.ws.models.get(str(tok))
            if m is None:
                self.error("unknown-reference", f"model {tok} is not declared (or failed to load)", tok)
            out.append(m)
        return out

    def tau_block(self, tree: Tree):
        name_tok, low_tok, high_tok, *lines = tree.children
        if not self.claim("tau", name_tok):
            return
        low, high = self._models(tree, low_tok, high_tok)
        endo, exo, pos = {}, {}, {("tau", str(name_tok)): name_tok}
        ok = True
        for line in lines:
            tok, e = line.children
            y = str(tok)
            if y in endo or y in exo:
                self.error("duplicate-name", f"tau {name_tok} defines {y} twice", tok)
                ok = False
                continue
            try:
                ex = _transform(e)
            except ValueError as exc:
                self.error("syntax-error", str(exc), e)
                ok = False
                continue
            pos[("tau", y)] = tok
            if high is not None and y in high.exogenous:
                exo[y] = ex
            else:
                endo[y] = ex
        if low is None or high is None or not ok:
            return
        try:
            self.ws.taus[str(name_tok)] = TauMap(low, high, endo, exo, str(name_tok))
        except ModelError as exc:
            self.problems(exc, pos, name_tok)

    def align_block(self, tree: Tree):
        name_tok, tau_tok, *lines = tree.children
        if not self.claim("align", name_tok):
            return
        tau = self.ws.taus.get(str(tau_tok))
        if tau is None:
            self.error("unknown-reference", f"tau {tau_tok} is not declared (or failed to load)", tau_tok)
            return
        pi, pos = {}, {("align", str(name_tok)): name_tok}
        for line in lines:
            tok, names = line.children
            if str(tok) in pi:
                self.error("duplicate-name", f"alignment {name_tok} gives {tok} two clusters", tok)
                return
            pi[str(tok)] = tuple(str(t) for t in names.children) if names is not None else ()
            pos[("align", str(tok))] = tok
        try:
            a = Alignment(tau, pi, str(name_tok))
        except ModelError as exc:
            self.problems(exc, pos, name_tok)
            return
        report = validate_alignment(a)
        if not report.factorizes:
            y, x = report.violations[0]
            n = sum(1 for v in report.violations if v[0] == y)
            detail = ", ".join(f"{k}={format_value(v)}" for k, v in x.items())
            self.error(
                "alignment-invalid",
                f"tau {tau.name} does not factor through the cluster of {y} ({n} violating settings, first {{{detail}}})",
                pos[("align", y)],
            )
            return
        self.ws.alignments[str(name_tok)] = a

    def iset_block(self, tree: Tree):
        name_tok, low_tok, high_tok, *lines = tree.children
        if not self.claim("interventions", name_tok):
            return
        low, high = self._models(tree, low_tok, high_tok)
        if low is None or high is None:
            return
        lo, hi = [], []
        ok = True
        for line in lines:
            level, iv = line.children
            try:
                i = _intervention(iv)
            except (ModelError, ValueError) as exc:
                self.error(getattr(exc, "code", "syntax-error"), str(exc), line)
                ok = False
                continue
            m = low if str(level) == "low" else high
            try:
                validate_intervention(m, i)
            except ModelError as exc:
                for p in exc.problems:
                    self.error(p.code, f"{level} intervention {i}: {p.message}", line)
                ok = False
                continue
            (lo if str(level) == "low" else hi).append(i)
        if ok:
            self.ws.intervention_sets[str(name_tok)] = InterventionSets(str(name_tok), low, high, tuple(lo), tuple(hi))


def parse_workspace(text: str) -> Workspace:
    """Parse and fully validate a workspace; raises WorkspaceError with positioned diagnostics."""
    if text.startswith("﻿"):
        text = text[1:]
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    if not text.endswith("\n"):
        text += "\n"
    try:
        tree = _parser.parse(text, start="start")
    except UnexpectedInput as exc:
        raise WorkspaceError([_syntax(exc, text)]) from None
    return _Loader(text).load(tree)


def load_workspace(path: str | Path) -> Workspace:
    return parse_workspace(Path(path).read_text(encoding="utf-8"))


FIXTURES = ("fig2", "fig3", "fig4")


def fixture_text(name: str) -> str:
    if name not in FIXTURES:
        raise KeyError(f"no bundled fixture {name!r}; choose from {', '.join(FIXTURES)}")
    return resources.files("softabs.fixtures").joinpath(f"{name}.sca").read_text(encoding="utf-8")


def load_fixture(name: str) -> Workspace:
    return parse_workspace(fixture_text(name))


def _names(ns) -> str:
    return ", ".join(ns)


def _group(vars_: dict[str, Domain]) -> list[tuple[list[str], Domain]]:
    """Consecutive variables sharing a domain share a declaration line."""
    out: list[tuple[list[str], Domain]] = []
    for v, d in vars_.items():
        if out and _dom_sig(out[-1][1]) == _dom_sig(d):
            out[-1][0].append(v)
        else:
            out.append(([v], d))
    return out


def serialize_workspace(w: Workspace) -> str:
    """Canonical text: blocks sorted by kind then name, domains inlined, LF line endings."""
    out: list[str] = []
    for name in sorted(w.models):
        m = w.models[name]
        lines = [f"model {name}"]
        for vs, d in _group(m.exogenous):
            lines.append(f"  exo {_names(vs)} : {{{format_domain(d)}}}")
        for vs, d in _group(m.endogenous):
            lines.append(f"  endo {_names(vs)} : {{{format_domain(d)}}}")
        for x in m.endo:
            lines.append(f"  eq {x} := {render(m.equations[x])}")
        if m.weights is not None:
            for key, wt in m.weights.items():
                lines.append("  " + " ".join(["weight", *(format_value(v) for v in key), "=", str(wt)]))
        lines.append("end")
        out.append("\n".join(lines))
    for name in sorted(w.taus):
        t = w.taus[name]
        lines = [f"tau {name} : {t.low.name} -> {t.high.name}"]
        for y in (*t.high.endo, *t.high.exo):
            comp = t.endo.get(y, t.exo.get(y))
            lines.append(f"  {y} := {render(comp)}")
        lines.append("end")
        out.append("\n".join(lines))
    for name in sorted(w.alignments):
        a = w.alignments[name]
        lines = [f"align {name} : {a.tau.name}"]
        for y in (*a.high.endo, *a.high.exo):
            lines.append(f"  {y} : {{{_names(a.pi[y])}}}")
        lines.append("end")
        out.append("\n".join(lines))
    for name in sorted(w.intervention_sets):
        s = w.intervention_sets[name]
        lines = [f"interventions {name} : {s.low_model.name} -> {s.high_model.name}"]
        lines += [f"  low {i}" for i in s.low]
        lines += [f"  high {j}" for j in s.high]
        lines.append("end")
        out.append("\n".join(lines))
    return "\n\n".join(out) + ("\n" if out else "")
