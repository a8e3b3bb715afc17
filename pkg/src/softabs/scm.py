"""Finite-domain structural causal models and interventions."""

from __future__ import annotations

import graphlib
from dataclasses import dataclass, replace
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import grid
from .errors import (
    CyclicModelError,
    DomainClosureError,
    InterventionError,
    ModelError,
    NewParentError,
    Problem,
    TypeViolationError,
    UnknownTargetError,
    UnknownVariableError,
)
from .expr import Const, Expr, Value, evaluate, format_value, leaves, render

_ERRORS = {
    "unknown-variable": UnknownVariableError,
    "domain-closure-violation": DomainClosureError,
    "cyclic-model": CyclicModelError,
    "unknown-target": UnknownTargetError,
    "type-violation": TypeViolationError,
    "new-parent-violation": NewParentError,
}


def raise_problems(problems: list[Problem], default=ModelError):
    raise _ERRORS.get(problems[0].code, default)(problems)


@dataclass(frozen=True)
class Domain:
    """Ordered finite set of atomic values; declaration order is enumeration order."""

    values: tuple[Value, ...]

    def __post_init__(self):
        values = tuple(self.values)
        object.__setattr__(self, "values", values)
        if not values:
            raise ValueError("domain must be non-empty")
        for v in values:
            if not isinstance(v, (bool, int)):
                raise TypeError(f"domain values must be bool or int, got {v!r}")
        if len(set(values)) != len(values):
            raise ValueError(f"duplicate values in domain {values!r} (note T == 1, F == 0)")

    @classmethod
    def range(cls, lo: int, hi: int) -> "Domain":
        return cls(tuple(range(lo, hi + 1)))

    @classmethod
    def boolean(cls) -> "Domain":
        return cls((False, True))

    def __len__(self) -> int:
        return len(self.values)

    def __contains__(self, v) -> bool:
        return v in self.values

    def __iter__(self):
        return iter(self.values)

    def __str__(self) -> str:
        return format_domain(self)

    @cached_property
    def numeric(self) -> np.ndarray:
        return np.array([int(v) for v in self.values], dtype=np.int64)

    @cached_property
    def _sorted(self) -> tuple[np.ndarray, np.ndarray]:
        perm = np.argsort(self.numeric, kind="stable")
        return self.numeric[perm], perm

    def indices(self, values: np.ndarray) -> np.ndarray:
        """Domain index of every numeric value, ``-1`` where the value is not a member."""
        values = np.asarray(values, dtype=np.int64)
        keys, perm = self._sorted
        pos = np.clip(np.searchsorted(keys, values), 0, len(keys) - 1)
        return np.where(keys[pos] == values, perm[pos], -1)

    def index(self, v: Value) -> int:
        try:
            return self.values.index(v)
        except ValueError:
            raise ValueError(f"{format_value(v)} is not in domain {self}") from None

    def value(self, idx: int) -> Value:
        return self.values[int(idx)]

    @property
    def is_boolean(self) -> bool:
        return all(isinstance(v, bool) for v in self.values)


def format_domain(d: Domain) -> str:
    """Compact literal: consecutive ascending integer runs become ``a..b``."""
    parts: list[str] = []
    vals = list(d.values)
    n = 0
    while n < len(vals):
        v = vals[n]
        m = n
        if not isinstance(v, bool):
            while m + 1 < len(vals) and not isinstance(vals[m + 1], bool) and vals[m + 1] == vals[m] + 1:
                m += 1
        if m - n >= 2:
            parts.append(f"{v}..{vals[m]}")
        else:
            parts.extend(format_value(x) for x in vals[n : m + 1])
        n = m + 1
    return ", ".join(parts)


def tabulate(e: Expr, names: Sequence[str], domains: Sequence[Domain]) -> np.ndarray:
    """Numeric value of ``e`` at every point of ``names``' product domain (one axis per name)."""
    shape = tuple(len(d) for d in domains)
    env = {}
    for n, (name, d) in enumerate(zip(names, domains)):
        s = [1] * len(shape)
        s[n] = len(d)
        env[name] = d.numeric.reshape(s)
    return np.broadcast_to(evaluate(e, env), shape)


@dataclass(frozen=True)
class Scm:
    """A structural causal model ``(X, E, F, Pr_E)`` over finite domains.

    Construction validates everything (declared leaves, acyclicity, domain
    closure) and compiles each equation into an index table over its
    parents, so a constructed model is always safe to solve.
    """

    endogenous: Mapping[str, Domain]
    exogenous: Mapping[str, Domain]
    equations: Mapping[str, Expr]
    weights: Mapping[tuple, Fraction] | None = None
    name: str = "M"

    def __post_init__(self):
        object.__setattr__(self, "endogenous", dict(self.endogenous))
        object.__setattr__(self, "exogenous", dict(self.exogenous))
        object.__setattr__(self, "equations", {x: self.equations[x] for x in self.endogenous if x in self.equations} | dict(self.equations))
        if self.weights is not None:
            object.__setattr__(self, "weights", {tuple(k): Fraction(v) for k, v in self.weights.items()})
        self._validate()

    def _validate(self):
        problems: list[Problem] = []
        for x in self.endogenous:
            if x in self.exogenous:
                problems.append(Problem("duplicate-variable", f"{x} is both endogenous and exogenous", ("var", x)))
        for x in self.endogenous:
            if x not in self.equations:
                problems.append(Problem("missing-equation", f"no equation for {x}", ("var", x)))
        known = set(self.endogenous) | set(self.exogenous)
        for x, e in self.equations.items():
            if x not in self.endogenous:
                problems.append(Problem("unknown-variable", f"equation for undeclared variable {x}", ("eq", x)))
                continue
            for leaf in sorted(leaves(e) - known):
                problems.append(Problem("unknown-variable", f"equation for {x} reads undeclared variable {leaf}", ("eq", x)))
        if problems:
            raise_problems(problems)

        graph = {x: [p for p in self.parents(x) if p in self.endogenous] for x in self.endogenous}
        try:
            order = tuple(graphlib.TopologicalSorter(graph).static_order())
        except graphlib.CycleError as exc:
            cycle = " -> ".join(exc.args[1])
            raise CyclicModelError([Problem("cyclic-model", f"model {self.name} has a cycle {cycle}", ("model", self.name))]) from None
        object.__setattr__(self, "_order", order)

        tables = {}
        for x in self.endogenous:
            pa = self.parents(x)
            try:
                vals = tabulate(self.equations[x], pa, [self.domain(p) for p in pa])
            except ModelError as exc:
                problems.extend(Problem(p.code, f"equation for {x}: {p.message}", ("eq", x)) for p in exc.problems)
                continue
            idx = self.endogenous[x].indices(vals)
            bad = np.argwhere(idx < 0)
            if len(bad):
                at = {p: self.domain(p).value(k) for p, k in zip(pa, bad[0])}
                problems.append(Problem(
                    "domain-closure-violation",
                    f"equation for {x} yields {int(vals[tuple(bad[0])])} outside val({x}) = {{{self.endogenous[x]}}} at {format_setting(at)}",
                    ("eq", x),
                ))
                continue
            idx.setflags(write=False)
            tables[x] = idx
        if self.weights is not None:
            for key, w in self.weights.items():
                ok = len(key) == len(self.exogenous) and all(v in d for v, d in zip(key, self.exogenous.values()))
                if not ok or w < 0:
                    problems.append(Problem("invalid-weight", f"bad weight {key} = {w} in model {self.name}", ("model", self.name)))
        if problems:
            raise_problems(problems)
        object.__setattr__(self, "_tables", tables)

    @property
    def endo(self) -> tuple[str, ...]:
        return tuple(self.endogenous)

    @property
    def exo(self) -> tuple[str, ...]:
        return tuple(self.exogenous)

    @property
    def order(self) -> tuple[str, ...]:
        """Endogenous variables in topological order."""
        return self._order

    def domain(self, name: str) -> Domain:
        if name in self.endogenous:
            return self.endogenous[name]
        if name in self.exogenous:
            return self.exogenous[name]
        raise UnknownVariableError(f"model {self.name} has no variable {name!r}", ("var", name))

    def parents(self, x: str) -> tuple[str, ...]:
        """pa(x): leaves of its equation, endogenous first, each group in declaration order."""
        ls = leaves(self.equations[x])
        return tuple(v for v in (*self.endogenous, *self.exogenous) if v in ls)

    def table(self, x: str) -> np.ndarray:
        """Index table of F_x with one axis per parent."""
        return self._tables[x]

    @property
    def endo_sizes(self) -> tuple[int, ...]:
        return tuple(len(d) for d in self.endogenous.values())

    @property
    def exo_sizes(self) -> tuple[int, ...]:
        return tuple(len(d) for d in self.exogenous.values())

    # ---- index-level evaluation -------------------------------------------------

    def _gather(self, x: str, source: Mapping[str, np.ndarray], shape) -> np.ndarray:
        t = self.table(x)
        pa = self.parents(x)
        if not pa:
            return np.broadcast_to(t, shape)
        return t[tuple(source[p] for p in pa)]

    def solve_indices(self, exo: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
        """Vectorised solve over arrays of exogenous indices."""
        shape = np.broadcast_shapes(*(np.shape(exo[u]) for u in self.exogenous)) if self.exogenous else ()
        vals = dict(exo)
        for x in self.order:
            vals[x] = self._gather(x, vals, shape)
        return {x: vals[x] for x in self.endogenous}

    def step_indices(self, endo: Mapping[str, np.ndarray], exo: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
        """One simultaneous application of every equation."""
        source = {**endo, **exo}
        shape = np.broadcast_shapes(*(np.shape(v) for v in source.values())) if source else ()
        return {x: self._gather(x, source, shape) for x in self.endogenous}

    def step_tensor(self) -> dict[str, np.ndarray]:
        """Each F_x as an index array broadcastable over axes ``endo + exo``."""
        axes = self.endo + self.exo
        return {x: grid.embed(self.table(x), self.parents(x), axes) for x in self.endogenous}

    def index_setting(self, setting: Mapping[str, Value], names: Sequence[str]) -> dict[str, np.ndarray]:
        extra = set(setting) - set(names)
        if extra:
            raise UnknownVariableError(f"unexpected variables {sorted(extra)} for model {self.name}")
        out = {}
        for n in names:
            if n not in setting:
                raise UnknownVariableError(f"setting does not assign {n}", ("var", n))
            out[n] = np.asarray(self.domain(n).index(setting[n]))
        return out

    def value_setting(self, idx: Mapping[str, np.ndarray], names: Sequence[str] | None = None) -> dict[str, Value]:
        names = list(idx) if names is None else names
        return {n: self.domain(n).value(int(idx[n])) for n in names}


def format_setting(s: Mapping[str, Value]) -> str:
    return "{" + ", ".join(f"{k}={format_value(v)}" for k, v in s.items()) + "}"


def project(s: Mapping[str, Value], names: Iterable[str]) -> dict[str, Value]:
    """Restriction of the setting ``s`` to ``names``."""
    names = set(names)
    missing = names - set(s)
    if missing:
        raise UnknownVariableError(f"cannot project onto unassigned variables {sorted(missing)}")
    return {k: v for k, v in s.items() if k in names}


def solve(m: Scm, e: Mapping[str, Value]) -> dict[str, Value]:
    """The endogenous setting M(e) induced by a total exogenous setting."""
    idx = m.solve_indices(m.index_setting(e, m.exo))
    return m.value_setting(idx, m.endo)


def eval_equations(m: Scm, x: Mapping[str, Value], e: Mapping[str, Value]) -> dict[str, Value]:
    """F(x, e): every equation evaluated once at the given point (no fixed point)."""
    idx = m.step_indices(m.index_setting(x, m.endo), m.index_setting(e, m.exo))
    return m.value_setting(idx, m.endo)


@dataclass(frozen=True)
class Intervention:
    """``(V <- f)``: replacement equations for a set of endogenous targets.

    Replacements are kept sorted by target so equal interventions compare
    and hash equal. The empty intervention is ``EPS``.
    """

    replacements: tuple[tuple[str, Expr], ...] = ()

    def __post_init__(self):
        reps = tuple(sorted(((str(t), f) for t, f in self.replacements), key=lambda p: p[0]))
        targets = [t for t, _ in reps]
        if len(set(targets)) != len(targets):
            raise InterventionError(f"duplicate intervention targets {targets}")
        for _, f in reps:
            if not isinstance(f, Expr):
                raise TypeError(f"replacement must be an Expr, got {f!r}")
        object.__setattr__(self, "replacements", reps)

    @classmethod
    def of(cls, mapping: Mapping[str, Expr]) -> "Intervention":
        return cls(tuple(mapping.items()))

    @classmethod
    def hard(cls, mapping: Mapping[str, Value]) -> "Intervention":
        return cls(tuple((t, Const(v)) for t, v in mapping.items()))

    @property
    def targets(self) -> tuple[str, ...]:
        return tuple(t for t, _ in self.replacements)

    @property
    def is_empty(self) -> bool:
        return not self.replacements

    @property
    def is_hard(self) -> bool:
        return all(isinstance(f, Const) for _, f in self.replacements)

    def as_dict(self) -> dict[str, Expr]:
        return dict(self.replacements)

    def constants(self) -> dict[str, Value]:
        return {t: f.value for t, f in self.replacements if isinstance(f, Const)}

    def __str__(self) -> str:
        if self.is_empty:
            return "eps"
        return ", ".join(f"{t} <- {render(f)}" for t, f in self.replacements)


EPS = Intervention()


def replacement_table(m: Scm, target: str, f: Expr) -> np.ndarray:
    """Index table of a replacement over the *original* parents of ``target``."""
    pa = m.parents(target)
    vals = tabulate(f, pa, [m.domain(p) for p in pa])
    return m.endogenous[target].indices(vals)


def validate_intervention(m: Scm, i: Intervention) -> None:
    """Raise unless ``i`` keeps types and parents of every target it replaces."""
    problems: list[Problem] = []
    for t, f in i.replacements:
        if t not in m.endogenous:
            problems.append(Problem("unknown-target", f"{t} is not an endogenous variable of {m.name}", ("target", t)))
            continue
        extra = leaves(f) - set(m.parents(t))
        if extra:
            problems.append(Problem(
                "new-parent-violation",
                f"replacement for {t} reads {sorted(extra)} outside pa({t}) = {list(m.parents(t))}",
                ("target", t),
            ))
            continue
        try:
            idx = replacement_table(m, t, f)
        except ModelError as exc:
            problems.extend(Problem(p.code, f"replacement for {t}: {p.message}", ("target", t)) for p in exc.problems)
            continue
        if (idx < 0).any():
            problems.append(Problem("type-violation", f"replacement for {t} leaves val({t}) = {{{m.endogenous[t]}}}", ("target", t)))
    if problems:
        raise_problems(problems, InterventionError)


def apply_intervention(m: Scm, i: Intervention) -> Scm:
    """The intervened model M_i."""
    validate_intervention(m, i)
    if i.is_empty:
        return m
    return replace(m, equations={**m.equations, **i.as_dict()})


def effective_tables(m: Scm, i: Intervention) -> tuple:
    """The replacement tables of ``i`` that actually change an equation of ``m``."""
    validate_intervention(m, i)
    key = []
    for t, f in i.replacements:
        tab = replacement_table(m, t, f)
        if not np.array_equal(tab, m.table(t)):
            key.append((t, tab.shape, tab.astype(np.int64).tobytes()))
    return tuple(key)


def same_equations(m: Scm, i: Intervention, j: Intervention) -> bool:
    """Table equality: M_i and M_j have identical structural equations."""
    return effective_tables(m, i) == effective_tables(m, j)
