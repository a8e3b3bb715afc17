"""tau maps, the three abstraction relations, omega search and ambiguity detection.

All checks are exhaustive. Settings are handled as flat mixed-radix codes
(see :mod:`softabs.grid`), which makes "the first counterexample" well
defined: endogenous settings vary slowest, exogenous settings fastest,
and within each the first declared variable is most significant.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from . import grid
from .errors import NonSurjectiveTauError, NotHardError, Problem
from .expr import Expr, Value, format_value, leaves
from .interventions import _image_mask, hard_restriction, intervention_key, soft_restriction
from .scm import (
    EPS,
    Intervention,
    Scm,
    apply_intervention,
    format_setting,
    raise_problems,
    replacement_table,
    tabulate,
    validate_intervention,
)

RELATIONS = ("tau", "low-soft", "soft")


class AbstractionWarning(UserWarning):
    """Duplicate or degenerate intervention sets."""


def _component(low: Scm, high: Scm, target: str, e: Expr, names: Sequence[str], problems: list) -> np.ndarray | None:
    """Index array of one tau component, flattened over the product of ``names``."""
    ls = tuple(n for n in names if n in leaves(e))
    vals = tabulate(e, ls, [low.domain(n) for n in ls])
    idx = high.domain(target).indices(vals)
    if (idx < 0).any():
        problems.append(Problem(
            "domain-closure-violation",
            f"tau component for {target} leaves val({target}) = {{{high.domain(target)}}}",
            ("tau", target),
        ))
        return None
    axes = tuple(names)
    full = np.broadcast_to(grid.embed(idx, ls, axes), [len(low.domain(n)) for n in axes])
    return full.reshape(-1)


@dataclass(frozen=True, eq=False)
class TauMap:
    """Surjective maps tau_Y: val(X) -> val(Y) and tau_U: val(E) -> val(U).

    Each high-level variable gets one component expression over low-level
    variables of the same kind. ``endo_table`` and ``exo_table`` hold the
    composed maps as arrays from low-level codes to high-level codes.
    """

    low: Scm
    high: Scm
    endo: Mapping[str, Expr]
    exo: Mapping[str, Expr]
    name: str = "tau"

    def __post_init__(self):
        object.__setattr__(self, "endo", {y: self.endo[y] for y in self.high.endo if y in self.endo} | dict(self.endo))
        object.__setattr__(self, "exo", {u: self.exo[u] for u in self.high.exo if u in self.exo} | dict(self.exo))
        problems: list[Problem] = []
        parts: dict[str, np.ndarray] = {}
        for comps, hvars, lvars, kind in (
            (self.endo, self.high.endo, self.low.endo, "endogenous"),
            (self.exo, self.high.exo, self.low.exo, "exogenous"),
        ):
            for y in hvars:
                if y not in comps:
                    problems.append(Problem("missing-tau-component", f"tau {self.name} has no component for {y}", ("tau", y)))
            for y, e in comps.items():
                if y not in hvars:
                    problems.append(Problem("unknown-variable", f"tau {self.name}: {y} is not a high-level {kind} variable", ("tau", y)))
                    continue
                bad = leaves(e) - set(lvars)
                if bad:
                    problems.append(Problem(
                        "unknown-variable",
                        f"tau component for {y} reads {sorted(bad)}, not low-level {kind} variables",
                        ("tau", y),
                    ))
                    continue
                part = _component(self.low, self.high, y, e, lvars, problems)
                if part is not None:
                    parts[y] = part
        if problems:
            raise_problems(problems)
        for y, part in parts.items():
            dom = self.high.domain(y)
            hit = np.zeros(len(dom), dtype=bool)
            hit[part] = True
            if not hit.all():
                problems.append(Problem(
                    "non-surjective-tau",
                    f"tau {self.name} is not surjective: no low-level setting maps to {y}={format_value(dom.value(int(np.argmin(hit))))}",
                    ("tau", y),
                ))
        if problems:
            raise NonSurjectiveTauError(problems)
        object.__setattr__(self, "parts", parts)
        endo_table = grid.encode([parts[y] for y in self.high.endo], self.high.endo_sizes)
        exo_table = grid.encode([parts[u] for u in self.high.exo], self.high.exo_sizes)
        endo_table = np.broadcast_to(endo_table, (grid.total(self.low.endo_sizes),)).copy()
        exo_table = np.broadcast_to(exo_table, (grid.total(self.low.exo_sizes),)).copy()
        for tab, sizes, kind in ((endo_table, self.high.endo_sizes, "endogenous"), (exo_table, self.high.exo_sizes, "exogenous")):
            hit = np.zeros(grid.total(sizes), dtype=bool)
            hit[tab] = True
            if not hit.all():
                missing = int(np.argmin(hit))
                names = self.high.endo if kind == "endogenous" else self.high.exo
                setting = {n: self.high.domain(n).value(k) for n, k in zip(names, grid.decode(missing, sizes))}
                raise NonSurjectiveTauError([Problem(
                    "non-surjective-tau",
                    f"tau {self.name} is not surjective: high-level {kind} setting {format_setting(setting)} has no preimage",
                    ("tau", self.name),
                )])
        endo_table.setflags(write=False)
        exo_table.setflags(write=False)
        object.__setattr__(self, "endo_table", endo_table)
        object.__setattr__(self, "exo_table", exo_table)

    def map_endo(self, x: Mapping[str, Value]) -> dict[str, Value]:
        code = grid.encode([self.low.endogenous[n].index(x[n]) for n in self.low.endo], self.low.endo_sizes)
        return _setting(self.high, self.high.endo, int(self.endo_table[int(code)]))

    def map_exo(self, e: Mapping[str, Value]) -> dict[str, Value]:
        code = grid.encode([self.low.exogenous[n].index(e[n]) for n in self.low.exo], self.low.exo_sizes)
        return _setting(self.high, self.high.exo, int(self.exo_table[int(code)]))

    def image_mask(self, rs_mask: np.ndarray) -> np.ndarray:
        """tau_Y[S] as a mask over val(Y) for a mask S over val(X)."""
        out = np.zeros(grid.total(self.high.endo_sizes), dtype=bool)
        out[self.endo_table[rs_mask]] = True
        return out


def _setting(m: Scm, names: Sequence[str], code: int) -> dict[str, Value]:
    sizes = [len(m.domain(n)) for n in names]
    return {n: m.domain(n).value(k) for n, k in zip(names, grid.decode(code, sizes))}


@dataclass(frozen=True, eq=False)
class InterventionSets:
    """Admissible interventions ℐ on ``low_model`` and 𝒥 on ``high_model``."""

    name: str
    low_model: Scm
    high_model: Scm
    low: tuple[Intervention, ...]
    high: tuple[Intervention, ...]

    def __post_init__(self):
        object.__setattr__(self, "low", tuple(self.low))
        object.__setattr__(self, "high", tuple(self.high))
        for i in self.low:
            validate_intervention(self.low_model, i)
        for j in self.high:
            validate_intervention(self.high_model, j)


@dataclass(frozen=True)
class OmegaEntry:
    low: Intervention
    high: Intervention
    kind: str


KIND = {"tau": "restriction-matched", "low-soft": "restriction-matched", "soft": "consistency-matched"}


@dataclass(frozen=True)
class OmegaTable:
    """A finite map ℐ -> 𝒥."""

    entries: tuple[OmegaEntry, ...] = ()

    def __getitem__(self, i: Intervention) -> Intervention:
        for e in self.entries:
            if e.low == i:
                return e.high
        raise KeyError(str(i))

    def __len__(self) -> int:
        return len(self.entries)

    def as_dict(self) -> dict[Intervention, Intervention]:
        return {e.low: e.high for e in self.entries}

    def __str__(self) -> str:
        return "; ".join(f"{e.low} -> {e.high}" for e in self.entries) or "(empty)"


@dataclass(frozen=True)
class Counterexample:
    """A point where the two sides of a consistency equation differ."""

    intervention: Intervention
    candidate: Intervention
    exogenous: dict[str, Value]
    endogenous: dict[str, Value]
    lhs: dict[str, Value]
    rhs: dict[str, Value]

    def __str__(self) -> str:
        return (
            f"i = {self.intervention}, j = {self.candidate}: at x = {format_setting(self.endogenous)}, "
            f"e = {format_setting(self.exogenous)}: lhs {format_setting(self.lhs)} != rhs {format_setting(self.rhs)}"
        )


@dataclass(frozen=True)
class Rejection:
    reason: str
    counterexample: Counterexample | None = None


@dataclass(frozen=True)
class AmbiguityWitness:
    variable: str
    first: Intervention
    second: Intervention


@dataclass
class AbstractionVerdict:
    relation: str
    holds: bool
    low: tuple[Intervention, ...]
    high: tuple[Intervention, ...]
    candidates: dict[Intervention, tuple[Intervention, ...]]
    rejections: dict[tuple[Intervention, Intervention], Rejection]
    tables: list[OmegaTable]
    omega: OmegaTable | None = None
    counterexample: Counterexample | None = None
    failures: list[str] = field(default_factory=list)
    ambiguity: list[AmbiguityWitness] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    truncated: bool = False


def _dedupe(m: Scm, items: Sequence[Intervention], side: str, notes: list[str]) -> tuple[Intervention, ...]:
    seen: dict[tuple, Intervention] = {}
    for i in items:
        validate_intervention(m, i)
        key = intervention_key(m, i)
        if key in seen:
            msg = f"{side} intervention {i} has the same equations and restriction set as {seen[key]}; keeping the first"
            notes.append(msg)
            warnings.warn(msg, AbstractionWarning, stacklevel=3)
            continue
        seen[key] = i
    return tuple(seen.values())


class _Model:
    """Per-model cache of intervened models and their restriction sets."""

    def __init__(self, m: Scm):
        self.m = m
        self._cache: dict[Intervention, Scm] = {}

    def sub(self, i: Intervention) -> Scm:
        if i not in self._cache:
            self._cache[i] = apply_intervention(self.m, i)
        return self._cache[i]

    def solve_codes(self, i: Intervention) -> np.ndarray:
        """Endogenous code of M_i(e) for every exogenous code e."""
        mi = self.sub(i)
        exo = dict(zip(mi.exo, grid.enumerate_indices(mi.exo_sizes)))
        sol = mi.solve_indices(exo)
        codes = grid.encode([sol[x] for x in mi.endo], mi.endo_sizes)
        return np.broadcast_to(codes, (grid.total(mi.exo_sizes),))

    def step_codes(self, i: Intervention) -> np.ndarray:
        """Endogenous code of F^i(x, e), shape (|val X|, |val E|)."""
        mi = self.sub(i)
        tensors = mi.step_tensor()
        code = grid.encode([tensors[x] for x in mi.endo], mi.endo_sizes)
        shape = mi.endo_sizes + mi.exo_sizes
        return np.broadcast_to(code, shape).reshape(grid.total(mi.endo_sizes), grid.total(mi.exo_sizes))


def _restriction(m: Scm, i: Intervention, relation: str) -> np.ndarray:
    if relation == "tau":
        return hard_restriction(m, i).mask
    return soft_restriction(m, i).mask


def _solve_counterexample(tau: TauMap, L: _Model, H: _Model, i, j, lhs, rhs) -> Counterexample | None:
    bad = np.flatnonzero(lhs != rhs)
    if not len(bad):
        return None
    e = int(bad[0])
    x = int(L.solve_codes(i)[e])
    return Counterexample(
        i, j,
        _setting(tau.low, tau.low.exo, e),
        _setting(tau.low, tau.low.endo, x),
        _setting(tau.high, tau.high.endo, int(lhs[e])),
        _setting(tau.high, tau.high.endo, int(rhs[e])),
    )


def _step_counterexample(tau: TauMap, i, j, lhs, rhs) -> Counterexample | None:
    ne = lhs != rhs
    flat = int(np.argmax(ne))
    if not ne.reshape(-1)[flat]:
        return None
    x, e = divmod(flat, lhs.shape[1])
    return Counterexample(
        i, j,
        _setting(tau.low, tau.low.exo, e),
        _setting(tau.low, tau.low.endo, x),
        _setting(tau.high, tau.high.endo, int(lhs[x, e])),
        _setting(tau.high, tau.high.endo, int(rhs[x, e])),
    )


def _pair_checks(tau: TauMap, I, J, relation: str):
    """Candidates per i and the reason each rejected (i, j) pair fails."""
    L, H = _Model(tau.low), _Model(tau.high)
    rst_h = {j: _restriction(tau.high, j, relation) for j in J}
    candidates: dict[Intervention, tuple[Intervention, ...]] = {}
    rejections: dict[tuple[Intervention, Intervention], Rejection] = {}
    h_solve: dict[Intervention, np.ndarray] = {}
    h_step: dict[Intervention, np.ndarray] = {}
    for i in I:
        img = tau.image_mask(_restriction(tau.low, i, relation))
        if relation == "soft":
            step = L.step_codes(i)
            lhs = tau.endo_table[step]
        else:
            lhs = tau.endo_table[L.solve_codes(i)]
        ok = []
        for j in J:
            if not np.array_equal(img, rst_h[j]):
                rejections[(i, j)] = Rejection("restriction-mismatch")
                continue
            if relation == "soft":
                if j not in h_step:
                    h_step[j] = H.step_codes(j)
                rhs = h_step[j][tau.endo_table[:, None], tau.exo_table[None, :]]
                cex = _step_counterexample(tau, i, j, lhs, rhs)
            else:
                if j not in h_solve:
                    h_solve[j] = H.solve_codes(j)
                rhs = h_solve[j][tau.exo_table]
                cex = _solve_counterexample(tau, L, H, i, j, lhs, rhs)
            if cex is None:
                ok.append(j)
            else:
                rejections[(i, j)] = Rejection("inconsistent", cex)
        candidates[i] = tuple(ok)
    return candidates, rejections


def _surjective_exists(I, J, candidates) -> tuple[bool, list[Intervention]]:
    """A total ω with ω(i) ∈ C(i) covering J exists iff every C(i) is non-empty and J has a saturating matching."""
    if not J:
        return True, []
    rows, cols = [], []
    for r, j in enumerate(J):
        for c, i in enumerate(I):
            if j in candidates[i]:
                rows.append(r)
                cols.append(c)
    mat = csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(len(J), max(len(I), 1)))
    match = maximum_bipartite_matching(mat, perm_type="column")
    unmatched = [J[r] for r in range(len(J)) if match[r] < 0]
    return not unmatched, unmatched


def _enumerate(I, J, candidates, relation: str, limit: int | None) -> tuple[list[OmegaTable], bool]:
    tables: list[OmegaTable] = []
    kind = KIND[relation]
    need = set(J)
    count: dict[Intervention, int] = {}
    chosen: list[Intervention] = []
    truncated = False

    def rec(n: int) -> bool:
        nonlocal truncated
        if n == len(I):
            if all(count.get(j, 0) for j in need):
                tables.append(OmegaTable(tuple(OmegaEntry(i, j, kind) for i, j in zip(I, chosen))))
                if limit is not None and len(tables) >= limit:
                    truncated = True
                    return False
            return True
        uncovered = sum(1 for j in need if not count.get(j, 0))
        if uncovered > len(I) - n:
            return True
        for j in candidates[I[n]]:
            chosen.append(j)
            count[j] = count.get(j, 0) + 1
            go = rec(n + 1)
            count[j] -= 1
            chosen.pop()
            if not go:
                return False
        return True

    rec(0)
    return tables, truncated


def _check(tau: TauMap, I, J, relation: str, limit: int | None = 1000) -> AbstractionVerdict:
    if relation not in RELATIONS:
        raise ValueError(f"unknown relation {relation!r}; expected one of {RELATIONS}")
    notes: list[str] = []
    I = _dedupe(tau.low, I, "low-level", notes)
    J = _dedupe(tau.high, J, "high-level", notes)
    if relation == "tau":
        for i in (*I, *J):
            if not i.is_hard:
                raise NotHardError(f"tau abstraction needs hard interventions; {i} is soft")
    candidates, rejections = _pair_checks(tau, I, J, relation)
    failures: list[str] = []
    cex = None
    for i in I:
        if candidates[i]:
            continue
        failures.append(f"no admissible high-level intervention for {i}")
        if cex is None:
            for j in J:
                r = rejections.get((i, j))
                if r is not None and r.counterexample is not None:
                    cex = r.counterexample
                    break
    if not failures:
        ok, unmatched = _surjective_exists(I, J, candidates)
        if not ok:
            failures.append("omega cannot be surjective: nothing maps onto " + ", ".join(str(j) for j in unmatched))
    holds = not failures
    tables, truncated = _enumerate(I, J, candidates, relation, limit) if holds else ([], False)
    if relation == "soft" and len(tables) > 1:
        raise AssertionError("soft abstraction admits more than one omega")
    if relation == "tau":
        masks: dict[bytes, Intervention] = {}
        for j in J:
            key = hard_restriction(tau.high, j).mask.tobytes()
            if key in masks:
                notes.append(f"high-level interventions {masks[key]} and {j} have the same restriction set")
            masks.setdefault(key, j)
    return AbstractionVerdict(
        relation=relation,
        holds=holds,
        low=I,
        high=J,
        candidates=candidates,
        rejections=rejections,
        tables=tables,
        omega=tables[0] if tables else None,
        counterexample=cex,
        failures=failures,
        ambiguity=detect_ambiguity(tau.high, J),
        warnings=notes,
        truncated=truncated,
    )


def check_tau_abstraction(tau: TauMap, I: Sequence[Intervention], J: Sequence[Intervention], limit: int | None = 1000) -> AbstractionVerdict:
    """Hard-intervention abstraction: restriction match against Rst and solve-level consistency."""
    return _check(tau, I, J, "tau", limit)


def check_low_soft_abstraction(tau: TauMap, I: Sequence[Intervention], J: Sequence[Intervention], limit: int | None = 1000) -> AbstractionVerdict:
    """Soft restriction match plus tau_Y(L_i(e)) = H_j(tau_U(e)) for every e."""
    return _check(tau, I, J, "low-soft", limit)


def check_soft_abstraction(tau: TauMap, I: Sequence[Intervention], J: Sequence[Intervention], limit: int | None = 1000) -> AbstractionVerdict:
    """Soft restriction match plus one-step consistency at every (x, e)."""
    return _check(tau, I, J, "soft", limit)


def check(tau: TauMap, I, J, relation: str, limit: int | None = 1000) -> AbstractionVerdict:
    return _check(tau, I, J, relation, limit)


def search_omega(tau: TauMap, I, J, relation: str, limit: int | None = None) -> list[OmegaTable]:
    """Every total, surjective ω whose pairs pass the relation's per-pair conditions."""
    if relation not in RELATIONS:
        raise ValueError(f"unknown relation {relation!r}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AbstractionWarning)
        I = _dedupe(tau.low, I, "low-level", [])
        J = _dedupe(tau.high, J, "high-level", [])
    if relation == "tau" and not all(i.is_hard for i in (*I, *J)):
        raise NotHardError("tau abstraction needs hard interventions")
    candidates, _ = _pair_checks(tau, I, J, relation)
    if not all(candidates[i] for i in I):
        return []
    tables, _ = _enumerate(I, J, candidates, relation, limit)
    return tables


def detect_ambiguity(H: Scm, J: Sequence[Intervention]) -> list[AmbiguityWitness]:
    """Pairs of single-variable interventions that no solve-level check can tell apart.

    (j, j') qualify when they target the same variable V, give the same
    value of V at every exogenous setting, have the same image, and yet
    differ as functions.
    """
    singles = [j for j in J if len(j.targets) == 1]
    if not singles:
        return []
    exo = dict(zip(H.exo, grid.enumerate_indices(H.exo_sizes)))
    info = []
    for j in singles:
        (v,) = j.targets
        hj = apply_intervention(H, j)
        sol = np.broadcast_to(hj.solve_indices(exo)[v], (grid.total(H.exo_sizes),))
        info.append((v, replacement_table(H, v, j.replacements[0][1]), sol, _image_mask(H, j)))
    out = []
    for a in range(len(singles)):
        for b in range(a + 1, len(singles)):
            va, ta, sa, ia = info[a]
            vb, tb, sb, ib = info[b]
            if va != vb or np.array_equal(ta, tb):
                continue
            if np.array_equal(sa, sb) and np.array_equal(ia, ib):
                out.append(AmbiguityWitness(va, singles[a], singles[b]))
    return out


def soft_candidates(tau: TauMap, i: Intervention, J: Sequence[Intervention]) -> tuple[Intervention, ...]:
    """Members of 𝒥 that pass the soft per-pair conditions for ``i`` alone."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AbstractionWarning)
        J = _dedupe(tau.high, J, "high-level", [])
    validate_intervention(tau.low, i)
    candidates, _ = _pair_checks(tau, (i,), J, "soft")
    return candidates[i]


__all__ = [
    "AbstractionVerdict",
    "AbstractionWarning",
    "AmbiguityWitness",
    "Counterexample",
    "EPS",
    "InterventionSets",
    "OmegaEntry",
    "OmegaTable",
    "RELATIONS",
    "Rejection",
    "TauMap",
    "check",
    "check_low_soft_abstraction",
    "check_soft_abstraction",
    "check_tau_abstraction",
    "detect_ambiguity",
    "search_omega",
    "soft_candidates",
]
