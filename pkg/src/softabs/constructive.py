"""Alignments and the closed-form intervention map of constructive abstractions."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from . import grid
from .abstraction import TauMap, check_soft_abstraction
from .errors import AlignmentError, IllDefinedOmegaError, NoPreimageError, PreconditionError, Problem
from .expr import Const, Expr, Table, Value
from .scm import Intervention, Scm, apply_intervention, format_setting, same_equations, validate_intervention


@dataclass(frozen=True, eq=False)
class Alignment:
    """Π: each high-level variable mapped to a cluster of low-level variables of the same kind."""

    tau: TauMap
    pi: Mapping[str, tuple[str, ...]]
    name: str = "pi"

    def __post_init__(self):
        low, high = self.tau.low, self.tau.high
        problems: list[Problem] = []
        pi: dict[str, tuple[str, ...]] = {}
        for y in (*high.endo, *high.exo):
            if y not in self.pi:
                problems.append(Problem("alignment-invalid", f"alignment {self.name} has no cluster for {y}", ("align", y)))
                continue
            pool = low.endo if y in high.endogenous else low.exo
            cluster = set(self.pi[y])
            bad = cluster - set(pool)
            if bad:
                kind = "endogenous" if y in high.endogenous else "exogenous"
                problems.append(Problem(
                    "alignment-invalid",
                    f"cluster of {y} contains {sorted(bad)}, which are not low-level {kind} variables",
                    ("align", y),
                ))
                continue
            pi[y] = tuple(v for v in pool if v in cluster)
        for y in self.pi:
            if y not in high.endogenous and y not in high.exogenous:
                problems.append(Problem("alignment-invalid", f"{y} is not a high-level variable", ("align", y)))
        if problems:
            raise AlignmentError(problems)
        object.__setattr__(self, "pi", pi)

    @property
    def low(self) -> Scm:
        return self.tau.low

    @property
    def high(self) -> Scm:
        return self.tau.high

    def cluster_sizes(self, y: str) -> tuple[int, ...]:
        return tuple(len(self.low.domain(v)) for v in self.pi[y])

    @cached_property
    def _factors(self) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        """Per high variable: (tau_per table over the cluster, mask of violating low settings)."""
        out = {}
        low = self.low
        grids = {
            "endo": dict(zip(low.endo, grid.enumerate_indices(low.endo_sizes))),
            "exo": dict(zip(low.exo, grid.enumerate_indices(low.exo_sizes))),
        }
        for y, cluster in self.pi.items():
            comp = self.tau.parts[y]
            kind = "endo" if y in self.high.endogenous else "exo"
            sizes = self.cluster_sizes(y)
            cc = grid.encode([grids[kind][v] for v in cluster], sizes)
            cc = np.broadcast_to(cc, comp.shape)
            n = grid.total(sizes)
            lo = np.full(n, np.iinfo(np.int64).max)
            hi = np.full(n, -1)
            np.minimum.at(lo, cc, comp)
            np.maximum.at(hi, cc, comp)
            bad = (lo != hi)[cc]
            out[y] = (lo.reshape(sizes), bad)
        return out

    def tau_per(self, y: str) -> np.ndarray:
        """Index table of tau_y over val(Π(y)); meaningful only when tau factors through Π."""
        return self._factors[y][0]


@dataclass
class AlignmentReport:
    factorizes: bool
    violations: list[tuple[str, dict[str, Value]]]
    partition: bool
    overlaps: list[tuple[str, str, tuple[str, ...]]]
    uncovered: tuple[str, ...]

    @property
    def valid(self) -> bool:
        return self.factorizes

    @property
    def constructive(self) -> bool:
        return self.factorizes and self.partition


def _overlaps(a: Alignment, names: Sequence[str]) -> list[tuple[str, str, tuple[str, ...]]]:
    out = []
    for n, y in enumerate(names):
        for z in names[n + 1 :]:
            shared = tuple(v for v in a.pi[y] if v in a.pi[z])
            if shared:
                out.append((y, z, shared))
    return out


def validate_alignment(a: Alignment) -> AlignmentReport:
    """Exhaustive factorisation check of tau through Π, plus cluster disjointness."""
    low, high = a.low, a.high
    violations = []
    factorizes = True
    for y, (_, bad) in a._factors.items():
        if not bad.any():
            continue
        factorizes = False
        names = low.endo if y in high.endogenous else low.exo
        sizes = low.endo_sizes if y in high.endogenous else low.exo_sizes
        for code in np.flatnonzero(bad):
            idx = grid.decode(code, sizes)
            violations.append((y, {v: low.domain(v).value(k) for v, k in zip(names, idx)}))
    overlaps = _overlaps(a, high.endo) + _overlaps(a, high.exo)
    covered = set().union(*a.pi.values()) if a.pi else set()
    uncovered = tuple(v for v in (*low.endo, *low.exo) if v not in covered)
    return AlignmentReport(factorizes, violations, not overlaps, overlaps, uncovered)


def _pick(candidates: np.ndarray, rng) -> int:
    if rng is None:
        return int(candidates[0])
    return int(candidates[int(rng.integers(len(candidates)))])


def preimage(a: Alignment, value: Value, y: str, rng=None) -> dict[str, Value]:
    """A setting of Π(y) that tau_y maps to ``value``: the first one in canonical order, or a random one."""
    idx = a.high.domain(y).index(value)
    return _cluster_setting(a, y, _preimage_code(a, y, idx, rng))


def _preimage_code(a: Alignment, y: str, idx: int, rng) -> int:
    found = np.flatnonzero(a.tau_per(y).reshape(-1) == idx)
    if not len(found):
        raise NoPreimageError(f"value {a.high.domain(y).value(idx)!r} of {y} has no preimage over {list(a.pi[y])}")
    return _pick(found, rng)


def _cluster_setting(a: Alignment, y: str, code: int) -> dict[str, Value]:
    idx = grid.decode(code, a.cluster_sizes(y))
    return {v: a.low.domain(v).value(k) for v, k in zip(a.pi[y], idx)}


def _inverse(a: Alignment, point: Mapping[str, int], kind: str, disjoint: bool, rng) -> dict[str, int]:
    """Low-level indices of a preimage of a high-level point (indices), cluster by cluster when possible."""
    low, high = a.low, a.high
    names = low.endo if kind == "endo" else low.exo
    hnames = high.endo if kind == "endo" else high.exo
    if not disjoint:
        table = a.tau.endo_table if kind == "endo" else a.tau.exo_table
        hsizes = high.endo_sizes if kind == "endo" else high.exo_sizes
        lsizes = low.endo_sizes if kind == "endo" else low.exo_sizes
        code = int(grid.encode([point[h] for h in hnames], hsizes))
        found = np.flatnonzero(table == code)
        if not len(found):
            raise NoPreimageError(f"high-level setting has no preimage under {a.tau.name}")
        return {v: int(k) for v, k in zip(names, grid.decode(_pick(found, rng), lsizes))}
    out = {v: (0 if rng is None else int(rng.integers(len(low.domain(v))))) for v in names}
    for h in hnames:
        if not a.pi[h]:
            if int(a.tau_per(h)) != point[h]:
                raise NoPreimageError(f"{h} is constant under {a.tau.name}")
            continue
        code = _preimage_code(a, h, point[h], rng)
        for v, k in zip(a.pi[h], grid.decode(code, a.cluster_sizes(h))):
            out[v] = int(k)
    return out


def _as_expr(high: Scm, y: str, pa: Sequence[str], g: np.ndarray) -> Expr:
    dom = high.endogenous[y]
    flat = g.reshape(-1)
    if (flat == flat[0]).all():
        return Const(dom.value(flat[0]))
    rows = []
    for n, idx in enumerate(np.ndindex(*g.shape)):
        key = tuple(high.domain(p).value(k) for p, k in zip(pa, idx))
        rows.append((key, dom.value(flat[n])))
    return Table(tuple(pa), tuple(rows))


def _g_canonical(a: Alignment, li: Scm, y: str, disjoint: tuple[bool, bool], rng) -> np.ndarray:
    high = a.high
    pa = high.parents(y)
    shape = tuple(len(high.domain(p)) for p in pa)
    g = np.empty(shape, dtype=np.int64)
    cluster = a.pi[y]
    tper = a.tau_per(y)
    for idx in np.ndindex(*shape):
        fixed = dict(zip(pa, idx))
        point = {}
        for h in (*high.endo, *high.exo):
            if h in fixed:
                point[h] = fixed[h]
            else:
                point[h] = 0 if rng is None else int(rng.integers(len(high.domain(h))))
        x = _inverse(a, point, "endo", disjoint[0], rng)
        e = _inverse(a, point, "exo", disjoint[1], rng)
        step = li.step_indices({k: np.asarray(v) for k, v in x.items()}, {k: np.asarray(v) for k, v in e.items()})
        g[idx] = tper[tuple(int(step[v]) for v in cluster)] if cluster else int(tper)
    return g


def _check_full(a: Alignment, li: Scm, y: str, g: np.ndarray) -> None:
    """Every low-level (x, e) is a preimage of (tau x, tau e); all of them must agree with ``g``."""
    low, high = a.low, a.high
    steps = li.step_tensor()
    shape = low.endo_sizes + low.exo_sizes
    cluster = a.pi[y]
    tper = a.tau_per(y)
    if cluster:
        got = tper[tuple(np.broadcast_to(steps[v], shape) for v in cluster)]
    else:
        got = np.broadcast_to(tper, shape)
    nx, ne = grid.total(low.endo_sizes), grid.total(low.exo_sizes)
    got = got.reshape(nx, ne)
    pa = high.parents(y)
    coords = [a.tau.parts[p][:, None] if p in high.endogenous else a.tau.parts[p][None, :] for p in pa]
    want = g[tuple(np.broadcast_to(c, (nx, ne)) for c in coords)] if pa else np.broadcast_to(g, (nx, ne))
    bad = np.argwhere(got != want)
    if len(bad):
        xc, ec = (int(v) for v in bad[0])
        x = {v: low.domain(v).value(k) for v, k in zip(low.endo, grid.decode(xc, low.endo_sizes))}
        e = {v: low.domain(v).value(k) for v, k in zip(low.exo, grid.decode(ec, low.exo_sizes))}
        raise IllDefinedOmegaError(
            f"g_{y} depends on the choice of preimage: x = {format_setting(x)}, e = {format_setting(e)} "
            f"gives {high.domain(y).value(got[xc, ec])}, the canonical table gives {high.domain(y).value(want[xc, ec])}"
        )


def explicit_omega(a: Alignment, i: Intervention, rng=None, full: bool = False) -> Intervention:
    """ω(i) in closed form: g_Y(y, u) = tau_Y(F^i_Π(Y)(tau^-1(y), tau^-1(u))).

    Only high variables whose cluster meets a target are candidates, and a
    candidate whose g_Y equals G_Y is dropped. ``rng`` (a numpy Generator)
    picks random preimages instead of canonical ones; ``full`` also checks
    every preimage of every high-level point.
    """
    low, high = a.low, a.high
    validate_intervention(low, i)
    report = validate_alignment(a)
    if not report.factorizes:
        y, x = report.violations[0]
        raise AlignmentError(f"tau does not factor through the cluster of {y}, e.g. at {format_setting(x)}", ("align", y))
    li = apply_intervention(low, i)
    targets = set(i.targets)
    disjoint = (not _overlaps(a, high.endo), not _overlaps(a, high.exo))
    reps: dict[str, Expr] = {}
    for y in high.endo:
        if not targets & set(a.pi[y]):
            continue
        g = _g_canonical(a, li, y, disjoint, rng)
        if full:
            _check_full(a, li, y, g)
        if np.array_equal(g, high.table(y)):
            continue
        reps[y] = _as_expr(high, y, high.parents(y), g)
    return Intervention.of(reps)


@dataclass
class CrosscheckRow:
    low: Intervention
    explicit: Intervention
    oracle: Intervention
    match: bool
    admissible: bool


@dataclass
class CrosscheckReport:
    rows: list[CrosscheckRow] = field(default_factory=list)

    @property
    def mismatches(self) -> list[CrosscheckRow]:
        return [r for r in self.rows if not r.match]

    @property
    def missing(self) -> list[CrosscheckRow]:
        """Rows whose explicit ω(i) is not in 𝒥."""
        return [r for r in self.rows if not r.admissible]

    @property
    def ok(self) -> bool:
        return not self.mismatches and not self.missing


def crosscheck_explicit(a: Alignment, I: Sequence[Intervention], J: Sequence[Intervention]) -> CrosscheckReport:
    """Compare the closed-form ω with the unique ω found by exhaustive search.

    Agreement is table equality: both sides must change exactly the same
    structural equations of H in the same way.
    """
    verdict = check_soft_abstraction(a.tau, I, J)
    if not verdict.holds:
        raise PreconditionError("soft abstraction does not hold: " + "; ".join(verdict.failures))
    high = a.high
    report = CrosscheckReport()
    for i in verdict.low:
        exp = explicit_omega(a, i)
        oracle = verdict.omega[i]
        admissible = any(same_equations(high, exp, j) for j in verdict.high)
        report.rows.append(CrosscheckRow(i, exp, oracle, same_equations(high, exp, oracle), admissible))
    return report
