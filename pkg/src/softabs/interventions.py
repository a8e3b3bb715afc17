"""Restriction sets, replacement images and the two intervention orderings."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Mapping

import numpy as np

from . import grid
from .errors import NotHardError
from .expr import Value
from .scm import Intervention, Scm, effective_tables, replacement_table, validate_intervention


def _image_mask(m: Scm, i: Intervention, full: bool = False) -> np.ndarray:
    """Boolean array over the product of target domains marking img(f)."""
    targets = i.targets
    shape = tuple(len(m.endogenous[t]) for t in targets)
    out = np.zeros(shape, dtype=bool)
    if not targets:
        out[()] = True
        return out
    if full:
        axes = m.endo + m.exo
    else:
        used = set().union(*(m.parents(t) for t in targets))
        axes = tuple(v for v in m.endo + m.exo if v in used)
    sizes = [len(m.domain(v)) for v in axes]
    cols = [
        np.broadcast_to(grid.embed(replacement_table(m, t, f), m.parents(t), axes), sizes).reshape(-1)
        for t, f in i.replacements
    ]
    out[tuple(cols)] = True
    return out


def image(m: Scm, i: Intervention, full: bool = False) -> frozenset[tuple[Value, ...]]:
    """Joint image of the replacement vector, as value tuples in ``i.targets`` order.

    By default the replacements are enumerated over the union of their
    original parents' domains; ``full=True`` enumerates all of
    val(X) x val(E), which gives the same set.
    """
    validate_intervention(m, i)
    mask = _image_mask(m, i, full)
    doms = [m.endogenous[t] for t in i.targets]
    return frozenset(tuple(d.value(k) for d, k in zip(doms, idx)) for idx in np.argwhere(mask))


@dataclass(frozen=True, eq=False)
class RestrictionSet:
    """A set of total endogenous settings of ``model``, stored as a mask over val(X)."""

    model: Scm
    label: str
    mask: np.ndarray

    def __len__(self) -> int:
        return int(self.mask.sum())

    def codes(self) -> np.ndarray:
        """Flat codes of the members in canonical order."""
        return np.flatnonzero(self.mask)

    def settings(self) -> list[dict[str, Value]]:
        return list(self)

    def __iter__(self) -> Iterator[dict[str, Value]]:
        m = self.model
        for code in self.codes():
            idx = grid.decode(code, m.endo_sizes)
            yield {x: m.endogenous[x].value(k) for x, k in zip(m.endo, idx)}

    def __contains__(self, setting: Mapping[str, Value]) -> bool:
        m = self.model
        try:
            idx = [m.endogenous[x].index(setting[x]) for x in m.endo]
        except (KeyError, ValueError):
            return False
        return bool(self.mask[int(grid.encode(idx, m.endo_sizes))])

    def _compatible(self, other: "RestrictionSet") -> None:
        if self.model.endogenous != other.model.endogenous:
            raise ValueError("restriction sets belong to different endogenous spaces")

    def __eq__(self, other) -> bool:
        if not isinstance(other, RestrictionSet):
            return NotImplemented
        return self.model.endogenous == other.model.endogenous and np.array_equal(self.mask, other.mask)

    def __hash__(self):
        return hash((tuple(self.model.endogenous), self.mask.tobytes()))

    def issuperset(self, other: "RestrictionSet") -> bool:
        self._compatible(other)
        return not bool((other.mask & ~self.mask).any())

    def issubset(self, other: "RestrictionSet") -> bool:
        return other.issuperset(self)

    def __ge__(self, other):
        return self.issuperset(other)

    def __le__(self, other):
        return self.issubset(other)

    def __repr__(self) -> str:
        return f"RestrictionSet({self.model.name}, {self.label}, {len(self)} of {self.mask.size})"


def soft_restriction(m: Scm, i: Intervention) -> RestrictionSet:
    """Rst_soft(M_i): settings whose projection on the targets lies in img(f)."""
    validate_intervention(m, i)
    img = _image_mask(m, i)
    idx = grid.enumerate_indices(m.endo_sizes)
    pos = {x: n for n, x in enumerate(m.endo)}
    mask = img[tuple(idx[pos[t]] for t in i.targets)] if i.targets else np.ones(grid.total(m.endo_sizes), dtype=bool)
    return RestrictionSet(m, str(i), np.asarray(mask, dtype=bool))


def hard_restriction(m: Scm, i: Intervention) -> RestrictionSet:
    """Rst(M_i) for a hard intervention: settings agreeing with its constants."""
    if not i.is_hard:
        raise NotHardError(f"{i} is not a hard intervention")
    validate_intervention(m, i)
    idx = grid.enumerate_indices(m.endo_sizes)
    pos = {x: n for n, x in enumerate(m.endo)}
    mask = np.ones(grid.total(m.endo_sizes), dtype=bool)
    for t, v in i.constants().items():
        mask &= idx[pos[t]] == m.endogenous[t].index(v)
    return RestrictionSet(m, str(i), mask)


def precedes_hard(m: Scm, i1: Intervention, i2: Intervention) -> bool:
    """i1 ⊑ i2: targets nest and the constants agree on the smaller target set."""
    for i in (i1, i2):
        if not i.is_hard:
            raise NotHardError(f"{i} is not a hard intervention")
        validate_intervention(m, i)
    c1, c2 = i1.constants(), i2.constants()
    if not set(c1) <= set(c2):
        return False
    return all(m.endogenous[t].index(v) == m.endogenous[t].index(c2[t]) for t, v in c1.items())


def precedes_soft(m: Scm, i1: Intervention, i2: Intervention) -> bool:
    """i1 ⪯ i2: Rst_soft(M_i1) contains Rst_soft(M_i2)."""
    return soft_restriction(m, i1).issuperset(soft_restriction(m, i2))


def intervention_key(m: Scm, i: Intervention) -> tuple:
    """Semantic identity of ``i`` on ``m``: the equations it changes and its soft restriction set.

    Every abstraction relation sees an intervention only through these
    two, so interventions with equal keys are interchangeable.
    """
    return effective_tables(m, i), soft_restriction(m, i).mask.tobytes()
