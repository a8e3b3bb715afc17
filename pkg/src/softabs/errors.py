"""Exception hierarchy shared by every module."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Problem:
    """One validation finding.

    ``entity`` is a ``(kind, name)`` pair such as ``("eq", "X3")`` that the
    file loader uses to attach a source position.
    """

    code: str
    message: str
    entity: tuple[str, str] | None = None


class SoftAbsError(Exception):
    """Base class for all library errors."""


class ModelError(SoftAbsError, ValueError):
    """A model, map or intervention failed validation."""

    code = "model-error"

    def __init__(self, problems: list[Problem] | str, entity: tuple[str, str] | None = None):
        if isinstance(problems, str):
            problems = [Problem(self.code, problems, entity)]
        self.problems = list(problems)
        super().__init__("; ".join(p.message for p in self.problems))


class UnknownVariableError(ModelError):
    code = "unknown-variable"


class DomainClosureError(ModelError):
    code = "domain-closure-violation"


class CyclicModelError(ModelError):
    code = "cyclic-model"


class InterventionError(ModelError):
    code = "intervention-violation"


class UnknownTargetError(InterventionError):
    code = "unknown-target"


class TypeViolationError(InterventionError):
    code = "type-violation"


class NewParentError(InterventionError):
    code = "new-parent-violation"


class NotHardError(InterventionError):
    code = "not-hard"


class NonSurjectiveTauError(ModelError):
    code = "non-surjective-tau"


class AlignmentError(ModelError):
    code = "alignment-invalid"


class NoPreimageError(SoftAbsError, LookupError):
    """A value has no preimage under a cluster map."""


class IllDefinedOmegaError(SoftAbsError):
    """The explicit intervention map depends on the choice of partial inverse."""


class PreconditionError(SoftAbsError):
    """An operation was called outside its precondition (e.g. abstraction does not hold)."""
