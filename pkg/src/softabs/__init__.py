"""Soft abstraction checking for finite structural causal models."""

from .abstraction import (
    AbstractionVerdict,
    AmbiguityWitness,
    Counterexample,
    InterventionSets,
    OmegaTable,
    TauMap,
    check_low_soft_abstraction,
    check_soft_abstraction,
    check_tau_abstraction,
    detect_ambiguity,
    search_omega,
)
from .constructive import Alignment, crosscheck_explicit, explicit_omega, preimage, validate_alignment
from .errors import SoftAbsError
from .interventions import (
    RestrictionSet,
    hard_restriction,
    image,
    intervention_key,
    precedes_hard,
    precedes_soft,
    soft_restriction,
)
from .model_io import Workspace, load_fixture, load_workspace, parse_intervention, parse_workspace, serialize_workspace
from .scm import EPS, Domain, Intervention, Scm, apply_intervention, eval_equations, project, same_equations, solve

__all__ = [
    "AbstractionVerdict",
    "Alignment",
    "AmbiguityWitness",
    "Counterexample",
    "Domain",
    "EPS",
    "Intervention",
    "InterventionSets",
    "OmegaTable",
    "RestrictionSet",
    "Scm",
    "SoftAbsError",
    "TauMap",
    "Workspace",
    "apply_intervention",
    "check_low_soft_abstraction",
    "check_soft_abstraction",
    "check_tau_abstraction",
    "crosscheck_explicit",
    "detect_ambiguity",
    "eval_equations",
    "explicit_omega",
    "hard_restriction",
    "image",
    "intervention_key",
    "load_fixture",
    "load_workspace",
    "parse_intervention",
    "parse_workspace",
    "precedes_hard",
    "precedes_soft",
    "preimage",
    "project",
    "same_equations",
    "search_omega",
    "serialize_workspace",
    "soft_restriction",
    "solve",
    "validate_alignment",
]
