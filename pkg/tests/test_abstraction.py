import random

import pytest

import generators as G
import oracle
from softabs import (
    EPS,
    Intervention,
    check_low_soft_abstraction,
    check_soft_abstraction,
    check_tau_abstraction,
    detect_ambiguity,
    parse_workspace,
    precedes_soft,
    search_omega,
)
from softabs.abstraction import TauMap, check
from softabs.errors import NonSurjectiveTauError, NotHardError
from softabs.model_io import parse_expr, parse_intervention

RELATIONS = ("tau", "low-soft", "soft")


def sets(ws, name="default"):
    s = ws.intervention_sets[name]
    return list(s.low), list(s.high)


# ---- worked examples ---------------------------------------------------------


def test_parity_low_soft_on_fig2(fig2):
    tau = fig2.taus["parity"]
    I, J = sets(fig2)
    v = check_low_soft_abstraction(tau, I, J)
    assert v.holds and len(v.tables) == 1
    assert v.omega[I[1]] == parse_intervention("Y2 <- T")
    assert v.omega[EPS] == EPS
    for i in I:
        assert oracle.pair_ok(tau, i, v.omega[i], "low-soft")


def test_parity_tau_on_fig2_hard(fig2):
    tau = fig2.taus["parity"]
    I, J = sets(fig2, "hard")
    assert len(I) == 49 and all(i.is_hard for i in I)
    v = check_tau_abstraction(tau, I, J)
    assert v.holds
    assert v.omega[parse_intervention("X2 <- 4")] == parse_intervention("Y2 <- T")
    assert v.omega[parse_intervention("X3 <- 7")] == parse_intervention("Y3 <- F")


def test_surjectivity_failure_on_fig2(fig2):
    tau = fig2.taus["parity"]
    v = check_tau_abstraction(tau, [EPS], [EPS, parse_intervention("Y2 <- F")])
    assert not v.holds
    assert any("Y2 <- F" in f for f in v.failures)
    assert search_omega(tau, [EPS], [EPS, parse_intervention("Y2 <- F")], "tau") == []


def test_identity_abstraction():
    ws = parse_workspace(IDENTITY)
    v = check_tau_abstraction(ws.taus["id"], [EPS], [EPS])
    assert v.holds and v.omega[EPS] == EPS


def test_two_tables_under_low_soft(fig3):
    tau = fig3.taus["parity"]
    I, J = sets(fig3)
    v = check_low_soft_abstraction(tau, I, J)
    assert v.holds and len(v.tables) == 2
    assert len(search_omega(tau, I, J, "low-soft")) == 2
    assert {v.tables[0][I[1]], v.tables[1][I[1]]} == {J[1], J[2]}


def test_one_table_under_soft(fig3):
    tau = fig3.taus["parity"]
    I, J = sets(fig3)
    v = check_soft_abstraction(tau, I, J)
    assert v.holds and len(v.tables) == 1
    assert v.omega[I[1]] == parse_intervention("Y3 <- [Y1 = Y2]")
    assert v.omega[I[2]] == parse_intervention("Y3 <- Y1 and Y2")
    rej = v.rejections[(I[1], J[2])]
    assert rej.reason == "inconsistent"
    c = rej.counterexample
    assert c.endogenous == {"X1": 1, "X2": 1, "X3": 1} and c.exogenous == {"U1": 1, "U2": 1}
    assert list(c.lhs.values()) == [False, True, True]
    assert list(c.rhs.values()) == [False, True, False]


def test_soft_counterexample_is_canonical_first(fig3):
    tau = fig3.taus["parity"]
    I, J = sets(fig3, "single")
    v = check_soft_abstraction(tau, I, J)
    assert not v.holds
    c = v.counterexample
    first = _first_one_step_failure(tau, I[0], J[0])
    assert (tuple(c.endogenous.values()), tuple(c.exogenous.values())) == first
    assert list(c.lhs.values()) == [False, True, True]
    assert list(c.rhs.values()) == [False, True, False]


def _first_one_step_failure(tau, i, j):
    L, H = tau.low, tau.high
    for x in oracle.settings(L, L.endo):
        for e in oracle.settings(L, L.exo):
            y = [oracle.canon(H, n, v) for n, v in zip(H.endo, oracle.tau_x(tau, x))]
            u = [oracle.canon(H, n, v) for n, v in zip(H.exo, oracle.tau_e(tau, e))]
            if oracle.tau_x(tau, oracle.step(L, x, e, i)) != oracle.ints(oracle.step(H, y, u, j)):
                return x, e
    return None


def test_fig4_soft(fig4):
    v = check_soft_abstraction(fig4.taus["phi"], *sets(fig4))
    assert v.holds and len(v.tables) == 1


def test_tau_rejects_soft_interventions(fig3):
    with pytest.raises(NotHardError):
        check_tau_abstraction(fig3.taus["parity"], *sets(fig3))


def test_empty_sets_have_one_empty_table(fig3):
    tau = fig3.taus["parity"]
    for rel in RELATIONS:
        tables = search_omega(tau, [], [], rel)
        assert len(tables) == 1 and len(tables[0]) == 0


def test_non_surjective_tau_rejected(fig4):
    L, H = fig4.models["L"], fig4.models["H"]
    endo = {"Y1": parse_expr("[X1]"), "Y2": parse_expr("[X2]"), "Y3": parse_expr("[X3]")}
    exo = {"V1": parse_expr("[U1]"), "V2": parse_expr("[U2]")}
    with pytest.raises(NonSurjectiveTauError):
        TauMap(L, H, endo, exo)


# ---- ambiguity ---------------------------------------------------------------


def test_ambiguity_on_fig3(fig3):
    H = fig3.models["H"]
    _, J = sets(fig3)
    pairs = detect_ambiguity(H, J)
    assert len(pairs) == 1
    w = pairs[0]
    assert w.variable == "Y3" and {w.first, w.second} == {J[1], J[2]}


def test_ambiguity_conditions_by_enumeration(fig3):
    H = fig3.models["H"]
    _, J = sets(fig3)
    a, b = J[1], J[2]
    pos = H.endo.index("Y3")
    for u in oracle.settings(H, H.exo):
        assert oracle.solve(H, u, a)[pos] == oracle.solve(H, u, b)[pos]
    assert oracle.image(H, a) == oracle.image(H, b)
    assert not oracle.same_function(H, "Y3", a.replacements[0][1], b.replacements[0][1])


def test_no_ambiguity_for_distinct_constants(fig3):
    H = fig3.models["H"]
    J = [parse_intervention("Y3 <- T"), parse_intervention("Y3 <- F"), parse_intervention("Y1 <- T")]
    assert detect_ambiguity(H, J) == []


def test_no_ambiguity_for_equal_tables(fig3):
    H = fig3.models["H"]
    J = [parse_intervention("Y3 <- Y1 or Y2"), parse_intervention("Y3 <- Y1 or Y2")]
    assert detect_ambiguity(H, J) == []
    J = [parse_intervention("Y3 <- Y1 or Y2"), parse_intervention("Y3 <- Y2 or Y1")]
    assert detect_ambiguity(H, J) == []


def test_ambiguity_yields_several_low_soft_maps():
    hits = 0
    for seed in range(400):
        rng = random.Random(seed)
        inst = G.quotient_instance(rng, n_endo=(3, 3), n_exo=(1, 1), n_interventions=4)
        v = check_soft_abstraction(inst.tau, inst.I, inst.J)
        for i in v.low:
            j = v.omega[i]
            if len(i.targets) != 1 or len(j.targets) != 1:
                continue
            i2, j2 = G.twin(rng, inst.L, i), G.twin(rng, inst.H, j)
            if i2 is None or j2 is None:
                continue
            I, J = [*v.low, i2], [*v.high, j2]
            assert detect_ambiguity(inst.H, J)
            low = check_low_soft_abstraction(inst.tau, I, J)
            assert low.holds and len(low.tables) >= 2
            hits += 1
            break
    assert hits >= 50


# ---- dual route against the reference implementation -------------------------


def _noisy_instance(seed):
    rng = random.Random(seed)
    inst = G.quotient_instance(rng, n_endo=(2, 2), n_exo=(1, 2))
    J = list(inst.J) + [G.random_soft(rng, inst.H), G.random_hard(rng, inst.H)]
    I = list(inst.I) + [G.random_soft(rng, inst.L)]
    return inst, I, J


@pytest.mark.parametrize("seed", range(25))
@pytest.mark.parametrize("relation", ("low-soft", "soft"))
def test_pair_conditions_match_reference(seed, relation):
    inst, I, J = _noisy_instance(seed)
    v = check(inst.tau, I, J, relation)
    assert len(v.low) == len(oracle.dedupe(inst.L, I))
    assert len(v.high) == len(oracle.dedupe(inst.H, J))
    for i in v.low:
        want = [j for j in v.high if oracle.pair_ok(inst.tau, i, j, relation)]
        assert list(v.candidates[i]) == want
    tables = oracle.omegas(inst.tau, list(v.low), list(v.high), relation)
    assert len(v.tables) == len(tables)
    assert v.holds == bool(tables)


@pytest.mark.parametrize("seed", range(25))
def test_tau_pair_conditions_match_reference(seed):
    rng = random.Random(seed)
    inst = G.quotient_instance(rng, n_endo=(2, 2), hard_only=True)
    J = list(inst.J) + [G.random_hard(rng, inst.H) for _ in range(2)]
    I = list(inst.I) + [G.random_hard(rng, inst.L) for _ in range(2)]
    v = check_tau_abstraction(inst.tau, I, J)
    for i in v.low:
        assert list(v.candidates[i]) == [j for j in v.high if oracle.pair_ok(inst.tau, i, j, "tau")]
    assert len(v.tables) == len(oracle.omegas(inst.tau, list(v.low), list(v.high), "tau"))


# ---- algebraic properties ----------------------------------------------------


@pytest.mark.parametrize("seed", range(60))
def test_soft_implies_low_soft(seed):
    inst, I, J = _noisy_instance(seed)
    soft = check_soft_abstraction(inst.tau, I, J)
    low = check_low_soft_abstraction(inst.tau, I, J)
    for i in soft.low:
        assert set(soft.candidates[i]) <= set(low.candidates[i])
    if soft.holds:
        assert low.holds


@pytest.mark.parametrize("seed", range(60))
def test_tau_and_low_soft_agree_on_hard_sets(seed):
    rng = random.Random(seed)
    inst = G.quotient_instance(rng, hard_only=True)
    I = list(inst.I) + [G.random_hard(rng, inst.L)]
    J = list(inst.J) + [G.random_hard(rng, inst.H)]
    tau = check_tau_abstraction(inst.tau, I, J)
    low = check_low_soft_abstraction(inst.tau, I, J)
    soft = check_soft_abstraction(inst.tau, I, J)
    assert tau.holds == low.holds
    assert [str(t) for t in tau.tables] == [str(t) for t in low.tables]
    if soft.holds:
        assert tau.holds


def test_soft_is_strictly_stronger_than_tau_on_hard_sets():
    # H agrees with L at every solution but not at the unreachable point
    # x1 != u, which only the one-step condition inspects.
    ws = parse_workspace(UNREACHABLE)
    tau = ws.taus["id"]
    I, J = [EPS, parse_intervention("X2 <- F")], [EPS, parse_intervention("Y2 <- F")]
    assert check_tau_abstraction(tau, I, J).holds
    assert check_low_soft_abstraction(tau, I, J).holds
    v = check_soft_abstraction(tau, I, J)
    assert not v.holds
    assert v.counterexample.endogenous == {"X1": False, "X2": False}
    assert v.counterexample.exogenous == {"U": True}


@pytest.mark.parametrize("seed", range(60))
def test_quotient_instances_have_unique_order_preserving_omega(seed):
    inst = G.quotient_instance(random.Random(seed))
    v = check_soft_abstraction(inst.tau, inst.I, inst.J)
    assert v.holds and len(v.tables) == 1
    assert v.omega[EPS] == EPS
    for a in v.low:
        for b in v.low:
            if precedes_soft(inst.L, a, b):
                assert precedes_soft(inst.H, v.omega[a], v.omega[b])


def test_duplicates_are_merged_with_a_warning(fig3):
    tau = fig3.taus["parity"]
    I, J = sets(fig3)
    same = parse_intervention("X3 <- (X2 + X1 + 16) mod 16")
    with pytest.warns(UserWarning, match="same equations"):
        v = check_soft_abstraction(tau, [*I, same], J)
    assert v.holds and len(v.low) == 3 and v.warnings


def test_constant_equal_to_original_is_not_eps():
    # Y <- c where G_Y is already c keeps the equations but restricts Y.
    ws = parse_workspace(CONSTANT)
    tau = ws.taus["id"]
    I = [EPS, Intervention.hard({"X": True})]
    J = [EPS, Intervention.hard({"Y": True})]
    v = check_soft_abstraction(tau, I, J)
    assert v.holds and len(v.high) == 2
    assert v.omega[I[1]] == J[1]


IDENTITY = """
model L
  exo U : {F, T}
  endo X : {F, T}
  eq X := not U
end
model H
  exo V : {F, T}
  endo Y : {F, T}
  eq Y := not V
end
tau id : L -> H
  Y := X
  V := U
end
"""

UNREACHABLE = """
model L
  exo U : {F, T}
  endo X1, X2 : {F, T}
  eq X1 := U
  eq X2 := X1
end
model H
  exo V : {F, T}
  endo Y1, Y2 : {F, T}
  eq Y1 := V
  eq Y2 := V
end
tau id : L -> H
  Y1 := X1
  Y2 := X2
  V := U
end
"""

CONSTANT = """
model L
  exo U : {F, T}
  endo X : {F, T}
  eq X := T
end
model H
  exo V : {F, T}
  endo Y : {F, T}
  eq Y := T
end
tau id : L -> H
  Y := X
  V := U
end
"""
