import random

import pytest

import generators as G
import oracle
from softabs import EPS, Domain, Intervention, Scm, hard_restriction, image, precedes_hard, precedes_soft, soft_restriction
from softabs.errors import NotHardError
from softabs.model_io import parse_expr, parse_intervention

I2 = parse_intervention("X2 <- (2 * E2) mod 16")


def test_image_of_doubling_is_even_residues(fig2):
    L = fig2.models["L"]
    assert image(L, I2) == {(v,) for v in range(0, 16, 2)}
    assert image(L, I2, full=True) == image(L, I2)


def test_image_of_constant(fig2):
    assert image(fig2.models["L"], parse_intervention("X1 <- 7")) == {(7,)}


def test_image_of_indicator_on_fig3(fig3):
    assert image(fig3.models["H"], parse_intervention("Y3 <- [Y1 = Y2]")) == {(True,), (False,)}


def test_image_is_joint_not_per_variable():
    b = Domain((False, True))
    m = Scm({"A": b, "C": b}, {"U": b}, {"A": parse_expr("U"), "C": parse_expr("U")})
    i = parse_intervention("A <- U, C <- not U")
    assert image(m, i) == {(False, True), (True, False)}
    assert len(soft_restriction(m, i)) == 2


def test_soft_restriction_of_doubling(fig2):
    L = fig2.models["L"]
    r = soft_restriction(L, I2)
    assert len(r) == 16 * 8 * 16
    assert all(s["X2"] % 2 == 0 for s in r)
    assert {"X1": 3, "X2": 4, "X3": 5} in r and {"X1": 3, "X2": 5, "X3": 5} not in r


def test_soft_restriction_of_eps_is_everything(fig2):
    L = fig2.models["L"]
    assert len(soft_restriction(L, EPS)) == 16 ** 3
    assert len(hard_restriction(L, EPS)) == 16 ** 3


def test_restriction_of_hard_high_intervention(fig2):
    H = fig2.models["H"]
    j = parse_intervention("Y2 <- T")
    want = [s for s in oracle.settings(H, H.endo) if s[1] is True]
    got = [tuple(s.values()) for s in soft_restriction(H, j)]
    assert got == want
    assert soft_restriction(H, j) == hard_restriction(H, j)


def test_hard_restriction_rejects_soft(fig2):
    with pytest.raises(NotHardError):
        hard_restriction(fig2.models["L"], I2)


def test_precedes_hard_examples(fig2):
    H = fig2.models["H"]
    a = parse_intervention("Y2 <- T")
    assert precedes_hard(H, EPS, a)
    assert precedes_hard(H, a, parse_intervention("Y2 <- T, Y1 <- F"))
    assert not precedes_hard(H, a, parse_intervention("Y2 <- F"))
    assert not precedes_hard(H, parse_intervention("Y2 <- T, Y1 <- F"), a)
    with pytest.raises(NotHardError):
        precedes_hard(H, EPS, parse_intervention("Y3 <- Y1"))


def test_precedes_soft_examples(fig2):
    L = fig2.models["L"]
    assert precedes_soft(L, EPS, I2)
    assert precedes_soft(L, I2, parse_intervention("X2 <- 0"))
    assert not precedes_soft(L, parse_intervention("X2 <- 0"), I2)
    assert not precedes_soft(L, I2, EPS)


def test_singleton_domain_breaks_order_equivalence():
    # A <- c on a one-value domain restricts nothing, so eps and A <- c
    # have equal restriction sets while their target sets do not nest.
    one = Domain((0,))
    b = Domain((False, True))
    m = Scm({"A": one, "C": b}, {"U": b}, {"A": parse_expr("0"), "C": parse_expr("U")})
    i = Intervention.hard({"A": 0})
    assert precedes_soft(m, i, EPS) and not precedes_hard(m, i, EPS)
    assert soft_restriction(m, i) == hard_restriction(m, i)


@pytest.mark.parametrize("seed", range(60))
def test_restrictions_match_reference(seed):
    rng = random.Random(seed)
    m = G.random_scm(rng)
    i = G.random_soft(rng, m)
    assert {tuple(s.values()) for s in soft_restriction(m, i)} == set(oracle.soft_rst(m, i))
    assert image(m, i) == oracle.image(m, i)
    h = G.random_hard(rng, m)
    assert [tuple(s.values()) for s in hard_restriction(m, h)] == oracle.hard_rst(m, h)


@pytest.mark.parametrize("seed", range(60))
def test_precedes_soft_is_a_preorder(seed):
    rng = random.Random(seed)
    m = G.random_scm(rng)
    pool = [EPS] + [G.random_soft(rng, m) for _ in range(3)] + [G.random_hard(rng, m) for _ in range(3)]
    le = [[precedes_soft(m, a, b) for b in pool] for a in pool]
    n = range(len(pool))
    assert all(le[a][a] for a in n)
    assert all(le[a][c] for a in n for b in n for c in n if le[a][b] and le[b][c])


@pytest.mark.parametrize("seed", range(60))
def test_adding_a_fixed_variable_never_grows_the_restriction(seed):
    rng = random.Random(seed)
    m = G.random_scm(rng)
    h = G.random_hard(rng, m, max_targets=len(m.endo) - 1)
    free = [x for x in m.endo if x not in h.targets]
    x = rng.choice(free)
    bigger = Intervention.hard({**h.constants(), x: rng.choice(m.endogenous[x].values)})
    assert hard_restriction(m, bigger) <= hard_restriction(m, h)
    assert precedes_hard(m, h, bigger)
