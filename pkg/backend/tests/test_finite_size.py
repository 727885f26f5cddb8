import math

import numpy as np
import pytest
from scipy import stats

from src.application.services.finite_size import (
    audit_report_row,
    build_acceptance_set,
    completeness_tolerances,
    ev_hash_length,
    floor_over_acceptance,
    geat_terms,
    key_length,
    optimise_beta,
    optimise_secrecy,
    second_order_terms,
    smoothing_term,
    split_completeness_budget,
)
from src.core.error_handlers import DomainError, EmptyAcceptanceSetError
from src.domain.entities.certificate import AffineScoreFunction
from src.domain.entities.protocol import ALL_SCORES, TEST_SCORES, EpsilonBudget, Score
from src.domain.entities.report import AcceptanceSet
from src.domain.entities.statistics import ScoreDistribution
from src.infrastructure.sdp.tradeoff import min_tradeoff

GAMMA = 0.01
LN2 = math.log(2.0)


@pytest.fixture
def f():
    g = AffineScoreFunction(0.9, np.linspace(-0.05, 0.05, len(TEST_SCORES)))
    return min_tradeoff(g, GAMMA)


@pytest.fixture
def honest():
    q = ScoreDistribution.from_vector(np.full(len(TEST_SCORES), 1.0 / len(TEST_SCORES)))
    return q.with_bottom(GAMMA)


def test_ev_hash_length():
    assert ev_hash_length(1e-15) == 50
    assert ev_hash_length(0.5) == 1
    assert ev_hash_length(2.0 ** -128) == 128
    with pytest.raises(DomainError):
        ev_hash_length(0.0)


def test_smoothing_term():
    beta, eps_s, eps_ea = 0.01, 1e-7, 5e-7
    # 1 - sqrt(1 - x²) is x²/2 to leading order
    assert smoothing_term(beta, eps_s, eps_ea) == pytest.approx(
        (-math.log2(eps_s ** 2 / 2.0) - (1 + beta) * math.log2(eps_ea)) / beta, rel=1e-12)
    assert math.isfinite(smoothing_term(beta, eps_s, eps_ea))
    assert smoothing_term(0.1, 0.5, 0.5) == pytest.approx(
        (-math.log2(1.0 - math.sqrt(0.75)) - 1.1 * math.log2(0.5)) / 0.1, rel=1e-12)


def test_key_length_formula_and_clamps():
    eps_sec, eps_s = 1e-6, 1e-7
    h = 1e6
    expected = math.floor(h - 2e5 - 50 + 2.0 + 2.0 * math.log2(eps_sec - 2 * eps_s))
    assert key_length(h, 2e5, 50, eps_s, 5e-7, eps_sec) == expected
    assert key_length(10.0, 2e5, 50, eps_s, 5e-7, eps_sec) == 0
    assert key_length(h, 2e5, 50, eps_s, 2e-6, eps_sec) == 0
    assert key_length(h, 2e5, 50, 5e-7, 5e-7, eps_sec) == 0
    assert key_length(-math.inf, 0.0, 50, eps_s, 5e-7, eps_sec) == 0


def test_geat_terms_match_direct_formula(f):
    rounds, beta, d_z, eps_s, eps_ea, h = 1e10, 1e-3, 5, 1e-7, 1e-6, 0.8
    terms = geat_terms(f, h, rounds, beta, d_z, eps_s, eps_ea)
    v = math.log2(2 * d_z ** 2 + 1) + math.sqrt(2.0 + f.variance)
    spread = 2 * math.log2(d_z) + f.max_value - f.min_sigma
    k_beta = ((1 - beta) ** 3 / (6 * (1 - 2 * beta) ** 3 * LN2)
              * 2.0 ** (beta / (1 - beta) * spread) * math.log(2.0 ** spread + math.e ** 2) ** 3)
    ratio = beta / (1 - beta)
    bound = rounds * h - ratio * LN2 / 2 * v ** 2 - rounds * ratio ** 2 * k_beta - smoothing_term(beta, eps_s, eps_ea)
    assert terms.v == pytest.approx(v, rel=1e-12)
    assert terms.k_beta == pytest.approx(k_beta, rel=1e-10)
    assert terms.bound == pytest.approx(bound, rel=1e-10)


def test_geat_terms_reject_bad_inputs(f, sample_g):
    with pytest.raises(DomainError):
        geat_terms(f, 0.5, 1e10, 0.5, 5, 1e-7, 1e-6)
    with pytest.raises(DomainError):
        geat_terms(f, 0.5, 1e10, 0.1, 5, 0.0, 1e-6)
    with pytest.raises(DomainError):
        geat_terms(sample_g, 0.5, 1e10, 0.1, 5, 1e-7, 1e-6)


def test_second_order_terms_overflow_to_infinity():
    wide = AffineScoreFunction(0.0, np.zeros(len(ALL_SCORES)), scores=ALL_SCORES,
                               max_value=5000.0, min_value=0.0, min_sigma=0.0, variance=1.0)
    _, k_beta = second_order_terms(wide, 5, 0.4)
    assert math.isinf(k_beta)
    beta, bound = optimise_beta(wide, 1.0, 1e10, 5, 1e-7, 1e-6)
    assert 0.0 < beta < 0.5
    assert math.isfinite(bound)


def test_optimise_beta_beats_fixed_choices(f):
    args = dict(h=0.8, rounds=1e10, d_z=5, eps_s=1e-7, eps_ea=1e-6)
    beta, bound = optimise_beta(f, **args)
    for fixed in (1e-6, 1e-4, 1e-3, 1e-2, 0.1, 0.4):
        assert bound >= geat_terms(f, beta=fixed, **args).bound - 1e-6 * abs(bound)


def test_completeness_tolerances_meet_budget():
    rounds, p, budget = 10 ** 6, 0.5, 0.1
    zeta, zeta_prime, ok = completeness_tolerances(p, rounds, budget)
    assert ok
    assert 1e-4 < zeta < 1e-2 and 1e-4 < zeta_prime < 1e-2
    assert stats.binom.sf(math.floor(rounds * (p + zeta)), rounds, p) <= budget / 2
    assert stats.binom.cdf(math.ceil(rounds * (p - zeta_prime)) - 1, rounds, p) <= budget / 2


def test_completeness_tolerances_edges():
    assert completeness_tolerances(0.0, 1e6, 0.1) == (0.0, 0.0, True)
    assert completeness_tolerances(1.0, 1e6, 0.1) == (0.0, 0.0, True)
    assert completeness_tolerances(0.3, 1e6, 0.0) == (pytest.approx(0.7), 0.3, False)
    with pytest.raises(DomainError):
        completeness_tolerances(1.5, 1e6, 0.1)


def test_tolerances_shrink_with_rounds():
    widths = [sum(completeness_tolerances(0.2, n, 1e-3)[:2]) for n in (1e4, 1e6, 1e8)]
    assert widths[0] > widths[1] > widths[2]


def test_split_completeness_budget():
    budgets = split_completeness_budget(1e-10, 0.1)
    assert sum(budgets.values()) == pytest.approx(1e-10)
    assert budgets[Score.TOP] == pytest.approx(1e-11)
    assert budgets[Score.BOTTOM] == pytest.approx(0.9e-10 / (len(ALL_SCORES) - 1))
    even = split_completeness_budget(1e-10)
    assert even[Score.TOP] == pytest.approx(even[Score.ROT_0])
    with pytest.raises(DomainError):
        split_completeness_budget(1e-10, 1.0)


def test_build_acceptance_set(honest):
    acceptance = build_acceptance_set(honest, 1e10, EpsilonBudget())
    assert acceptance.within_budget
    assert acceptance.contains(honest.as_vector(ALL_SCORES))
    assert np.all(acceptance.lower <= acceptance.honest) and np.all(acceptance.honest <= acceptance.upper)
    lower, upper = acceptance.interval(Score.BOTTOM)
    assert upper - lower < 1e-3
    with pytest.raises(DomainError):
        build_acceptance_set(honest.test_conditional(), 1e10, EpsilonBudget())


def test_floor_over_acceptance(f, honest):
    p = honest.as_vector(ALL_SCORES)
    assert floor_over_acceptance(f, AcceptanceSet.point(p)) == pytest.approx(f(p), abs=1e-9)
    assert floor_over_acceptance(f, AcceptanceSet.whole_simplex(p)) == pytest.approx(f.min_value, abs=1e-9)
    boxed = floor_over_acceptance(f, build_acceptance_set(honest, 1e10, EpsilonBudget()))
    assert f.min_value - 1e-9 <= boxed <= f(p) + 1e-9
    with pytest.raises(EmptyAcceptanceSetError):
        floor_over_acceptance(f, AcceptanceSet.point(np.full(len(ALL_SCORES), 0.2)))


def test_optimise_secrecy_search_is_no_worse(f, honest):
    rounds = 1e12
    h = f(honest.as_vector(ALL_SCORES))
    leak = 0.3 * rounds
    epsilons = EpsilonBudget()
    fixed = optimise_secrecy(f, h, rounds, 5, leak, 50, epsilons, search_eps=False)
    searched = optimise_secrecy(f, h, rounds, 5, leak, 50, epsilons)
    assert fixed.key_length > 0
    assert searched.key_length >= fixed.key_length
    assert searched.eps_ea == epsilons.secrecy
    assert searched.key_length / rounds < h


def test_audit_report_row(f, honest):
    rounds = 1e12
    h = f(honest.as_vector(ALL_SCORES))
    epsilons = EpsilonBudget()
    plan = optimise_secrecy(f, h, rounds, 5, 0.3 * rounds, 50, epsilons)
    row = {
        "N": rounds, "h": h, "V": plan.terms.v, "Kbeta": plan.terms.k_beta, "beta": plan.beta,
        "leak_ec": 0.3 * rounds, "l_ev": 50, "eps_s": plan.eps_s, "eps_ea": plan.eps_ea,
        "eps_sec": epsilons.secrecy, "key_len": plan.key_length,
    }
    assert audit_report_row(row)
    assert not audit_report_row({**row, "key_len": plan.key_length + 1})
    with pytest.raises(DomainError):
        audit_report_row({**row, "V": math.nan})
    with pytest.raises(DomainError):
        audit_report_row({k: v for k, v in row.items() if k != "Kbeta"})
