"""Finite-size accounting: GEAT second-order terms, acceptance sets, and the leftover-hash key length."""
import logging
import math
from dataclasses import dataclass
from typing import Mapping, Optional, Tuple

import numpy as np
from scipy import optimize

from src.core.error_handlers import DomainError, EmptyAcceptanceSetError, SolverError
from src.domain.entities.certificate import AffineScoreFunction
from src.domain.entities.protocol import ALL_SCORES, EpsilonBudget, Score
from src.domain.entities.report import AcceptanceSet
from src.domain.entities.statistics import ScoreDistribution
from src.infrastructure.numerics.special_math import binomial_bound_F

logger = logging.getLogger(__name__)

LN2 = math.log(2.0)
BETA_RANGE = (1e-12, 0.5 - 1e-9)
BISECTION_STEPS = 200


@dataclass(frozen=True)
class GeatTerms:
    bound: float
    v: float
    k_beta: float
    smoothing_term: float


def _check_open_unit(name: str, value: float) -> None:
    if not 0.0 < value < 1.0:
        raise DomainError(f"{name} must lie in (0, 1), got {value}")


def _check_min_tradeoff(f: AffineScoreFunction) -> None:
    if not f.is_min_tradeoff or None in (f.max_value, f.min_sigma, f.variance):
        raise DomainError("a min-tradeoff function with Max, Min_Sigma and Var metadata is required")


def smoothing_term(beta: float, eps_s: float, eps_ea: float) -> float:
    """[-log2(1 - sqrt(1 - ε_s²)) - (1 + β) log2 ε_EA] / β."""
    one_minus_root = eps_s * eps_s / (1.0 + math.sqrt(1.0 - eps_s * eps_s))
    return (-math.log2(one_minus_root) - (1.0 + beta) * math.log2(eps_ea)) / beta


def second_order_terms(f: AffineScoreFunction, d_z: int, beta: float) -> Tuple[float, float]:
    """(V, K_β) of the GEAT bound."""
    v = math.log2(2 * d_z * d_z + 1) + math.sqrt(2.0 + f.variance)
    spread = 2.0 * math.log2(d_z) + f.max_value - f.min_sigma
    ratio = beta / (1.0 - beta)
    # ln(2^spread + e^2) without forming 2^spread
    log_term = float(np.logaddexp(spread * LN2, 2.0))
    with np.errstate(over="ignore"):
        growth = float(np.exp2(ratio * spread))
    k_beta = (1.0 - beta) ** 3 / (6.0 * (1.0 - 2.0 * beta) ** 3 * LN2) * growth * log_term ** 3
    return v, k_beta


def geat_terms(f: AffineScoreFunction, h: float, rounds: float, beta: float, d_z: int,
               eps_s: float, eps_ea: float) -> GeatTerms:
    """
    Smooth min-entropy lower bound after N rounds, with every term kept.

    Args:
        f: Min-tradeoff function over every score
        h: Floor of f over the acceptance set
        rounds: N
        beta: β in (0, 1/2)
        d_z: Raw-key register dimension
        eps_s: Smoothing parameter
        eps_ea: Accumulation failure parameter (replaces Pr[Ω])

    Returns:
        GeatTerms with the bound in bits
    """
    if not 0.0 < beta < 0.5:
        raise DomainError(f"beta must lie in (0, 1/2), got {beta}")
    _check_open_unit("eps_s", eps_s)
    _check_open_unit("eps_ea", eps_ea)
    if rounds < 1:
        raise DomainError(f"rounds must be >= 1, got {rounds}")
    _check_min_tradeoff(f)

    v, k_beta = second_order_terms(f, d_z, beta)
    ratio = beta / (1.0 - beta)
    penalty = smoothing_term(beta, eps_s, eps_ea)
    bound = rounds * h - ratio * (LN2 / 2.0) * v * v - rounds * ratio * ratio * k_beta - penalty
    return GeatTerms(bound=bound, v=v, k_beta=k_beta, smoothing_term=penalty)


def geat_bound(f: AffineScoreFunction, h: float, rounds: float, beta: float, d_z: int,
               eps_s: float, eps_ea: float) -> float:
    return geat_terms(f, h, rounds, beta, d_z, eps_s, eps_ea).bound


def optimise_beta(f: AffineScoreFunction, h: float, rounds: float, d_z: int,
                  eps_s: float, eps_ea: float) -> Tuple[float, float]:
    """Bounded scalar search for the β maximising the GEAT bound, on log β."""
    def objective(log_beta: float) -> float:
        bound = geat_bound(f, h, rounds, math.exp(log_beta), d_z, eps_s, eps_ea)
        return -bound if math.isfinite(bound) else 1e300

    result = optimize.minimize_scalar(
        objective, bounds=(math.log(BETA_RANGE[0]), math.log(BETA_RANGE[1])),
        method="bounded", options={"xatol": 1e-6},
    )
    beta = math.exp(result.x)
    bound = geat_bound(f, h, rounds, beta, d_z, eps_s, eps_ea)
    logger.debug(f"Optimised beta={beta:.4e} -> bound={bound:.6e} ({result.nfev} evaluations)")
    return beta, bound


def ev_hash_length(eps_cor: float) -> int:
    """Error-verification hash length ⌈log2(1/ε_cor)⌉."""
    _check_open_unit("eps_cor", eps_cor)
    return int(math.ceil(-math.log2(eps_cor)))


def key_length(hmin_bound: float, leak_ec: float, l_ev: int, eps_s: float, eps_ea: float,
               eps_sec: float) -> int:
    """Largest ℓ >= 0 with 2^{-(H - leak - ℓ_EV - ℓ + 2)/2} + 2ε_s <= ε_sec; 0 when none exists."""
    slack = eps_sec - 2.0 * eps_s
    if eps_ea > eps_sec or slack <= 0.0 or not math.isfinite(hmin_bound):
        return 0
    length = math.floor(hmin_bound - leak_ec - l_ev + 2.0 + 2.0 * math.log2(slack))
    return max(int(length), 0)


def _lower_tail(rounds: int, p: float, zeta: float) -> float:
    index = math.ceil(rounds * (p - zeta))
    if index <= 0:
        return 0.0
    return binomial_bound_F(rounds, p, min(index, rounds))


def _upper_tail(rounds: int, p: float, zeta: float) -> float:
    index = math.floor(rounds * (p + zeta))
    if index >= rounds:
        return 0.0
    return 1.0 - binomial_bound_F(rounds, p, max(index, 0))


def _smallest_tolerance(tail, width: float, target: float) -> float:
    if tail(0.0) <= target:
        return 0.0
    low, high = 0.0, width
    for _ in range(BISECTION_STEPS):
        middle = 0.5 * (low + high)
        if tail(middle) <= target:
            high = middle
        else:
            low = middle
        if high - low <= 1e-15 * max(width, 1e-300):
            break
    return high


def completeness_tolerances(p: float, rounds: float, budget: float) -> Tuple[float, float, bool]:
    """
    Tolerances (ζ, ζ') for one score so that an honest run leaves [p - ζ', p + ζ] with probability <= budget.

    Each tail gets half of the budget and is bounded with the binomial F.

    Args:
        p: Honest probability of the score
        rounds: N
        budget: ε_com^{PE,c}

    Returns:
        (ζ, ζ', within_budget); within_budget is False when only the widest interval fits
    """
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"probability must lie in [0, 1], got {p}")
    if rounds < 1:
        raise DomainError(f"rounds must be >= 1, got {rounds}")
    if p in (0.0, 1.0):
        return 0.0, 0.0, True
    if budget <= 0.0:
        return 1.0 - p, p, False

    n = int(rounds)
    target = budget / 2.0
    zeta_upper = _smallest_tolerance(lambda z: _upper_tail(n, p, z), 1.0 - p, target)
    zeta_lower = _smallest_tolerance(lambda z: _lower_tail(n, p, z), p, target)
    return zeta_upper, zeta_lower, True


def split_completeness_budget(total: float, top_share: Optional[float] = None) -> dict:
    """ε_com^PE per score: ⊤ receives ``top_share`` of the total, the rest is shared evenly."""
    share = 1.0 / len(ALL_SCORES) if top_share is None else top_share
    if not 0.0 < share < 1.0:
        raise DomainError(f"top_share must lie in (0, 1), got {share}")
    others = [c for c in ALL_SCORES if c != Score.TOP]
    budgets = {c: (1.0 - share) * total / len(others) for c in others}
    budgets[Score.TOP] = share * total
    return budgets


def build_acceptance_set(p: ScoreDistribution, rounds: float, epsilons: EpsilonBudget,
                         top_share: Optional[float] = None) -> AcceptanceSet:
    """Acceptance boxes over every score (⊥ included) from the completeness budget."""
    if p.is_test_conditional:
        raise DomainError("acceptance sets are built from the full score distribution")
    budgets = split_completeness_budget(epsilons.completeness_pe, top_share)
    honest = p.as_vector(ALL_SCORES)
    lower, upper = np.empty_like(honest), np.empty_like(honest)
    within = True
    for i, c in enumerate(ALL_SCORES):
        zeta, zeta_prime, ok = completeness_tolerances(honest[i], rounds, budgets[c])
        lower[i] = max(honest[i] - zeta_prime, 0.0)
        upper[i] = min(honest[i] + zeta, 1.0)
        within = within and ok
    if not within:
        logger.warning("Completeness budget could not be met; using the widest intervals")
    return AcceptanceSet(lower=lower, upper=upper, honest=honest, within_budget=within)


def floor_over_acceptance(f: AffineScoreFunction, acceptance: AcceptanceSet) -> float:
    """
    h = min f(p) over the simplex intersected with the acceptance boxes.

    Raises:
        EmptyAcceptanceSetError: If the boxes miss the simplex
    """
    _check_min_tradeoff(f)
    if acceptance.lower.sum() > 1.0 + 1e-12 or acceptance.upper.sum() < 1.0 - 1e-12:
        raise EmptyAcceptanceSetError("acceptance boxes do not intersect the probability simplex")
    result = optimize.linprog(
        c=f.coefficients,
        A_eq=np.ones((1, len(ALL_SCORES))),
        b_eq=np.array([1.0]),
        bounds=list(zip(acceptance.lower, acceptance.upper)),
        method="highs",
    )
    if result.status == 2:
        raise EmptyAcceptanceSetError(f"acceptance polytope is empty: {result.message}")
    if result.status != 0:
        raise SolverError("highs", str(result.status), result.message)
    return float(f.constant + result.fun)


@dataclass(frozen=True)
class SecrecyPlan:
    beta: float
    eps_s: float
    eps_ea: float
    terms: GeatTerms
    key_length: int


def optimise_secrecy(f: AffineScoreFunction, h: float, rounds: float, d_z: int, leak_ec: float,
                     l_ev: int, epsilons: EpsilonBudget, search_eps: bool = True,
                     search_beta: bool = True, beta: float = 1e-4) -> SecrecyPlan:
    """
    Choose β and ε_s (ε_EA = ε_sec) to maximise the key length.

    With ``search_eps`` off the budget's own ε_s and ε_EA are used; with
    ``search_beta`` off ``beta`` is used as given.
    """
    eps_sec = epsilons.secrecy

    def plan_for(eps_s: float, eps_ea: float) -> SecrecyPlan:
        if search_beta:
            chosen, _ = optimise_beta(f, h, rounds, d_z, eps_s, eps_ea)
        else:
            chosen = beta
        terms = geat_terms(f, h, rounds, chosen, d_z, eps_s, eps_ea)
        length = key_length(terms.bound, leak_ec, l_ev, eps_s, eps_ea, eps_sec)
        return SecrecyPlan(beta=chosen, eps_s=eps_s, eps_ea=eps_ea, terms=terms, key_length=length)

    if not search_eps:
        return plan_for(epsilons.smoothing, epsilons.accumulation)

    def objective(log_eps: float) -> float:
        plan = plan_for(math.exp(log_eps), eps_sec)
        value = plan.terms.bound + 2.0 * math.log2(eps_sec - 2.0 * plan.eps_s)
        return -value if math.isfinite(value) else 1e300

    upper = math.log(eps_sec / 2.0 * (1.0 - 1e-6))
    result = optimize.minimize_scalar(
        objective, bounds=(math.log(eps_sec * 1e-12), upper), method="bounded", options={"xatol": 1e-4},
    )
    best = plan_for(math.exp(result.x), eps_sec)
    default = plan_for(epsilons.smoothing, eps_sec)
    return best if best.key_length >= default.key_length else default


def audit_report_row(row: Mapping) -> bool:
    """Re-derive ℓ of a finite-mode CSV row from its own logged terms."""
    required = ("N", "h", "V", "Kbeta", "beta", "leak_ec", "l_ev", "eps_s", "eps_ea", "eps_sec", "key_len")
    missing = [name for name in required if row.get(name) is None or
               (isinstance(row.get(name), float) and math.isnan(row[name]))]
    if missing:
        raise DomainError(f"row lacks finite-mode fields {missing}")
    rounds, beta = float(row["N"]), float(row["beta"])
    ratio = beta / (1.0 - beta)
    v, k_beta = float(row["V"]), float(row["Kbeta"])
    bound = (rounds * float(row["h"]) - ratio * (LN2 / 2.0) * v * v - rounds * ratio * ratio * k_beta
             - smoothing_term(beta, float(row["eps_s"]), float(row["eps_ea"])))
    expected = key_length(bound, float(row["leak_ec"]), int(row["l_ev"]), float(row["eps_s"]),
                          float(row["eps_ea"]), float(row["eps_sec"]))
    if expected != int(row["key_len"]):
        logger.warning(f"Audit mismatch: row key_len={row['key_len']}, re-derived {expected}")
        return False
    return True
