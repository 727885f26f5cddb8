"""Discretisation maps, the score function and the truncated Fock-space operators.

Phase-space regions are described by an intensity interval [u_lower, u_upper]
(W = |Y|^2) and an arc [theta_lower, theta_upper]. Projected onto the span of
|0>..|n_max>, the heterodyne POVM element of a region has entries

    <n|Π|n'> = (1/π) R_{n,n'} A_{n,n'} / sqrt(n! n'!)

with R the radial integral ½(Γ(s, u_lower) - Γ(s, u_upper)), s = (n+n')/2 + 1,
and A the arc integral of e^{i(n-n')θ}.
"""
import logging
import math
from typing import Optional, Union

import numpy as np
from scipy import special

from src.core.error_handlers import DegenerateRegionError, DomainError
from src.domain.entities.protocol import (
    TEST_SCORES,
    ProtocolParams,
    RegionOutcome,
    Score,
    TruncatedOperators,
)
from src.infrastructure.numerics.special_math import regularized_upper_gamma

logger = logging.getLogger(__name__)

QUARTER = math.pi / 2.0


def quadrant_of(y: complex) -> int:
    """Quadrant index of arg(y); intervals are closed below, open above."""
    theta = math.atan2(y.imag, y.real) % (2.0 * math.pi)
    return int(theta // QUARTER) % 4


def quadrants_of(y: np.ndarray) -> np.ndarray:
    theta = np.mod(np.angle(y), 2.0 * np.pi)
    return np.floor_divide(theta, QUARTER).astype(np.int64) % 4


def discretize_key(y: complex, params: ProtocolParams) -> Optional[int]:
    """Key-round map: None (∅) below τ_min_key, otherwise the quadrant of y."""
    if abs(y) ** 2 < params.tau_min_key:
        return None
    return quadrant_of(y)


def discretize_test(y: complex, params: ProtocolParams) -> RegionOutcome:
    """Test-round map onto the nine regions (∅, z), z and ⊤."""
    intensity = abs(y) ** 2
    if intensity > params.tau_max:
        return RegionOutcome("top")
    if intensity < params.tau_min:
        return RegionOutcome("inner", quadrant_of(y))
    return RegionOutcome("band", quadrant_of(y))


def score(t: int, x: Optional[int], z: Union[None, int, RegionOutcome]) -> Score:
    """Public score of a round from its test flag, Alice's symbol and Bob's outcome."""
    if t == 0:
        if x is not None:
            raise DomainError("Alice's symbol is only announced in test rounds")
        return Score.BOTTOM
    if t != 1:
        raise DomainError(f"test flag must be 0 or 1, got {t}")
    if x is None or not 0 <= x <= 3:
        raise DomainError(f"test rounds need Alice's symbol in 0..3, got {x}")
    if not isinstance(z, RegionOutcome):
        raise DomainError(f"test rounds need a test-region outcome, got {z!r}")
    if z.region == "top":
        return Score.TOP
    if z.region == "inner":
        return Score.inner(z.quadrant - x)
    return Score.rotation(z.quadrant - x)


def score_indices(t: np.ndarray, x: np.ndarray, y: np.ndarray, params: ProtocolParams) -> np.ndarray:
    """Vectorised score(); returns indices into ALL_SCORES (⊥ is the last index)."""
    intensity = np.abs(y) ** 2
    offset = np.mod(quadrants_of(y) - x, 4)
    codes = np.where(intensity < params.tau_min, 4 + offset, offset)
    codes = np.where(intensity > params.tau_max, TEST_SCORES.index(Score.TOP), codes)
    return np.where(t == 1, codes, len(TEST_SCORES))


def kappa(n_max: int, tau_max: float) -> float:
    """κ = Γ(n_max+2, 0) / Γ(n_max+2, τ_max), with τ_max an intensity."""
    if n_max < 1:
        raise DomainError(f"kappa requires n_max >= 1, got {n_max}")
    if tau_max < 0:
        raise DomainError(f"kappa requires tau_max >= 0, got {tau_max}")
    tail = regularized_upper_gamma(n_max + 2.0, tau_max)
    if tail <= 0.0:
        raise DomainError(f"kappa overflows for n_max={n_max}, tau_max={tau_max}")
    return 1.0 / tail


def alice_marginal(alpha: float) -> np.ndarray:
    """Tr_Q |Ψ><Ψ| for the QPSK source: entries exp(-|α|²(1 - i^{x-x'})) / 4."""
    x = np.arange(4)
    phase = np.exp(1j * QUARTER * (x[:, None] - x[None, :]))
    return np.exp(-(abs(alpha) ** 2) * (1.0 - phase)) / 4.0


def region_operator(n_max: int, u_lower: float, u_upper: float,
                    theta_lower: float, theta_upper: float) -> np.ndarray:
    """Truncated heterodyne POVM element of one phase-space region on B."""
    if not (0.0 <= u_lower < u_upper):
        raise DegenerateRegionError(f"radial interval [{u_lower}, {u_upper}] is empty")
    if not theta_upper > theta_lower:
        raise DegenerateRegionError(f"arc [{theta_lower}, {theta_upper}] is empty")

    n = np.arange(n_max + 1)
    s = (n[:, None] + n[None, :]) / 2.0 + 1.0
    if math.isinf(u_upper):
        mass = special.gammaincc(s, u_lower)
    else:
        mass = special.gammainc(s, u_upper) - special.gammainc(s, u_lower)
    log_norm = special.gammaln(s) - 0.5 * (special.gammaln(n[:, None] + 1.0) + special.gammaln(n[None, :] + 1.0))
    radial = 0.5 * np.exp(log_norm) * mass

    k = (n[:, None] - n[None, :]).astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        arc = (np.exp(1j * k * theta_upper) - np.exp(1j * k * theta_lower)) / (1j * k)
    arc = np.where(k == 0, theta_upper - theta_lower, arc)

    matrix = radial * arc / math.pi
    return 0.5 * (matrix + matrix.conj().T)


def _quadrant_arc(z: int):
    return z * QUARTER, (z + 1) * QUARTER


def truncated_test_povm(c: Score, params: ProtocolParams) -> np.ndarray:
    """Π̃_c on A ⊗ B for a test score c ≠ ⊥."""
    if c == Score.BOTTOM:
        raise DomainError("⊥ has no test-round POVM element")
    n_max = params.n_max
    if c == Score.TOP:
        tail = region_operator(n_max, params.tau_max, math.inf, 0.0, 2.0 * math.pi)
        return np.kron(np.eye(4), tail)

    if c.is_inner:
        u_lower, u_upper = 0.0, params.tau_min
    else:
        u_lower, u_upper = params.tau_min, params.tau_max

    blocks = []
    for x in range(4):
        projector = np.zeros((4, 4))
        projector[x, x] = 1.0
        blocks.append(np.kron(projector, region_operator(n_max, u_lower, u_upper, *_quadrant_arc(x + c.offset))))
    return sum(blocks)


def keygen_povm(z: Optional[int], params: ProtocolParams) -> np.ndarray:
    """Bob's key-round POVM element P_{z|0} on B; z = None is the ∅ outcome."""
    if z is None:
        return region_operator(params.n_max, 0.0, params.tau_min_key, 0.0, 2.0 * math.pi)
    if z not in (0, 1, 2, 3):
        raise DomainError(f"key outcome must be None or 0..3, got {z}")
    return region_operator(params.n_max, params.tau_min_key, math.inf, *_quadrant_arc(z))


def build_truncated_operators(params: ProtocolParams) -> TruncatedOperators:
    """Assemble every operator the entropy SDP needs for one parameter point."""
    key_povms = {z: keygen_povm(z, params) for z in range(4)}
    no_click = keygen_povm(None, params)
    operators = TruncatedOperators(
        n_max=params.n_max,
        test_povms={c: truncated_test_povm(c, params) for c in TEST_SCORES},
        key_povms=key_povms,
        no_click_povm=no_click,
        post_selection=np.kron(np.eye(4), sum(key_povms.values())),
        alice_marginal=alice_marginal(params.alpha),
        kappa=kappa(params.n_max, params.tau_max),
    )
    logger.debug(f"Built truncated operators: dimension={operators.dimension}, kappa={operators.kappa:.6g}")
    return operators
