"""Correction terms for truncating Bob's system to photon numbers <= n_max.

Every correction is a function of the weight w = κ q_⊤ that the state can
carry outside the truncated space, and each one is replaced by a tangent line
so that it enters the min-tradeoff function affinely.
"""
import logging
import math
from typing import Tuple

from src.core.error_handlers import DomainError
from src.domain.entities.corrections import (
    DELTA_PEAK_WEIGHT,
    XI_L_PLATEAU_WEIGHT,
    XI_U_PLATEAU_WEIGHT,
    CorrectionSet,
    LinearisationPoints,
)
from src.infrastructure.numerics.special_math import binary_entropy

logger = logging.getLogger(__name__)

DELTA_MAX = 1.0 / math.sqrt(3.0)


def _check_weight(w: float) -> None:
    if w < 0.0 or w > 1.0:
        raise DomainError(f"weight must lie in [0, 1], got {w}")


def _check_nonnegative_weight(w: float) -> None:
    if w < 0.0:
        raise DomainError(f"weight must be nonnegative, got {w}")


def delta_of_w(w: float) -> float:
    """Trace distance between a state and its gentle-measurement projection.

    For w <= 2/3 this is ½ sqrt(w(4 - 3w)), the half trace norm of
    [[0, sqrt(w(1-w))], [sqrt(w(1-w)), w]]; it is clamped to 1/√3 beyond.
    """
    _check_weight(w)
    if w >= DELTA_PEAK_WEIGHT:
        return DELTA_MAX
    return 0.5 * math.sqrt(w * (4.0 - 3.0 * w))


def delta_slope(w: float) -> float:
    """dδ/dw on (0, 2/3)."""
    if not 0.0 < w < DELTA_PEAK_WEIGHT:
        raise DomainError(f"delta slope requires w in (0, 2/3), got {w}")
    return (2.0 - 3.0 * w) / (2.0 * math.sqrt(w * (4.0 - 3.0 * w)))


def delta_tangent(nu_0: float, kappa: float) -> Tuple[float, float]:
    """Slope m_0 and intercept c_0 with δ(κν) <= m_0 (ν - ν_0) + c_0."""
    w_0 = kappa * nu_0
    if not 0.0 < w_0 < DELTA_PEAK_WEIGHT:
        raise DomainError(f"delta tangent requires κν_0 in (0, 2/3), got {w_0}")
    return kappa * delta_slope(w_0), delta_of_w(w_0)


def continuity_penalty(delta: float, d_z: int) -> float:
    """v(δ) = δ log2 d_Z + (1 + δ) h2(δ / (1 + δ))."""
    if delta < 0:
        raise DomainError(f"continuity penalty requires delta >= 0, got {delta}")
    return delta * math.log2(d_z) + (1.0 + delta) * binary_entropy(delta / (1.0 + delta))


def entropy_correction_tangent(nu_c: float, kappa: float, d_z: int) -> Tuple[float, float]:
    """Slope m_corr and intercept c_corr with v(δ(κν)) <= m_corr (ν - ν_c) + c_corr."""
    w_c = kappa * nu_c
    if not 0.0 < w_c < DELTA_PEAK_WEIGHT:
        raise DomainError(f"entropy correction requires κν_c in (0, 2/3), got {w_c}")
    delta_c = delta_of_w(w_c)
    penalty_slope = math.log2(d_z) + math.log2((1.0 + delta_c) / delta_c)
    return kappa * delta_slope(w_c) * penalty_slope, continuity_penalty(delta_c, d_z)


def xi_L(w: float) -> float:
    """Lower statistics correction; constant (1+√5)/2 for w >= (5+√5)/10, including w > 1."""
    _check_nonnegative_weight(w)
    if w >= XI_L_PLATEAU_WEIGHT:
        return (1.0 + math.sqrt(5.0)) / 2.0
    return w + 2.0 * math.sqrt(w * (1.0 - w))


def xi_U(w: float) -> float:
    """Upper statistics correction; constant (1-√5)/2 for w >= (5-√5)/10, including w > 1."""
    _check_nonnegative_weight(w)
    if w >= XI_U_PLATEAU_WEIGHT:
        return (1.0 - math.sqrt(5.0)) / 2.0
    return w - 2.0 * math.sqrt(w * (1.0 - w))


def xi_hat_L_coefficients(nu_l: float, kappa: float) -> Tuple[float, float]:
    """(slope, intercept) of the tangent to ξ_L(κν) at ν_L."""
    w = kappa * nu_l
    if not 0.0 < w <= XI_L_PLATEAU_WEIGHT:
        raise DomainError(f"xi_hat_L requires κν_L in (0, (5+√5)/10], got {w}")
    root = math.sqrt(w * (1.0 - w))
    return kappa * (1.0 + (1.0 - 2.0 * w) / root), math.sqrt(w / (1.0 - w))


def xi_hat_U_coefficients(nu_u: float, kappa: float) -> Tuple[float, float]:
    """(slope, intercept) of the tangent to ξ_U(κν) at ν_U."""
    w = kappa * nu_u
    if not 0.0 < w <= XI_U_PLATEAU_WEIGHT:
        raise DomainError(f"xi_hat_U requires κν_U in (0, (5-√5)/10], got {w}")
    root = math.sqrt(w * (1.0 - w))
    return kappa * (1.0 - (1.0 - 2.0 * w) / root), -math.sqrt(w / (1.0 - w))


def xi_hat_L(nu: float, nu_l: float, kappa: float) -> float:
    slope, intercept = xi_hat_L_coefficients(nu_l, kappa)
    return slope * nu + intercept


def xi_hat_U(nu: float, nu_u: float, kappa: float) -> float:
    slope, intercept = xi_hat_U_coefficients(nu_u, kappa)
    return slope * nu + intercept


def default_linearisation_points(q_top: float, kappa: float) -> LinearisationPoints:
    """Tangent points at q_⊤, pulled strictly inside every domain."""
    floor = 1e-15 / kappa

    def clip(upper_weight: float) -> float:
        return min(max(q_top, floor), (1.0 - 1e-9) * upper_weight / kappa)

    return LinearisationPoints(
        nu_c=clip(DELTA_PEAK_WEIGHT),
        nu_l=clip(XI_L_PLATEAU_WEIGHT),
        nu_u=clip(XI_U_PLATEAU_WEIGHT),
    )


def build_corrections(kappa: float, points: LinearisationPoints, d_z: int,
                      continuity_penalty: bool = True,
                      constraint_corrections: bool = True) -> CorrectionSet:
    """Collect every tangent; ablation flags zero the corresponding terms."""
    points.validate(kappa)
    m_0, c_0 = delta_tangent(points.nu_c, kappa)

    m_corr, c_corr = entropy_correction_tangent(points.nu_c, kappa, d_z)
    if not continuity_penalty:
        m_corr, c_corr = 0.0, 0.0

    m_l, c_l = xi_hat_L_coefficients(points.nu_l, kappa)
    m_u, c_u = xi_hat_U_coefficients(points.nu_u, kappa)
    if not constraint_corrections:
        m_l, c_l, m_u, c_u = 0.0, 0.0, 0.0, 0.0

    corrections = CorrectionSet(
        kappa=kappa, points=points,
        m_corr=m_corr, c_corr=c_corr, m_0=m_0, c_0=c_0,
        m_l=m_l, c_l=c_l, m_u=m_u, c_u=c_u,
        continuity_penalty=continuity_penalty,
        constraint_corrections=constraint_corrections,
    )
    logger.debug(
        f"Corrections at nu=({points.nu_c:.3e}, {points.nu_l:.3e}, {points.nu_u:.3e}): "
        f"m_corr={m_corr:.4g}, c_corr={c_corr:.4g}, xi_L=({m_l:.4g}, {c_l:.4g}), xi_U=({m_u:.4g}, {c_u:.4g})"
    )
    return corrections
