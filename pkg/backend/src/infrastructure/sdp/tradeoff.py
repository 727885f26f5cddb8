"""Affine g from a certified dual point and its conversion to a min-tradeoff function."""
import logging

import numpy as np

from src.core.error_handlers import DomainError
from src.domain.entities.certificate import AffineScoreFunction, DualCertificate
from src.domain.entities.corrections import CorrectionSet
from src.domain.entities.protocol import ALL_SCORES, TEST_SCORES, Score

logger = logging.getLogger(__name__)


def assemble_g(certificate: DualCertificate, corrections: CorrectionSet) -> AffineScoreFunction:
    """
    g(q) = dual value of the certificate at q minus g_corr(q_⊤).

    Every constraint contributes λ times its right-hand side as an affine form
    in q; clamped rows contribute constants. The continuity penalty tangent
    enters through the ⊤ coefficient and the constant.
    """
    dual = certificate.as_affine()
    coefficients = dual.coefficients.copy()
    coefficients[TEST_SCORES.index(Score.TOP)] -= corrections.m_corr
    constant = dual.constant - corrections.c_corr + corrections.m_corr * corrections.points.nu_c

    g = AffineScoreFunction(constant=float(constant), coefficients=coefficients, scores=TEST_SCORES)
    logger.debug(f"Assembled g: constant={g.constant:.6g}, top coefficient={g.coefficient(Score.TOP):.6g}")
    return g


def min_tradeoff(g: AffineScoreFunction, test_probability: float) -> AffineScoreFunction:
    """
    Extend g over test scores to f over every score including ⊥.

    f(e_c) = Φ - ((1-γ)/γ) λ'_max + λ'_c / γ for test scores and
    f(e_⊥) = Φ + λ'_max, so that f(γ q, 1-γ) = g(q).

    Args:
        g: Affine function of the test-conditional statistics
        test_probability: γ in (0, 1)

    Returns:
        f over ALL_SCORES with Max, Min, Min_Σ and Var metadata
    """
    if not 0.0 < test_probability < 1.0:
        raise DomainError(f"test_probability must lie in (0, 1), got {test_probability}")
    if g.scores != TEST_SCORES:
        raise DomainError("g must be defined over the test scores")

    gamma = test_probability
    phi = g.constant
    lam = g.coefficients
    lam_max, lam_min = float(lam.max()), float(lam.min())

    test_values = phi - ((1.0 - gamma) / gamma) * lam_max + lam / gamma
    bottom_value = phi + lam_max
    vertex_values = np.append(test_values, bottom_value)

    f = AffineScoreFunction(
        constant=phi,
        coefficients=vertex_values - phi,
        scores=ALL_SCORES,
        max_value=phi + lam_max,
        min_value=float(vertex_values.min()),
        min_sigma=phi + lam_min,
        variance=(lam_max - lam_min) ** 2 / gamma,
    )
    logger.debug(f"Min-tradeoff: Max={f.max_value:.6g}, Min={f.min_value:.6g}, "
                 f"Min_Sigma>={f.min_sigma:.6g}, Var<={f.variance:.6g}")
    return f
