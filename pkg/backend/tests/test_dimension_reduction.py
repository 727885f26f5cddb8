import math

import numpy as np
import pytest

from src.core.error_handlers import DomainError
from src.domain.entities.corrections import (
    DELTA_PEAK_WEIGHT,
    XI_L_PLATEAU_WEIGHT,
    XI_U_PLATEAU_WEIGHT,
    LinearisationPoints,
)
from src.infrastructure.sdp.dimension_reduction import (
    build_corrections,
    continuity_penalty,
    default_linearisation_points,
    delta_of_w,
    delta_slope,
    delta_tangent,
    entropy_correction_tangent,
    xi_hat_L,
    xi_hat_U,
    xi_L,
    xi_U,
)

KAPPA = 15.0
D_Z = 5


def _singular_value_delta(w: float) -> float:
    off = math.sqrt(w * (1.0 - w))
    return 0.5 * float(np.linalg.svd(np.array([[0.0, off], [off, w]]), compute_uv=False).sum())


def test_delta_endpoints():
    assert delta_of_w(0.0) == 0.0
    assert delta_of_w(DELTA_PEAK_WEIGHT) == 1.0 / math.sqrt(3.0)
    assert delta_of_w(0.9) == 1.0 / math.sqrt(3.0)
    with pytest.raises(DomainError):
        delta_of_w(1.2)


def test_delta_matches_singular_values(rng):
    for w in rng.uniform(0.0, DELTA_PEAK_WEIGHT, size=1000):
        assert delta_of_w(w) == pytest.approx(_singular_value_delta(w), abs=1e-12)
    assert delta_of_w(0.01) == pytest.approx(_singular_value_delta(0.01), abs=1e-12)


def test_delta_slope_matches_finite_difference():
    for w in (1e-4, 0.05, 0.3, 0.6):
        h = 1e-7 * w
        numeric = (delta_of_w(w + h) - delta_of_w(w - h)) / (2.0 * h)
        assert delta_slope(w) == pytest.approx(numeric, rel=1e-5)


def test_delta_tangent_slope_blows_up_near_zero():
    slopes = [delta_tangent(nu, KAPPA)[0] for nu in (1e-3, 1e-5, 1e-7, 1e-9)]
    assert all(b > a for a, b in zip(slopes, slopes[1:]))


def test_delta_tangent_upper_bounds_delta(rng):
    violations = 0
    for nu_0 in rng.uniform(1e-9, DELTA_PEAK_WEIGHT / KAPPA * (1 - 1e-6), size=50):
        m_0, c_0 = delta_tangent(nu_0, KAPPA)
        for nu in rng.uniform(0.0, 0.999 / KAPPA, size=20):
            if delta_of_w(KAPPA * nu) > m_0 * (nu - nu_0) + c_0 + 1e-10:
                violations += 1
    assert violations == 0


def test_continuity_penalty():
    assert continuity_penalty(0.0, D_Z) == 0.0
    delta = 0.1
    expected = delta * math.log2(D_Z) + (1 + delta) * math.log2(1 + delta) - delta * math.log2(delta)
    assert continuity_penalty(delta, D_Z) == pytest.approx(expected, abs=1e-14)


def test_entropy_correction_tangent_upper_bounds_penalty(rng):
    violations = 0
    for nu_c in rng.uniform(1e-9, DELTA_PEAK_WEIGHT / KAPPA * (1 - 1e-6), size=50):
        m_corr, c_corr = entropy_correction_tangent(nu_c, KAPPA, D_Z)
        assert c_corr == pytest.approx(continuity_penalty(delta_of_w(KAPPA * nu_c), D_Z))
        for nu in rng.uniform(0.0, 0.999 / KAPPA, size=20):
            if continuity_penalty(delta_of_w(KAPPA * nu), D_Z) > m_corr * (nu - nu_c) + c_corr + 1e-9:
                violations += 1
    assert violations == 0


def test_entropy_correction_slope_is_chain_rule():
    nu_c = 1e-3
    m_corr, _ = entropy_correction_tangent(nu_c, KAPPA, D_Z)
    h = 1e-9
    penalty = lambda nu: continuity_penalty(delta_of_w(KAPPA * nu), D_Z)
    assert m_corr == pytest.approx((penalty(nu_c + h) - penalty(nu_c - h)) / (2 * h), rel=1e-5)


def test_xi_plateaus():
    assert xi_L(0.0) == 0.0 and xi_U(0.0) == 0.0
    assert xi_L(0.95) == pytest.approx((1 + math.sqrt(5)) / 2)
    assert xi_U(0.5) == pytest.approx((1 - math.sqrt(5)) / 2)
    assert xi_L(XI_L_PLATEAU_WEIGHT) == pytest.approx((1 + math.sqrt(5)) / 2, abs=1e-12)
    assert xi_U(XI_U_PLATEAU_WEIGHT) == pytest.approx((1 - math.sqrt(5)) / 2, abs=1e-12)


def test_xi_tangents_bound_from_the_right_side(rng):
    violations = 0
    for _ in range(50):
        nu_l = rng.uniform(1e-9, XI_L_PLATEAU_WEIGHT / KAPPA)
        nu_u = rng.uniform(1e-9, XI_U_PLATEAU_WEIGHT / KAPPA)
        for nu in rng.uniform(0.0, 0.999 / KAPPA, size=20):
            w = KAPPA * nu
            if xi_hat_L(nu, nu_l, KAPPA) < xi_L(w) - 1e-9:
                violations += 1
            if xi_hat_U(nu, nu_u, KAPPA) > xi_U(w) + 1e-9:
                violations += 1
    assert violations == 0


def test_xi_plateaus_extend_past_unit_weight(rng):
    assert xi_L(1.5) == pytest.approx((1 + math.sqrt(5)) / 2)
    assert xi_U(3.0) == pytest.approx((1 - math.sqrt(5)) / 2)
    with pytest.raises(DomainError):
        xi_L(-0.1)
    with pytest.raises(DomainError):
        xi_U(-1e-6)
    for nu in rng.uniform(1.0 / KAPPA, 3.0 / KAPPA, size=200):
        assert xi_hat_L(nu, 0.3 / KAPPA, KAPPA) >= xi_L(KAPPA * nu) - 1e-9
        assert xi_hat_U(nu, 0.2 / KAPPA, KAPPA) <= xi_U(KAPPA * nu) + 1e-9


def test_xi_tangents_touch_at_their_points():
    nu = 0.01 / KAPPA
    assert xi_hat_L(nu, nu, KAPPA) == pytest.approx(xi_L(0.01), abs=1e-12)
    assert xi_hat_U(nu, nu, KAPPA) == pytest.approx(xi_U(0.01), abs=1e-12)


def test_linearisation_points_validation():
    LinearisationPoints(1e-4, 1e-4, 1e-4).validate(KAPPA)
    with pytest.raises(DomainError):
        LinearisationPoints(DELTA_PEAK_WEIGHT / KAPPA, 1e-4, 1e-4).validate(KAPPA)
    with pytest.raises(DomainError):
        LinearisationPoints(1e-4, 1e-4, 0.5 / KAPPA).validate(KAPPA)


@pytest.mark.parametrize("q_top", [0.0, 1e-12, 1e-6, 0.2, 0.99])
def test_default_points_are_valid(q_top):
    points = default_linearisation_points(q_top, KAPPA)
    points.validate(KAPPA)


def test_build_corrections_and_ablations():
    points = LinearisationPoints(1e-4, 1e-4, 1e-4)
    full = build_corrections(KAPPA, points, D_Z)
    assert full.m_corr > 0 and full.c_corr > 0
    assert full.m_l > 0 and full.c_l > 0 and full.c_u < 0
    assert full.relaxation_slope == KAPPA
    assert full.penalty(points.nu_c) == pytest.approx(full.c_corr)

    no_penalty = build_corrections(KAPPA, points, D_Z, continuity_penalty=False)
    assert no_penalty.m_corr == 0.0 and no_penalty.c_corr == 0.0
    assert no_penalty.m_l == full.m_l

    bare = build_corrections(KAPPA, points, D_Z, constraint_corrections=False)
    assert (bare.m_l, bare.c_l, bare.m_u, bare.c_u) == (0.0, 0.0, 0.0, 0.0)
    assert bare.relaxation_slope == 0.0
    assert bare.m_corr == full.m_corr
