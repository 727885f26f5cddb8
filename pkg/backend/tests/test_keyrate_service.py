import math

import pytest

from src.application.services.finite_size import audit_report_row
from src.application.services.keyrate_service import PointOptions
from src.core.error_handlers import DomainError
from src.domain.entities.corrections import LinearisationPoints
from src.domain.entities.report import CSV_COLUMNS
from src.domain.entities.statistics import ChannelParams

ASYMPTOTIC = PointOptions(mode="asymptotic")
FINITE = PointOptions(mode="finite")


def test_point_options_validation():
    assert PointOptions().optimise == frozenset({"beta", "epsilons"})
    with pytest.raises(DomainError):
        PointOptions(mode="batch")
    with pytest.raises(DomainError):
        PointOptions(optimise=frozenset({"gamma"}))
    with pytest.raises(DomainError):
        PointOptions(max_rounds=0)
    assert FINITE.with_updates(beta=1e-3).beta == 1e-3


def test_linearisation_points_default_and_override(keyrate_service, small_params, channel):
    points = keyrate_service.linearisation_points(small_params, channel, ASYMPTOTIC)
    points.validate(keyrate_service.operators(small_params).kappa)
    fixed = LinearisationPoints(1e-9, 1e-9, 1e-9)
    assert keyrate_service.linearisation_points(small_params, channel,
                                                ASYMPTOTIC.with_updates(linearisation=fixed)) is fixed


def test_operators_are_cached(keyrate_service, small_params):
    assert keyrate_service.operators(small_params) is keyrate_service.operators(small_params.with_updates(rounds=5.0))


@pytest.mark.slow
def test_asymptotic_rate_is_floor_minus_leakage(keyrate_service, small_params, channel):
    report = keyrate_service.asymptotic_rate(small_params, channel)
    assert report.mode == "asymptotic"
    assert report.rate_raw == pytest.approx(report.h - report.leak_ec, abs=1e-12)
    assert report.rate == max(report.rate_raw, 0.0)
    assert report.status == ("positive" if report.rate_raw > 0 else "zero")
    assert report.key_length is None
    assert math.isfinite(report.entropy_bound)


@pytest.mark.slow
def test_dual_is_cached_independently_of_rounds(keyrate_service, small_params, channel):
    points = keyrate_service.linearisation_points(small_params, channel, FINITE)
    first = keyrate_service.dual(small_params, channel, points, FINITE)
    again = keyrate_service.dual(small_params.with_updates(rounds=1e8), channel, points, ASYMPTOTIC)
    assert first is again
    assert first.f.is_min_tradeoff


@pytest.mark.slow
def test_finite_rate_is_below_asymptotic_and_grows_with_rounds(keyrate_service, small_params, channel):
    asymptotic = keyrate_service.evaluate(small_params, channel, ASYMPTOTIC)
    large = keyrate_service.evaluate(small_params.with_updates(rounds=1e12), channel, FINITE)
    small = keyrate_service.evaluate(small_params.with_updates(rounds=1e8), channel, FINITE)
    assert large.rate_raw <= asymptotic.rate_raw + 1e-12
    assert small.rate_raw < large.rate_raw
    assert large.h <= asymptotic.h + 1e-12
    assert 0.0 < large.beta < 0.5


@pytest.mark.slow
def test_repeated_points_are_deterministic(keyrate_service, small_params, channel):
    first = keyrate_service.keyrate_point(small_params, channel, FINITE)
    second = keyrate_service.keyrate_point(small_params, channel, FINITE)
    assert first.key_length == second.key_length
    assert first.rate_raw == second.rate_raw


@pytest.mark.slow
def test_dropping_the_continuity_penalty_never_lowers_the_rate(keyrate_service, small_params, channel):
    with_penalty = keyrate_service.evaluate(small_params, channel, ASYMPTOTIC)
    without = keyrate_service.evaluate(small_params, channel, ASYMPTOTIC.with_updates(continuity_penalty=False))
    assert without.rate_raw >= with_penalty.rate_raw - 1e-9
    assert with_penalty.g_corr >= 0.0


@pytest.mark.slow
def test_finite_report_row_passes_audit(keyrate_service, small_params, channel):
    report = keyrate_service.evaluate(small_params, channel, FINITE)
    row = report.csv_row()
    assert tuple(row) == CSV_COLUMNS
    assert audit_report_row(row)


@pytest.mark.slow
def test_test_rounds_only_give_no_key(keyrate_service, small_params, channel):
    report = keyrate_service.asymptotic_rate(small_params.with_updates(test_probability=1.0 - 1e-9), channel)
    assert report.rate == 0.0
    assert report.rate_raw <= 1e-6
    assert abs(report.entropy_bound) <= 1e-5
    assert report.leak_ec <= 1e-8


@pytest.mark.slow
def test_removing_corrections_orders_the_asymptotic_rate(keyrate_service, default_params):
    lossy = ChannelParams.from_loss_db(1.0)
    full = keyrate_service.asymptotic_rate(default_params, lossy)
    no_penalty = keyrate_service.asymptotic_rate(default_params, lossy, PointOptions(continuity_penalty=False))
    bare = keyrate_service.asymptotic_rate(
        default_params, lossy, PointOptions(continuity_penalty=False, constraint_corrections=False))
    assert full.rate_raw < no_penalty.rate_raw
    assert no_penalty.rate_raw <= bare.rate_raw + 1e-6
    assert full.rate > 0.0


@pytest.mark.slow
def test_full_analysis_has_no_key_at_ten_db(keyrate_service, default_params):
    report = keyrate_service.asymptotic_rate(default_params, ChannelParams.from_loss_db(10.0))
    assert report.rate_raw <= 0.0
    assert report.rate == 0.0


@pytest.mark.slow
def test_finite_rate_grows_towards_asymptotic_at_half_db(keyrate_service, default_params):
    lossy = ChannelParams.from_loss_db(0.5)
    asymptotic = keyrate_service.asymptotic_rate(default_params, lossy)
    finite = [keyrate_service.keyrate_point(default_params.with_updates(rounds=rounds), lossy, FINITE)
              for rounds in (1e14, 1e15, 1e16)]
    rates = [report.rate_raw for report in finite]
    assert 0.0 <= finite[0].rate
    assert rates[0] < rates[1] < rates[2] < asymptotic.rate_raw
    assert all(report.rate < asymptotic.rate for report in finite)
