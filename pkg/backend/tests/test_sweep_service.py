import math

import pytest

from src.application.services.keyrate_service import PointOptions
from src.application.services.sweep_service import build_jobs, evaluate_job, options_for, run_sweep, save_sweep
from src.core.error_handlers import InfeasibleProblemError
from src.domain.entities.report import KeyRateReport, SweepSpec
from src.infrastructure.repositories.result_repository import CsvResultRepository


class StubService:
    """Answers every point without solving, failing above a loss threshold."""

    def __init__(self, fail_above: float = math.inf):
        self.fail_above = fail_above
        self.calls = []

    def keyrate_point(self, params, channel, options):
        self.calls.append((channel.loss_db, params.rounds))
        if channel.loss_db > self.fail_above:
            raise InfeasibleProblemError("lower:top", "lower bound exceeds 1")
        rate = 0.1 / (1.0 + channel.loss_db)
        return KeyRateReport(
            mode=options.mode, loss_db=channel.loss_db, alpha=params.alpha, chi_dual=channel.noise_for_dual,
            nu_c=1e-9, nu_l=1e-9, nu_u=1e-9, h=0.5, leak_ec=0.4, rate=rate, rate_raw=rate,
            status="positive", rounds=params.rounds if options.mode == "finite" else None,
        )


def test_options_for_takes_spec_switches():
    spec = SweepSpec(losses_db=(1.0,), mode="asymptotic", continuity_penalty=False)
    options = options_for(spec, PointOptions(leakage_mode="reverse"))
    assert options.mode == "asymptotic"
    assert not options.continuity_penalty
    assert options.leakage_mode == "reverse"


def test_build_jobs_in_grid_order(small_params, channel):
    spec = SweepSpec(losses_db=(0.0, 2.0), rounds=(1e8, 1e10))
    jobs = build_jobs(spec, small_params, channel)
    assert [(c.loss_db, p.rounds) for p, c, _ in jobs] == [
        (pytest.approx(0.0), 1e8), (pytest.approx(0.0), 1e10), (pytest.approx(2.0), 1e8), (pytest.approx(2.0), 1e10)]
    assert all(c.excess_noise == channel.excess_noise for _, c, _ in jobs)


def test_failed_point_is_recorded_not_zeroed(small_params, channel):
    spec = SweepSpec(losses_db=(5.0,), rounds=(1e10,))
    report = evaluate_job(build_jobs(spec, small_params, channel)[0], StubService(fail_above=1.0))
    assert report.status == "failed"
    assert math.isnan(report.rate)
    assert report.error.startswith("InfeasibleProblemError")
    assert report.rounds == 1e10


def test_run_sweep_in_process(small_params, channel, tmp_path):
    spec = SweepSpec(losses_db=(0.0, 1.0, 2.0), mode="asymptotic")
    service = StubService(fail_above=1.5)
    reports = run_sweep(spec, small_params, channel, service=service, progress=False)
    assert [r.status for r in reports] == ["positive", "positive", "failed"]
    assert len(service.calls) == 3

    repository = CsvResultRepository(tmp_path)
    run = save_sweep(repository, reports, {"spec": spec.to_dict()})
    frame, _ = repository.load(run)
    assert frame["status"].tolist() == ["positive", "positive", "failed"]
    assert math.isnan(frame["rate"].iloc[2])
