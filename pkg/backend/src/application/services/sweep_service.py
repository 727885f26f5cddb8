import logging
import uuid
from multiprocessing import Pool
from typing import Dict, List, Optional, Tuple

from tqdm import tqdm

from src.core.error_handlers import KeyRateError
from src.domain.entities.protocol import ProtocolParams
from src.domain.entities.report import KeyRateReport, SweepSpec
from src.domain.entities.statistics import ChannelParams
from src.application.services.keyrate_service import KeyRateService, PointOptions
from src.infrastructure.repositories.result_repository import ResultRepository
from src.infrastructure.sdp.entropy_sdp import ConicBackend

logger = logging.getLogger(__name__)

Job = Tuple[ProtocolParams, ChannelParams, PointOptions]

_worker_service: Optional[KeyRateService] = None


def _init_worker(backend: ConicBackend, verify_tolerance: Optional[float]) -> None:
    global _worker_service
    _worker_service = KeyRateService(backend=backend, verify_tolerance=verify_tolerance)


def options_for(spec: SweepSpec, base: Optional[PointOptions] = None) -> PointOptions:
    base = base or PointOptions()
    return base.with_updates(
        mode=spec.mode,
        optimise=frozenset(spec.optimise),
        continuity_penalty=spec.continuity_penalty,
        constraint_corrections=spec.constraint_corrections,
    )


def build_jobs(spec: SweepSpec, params: ProtocolParams, channel: ChannelParams,
               base: Optional[PointOptions] = None) -> List[Job]:
    """One job per grid point, in grid order."""
    options = options_for(spec, base)
    jobs = []
    for loss_db, rounds in spec.points():
        point_params = params if rounds is None else params.with_updates(rounds=float(rounds))
        point_channel = ChannelParams.from_loss_db(loss_db, channel.excess_noise, channel.dual_excess_noise)
        jobs.append((point_params, point_channel, options))
    return jobs


def evaluate_job(job: Job, service: Optional[KeyRateService] = None) -> KeyRateReport:
    """Key rate of one grid point; failures become a 'failed' report rather than a zero rate."""
    global _worker_service
    if service is None:
        if _worker_service is None:
            _worker_service = KeyRateService()
        service = _worker_service
    params, channel, options = job
    try:
        return service.keyrate_point(params, channel, options)
    except KeyRateError as e:
        logger.error(f"Point at {channel.loss_db:.3f} dB, N={params.rounds:.3g} failed: {e}")
        return KeyRateReport.failed(
            mode=options.mode, loss_db=channel.loss_db, alpha=params.alpha,
            chi_dual=channel.noise_for_dual, error=f"{type(e).__name__}: {e}",
            rounds=None if options.mode == "asymptotic" else params.rounds,
        )


def run_sweep(spec: SweepSpec, params: ProtocolParams, channel: ChannelParams,
              workers: int = 1, service: Optional[KeyRateService] = None,
              base: Optional[PointOptions] = None, progress: bool = True) -> List[KeyRateReport]:
    """
    Evaluate every grid point of a sweep.

    Args:
        spec: Grid and per-point switches
        params: Protocol parameters shared by every point (N is overridden by the grid)
        channel: Excess noise and dual excess noise; loss comes from the grid
        workers: Size of the process pool; 1 runs in-process
        service: Service used in-process; with a pool, its backend configures every worker
        base: Options not covered by ``spec`` (leakage mode, β, ⊤ budget share)
        progress: Show a progress bar

    Returns:
        Reports in grid order regardless of completion order
    """
    run_id = uuid.uuid4().hex[:8]
    jobs = build_jobs(spec, params, channel, base)
    logger.info(f"[{run_id}] Sweep of {len(jobs)} points ({spec.mode}) with {workers} worker(s)")

    if workers > 1:
        initargs = (service.backend, service.verify_tolerance) if service is not None else (None, None)
        with Pool(workers, initializer=_init_worker, initargs=initargs) as pool:
            reports = list(tqdm(pool.imap(evaluate_job, jobs), total=len(jobs),
                                desc="Sweep", disable=not progress))
    else:
        service = service or KeyRateService()
        reports = [evaluate_job(job, service) for job in tqdm(jobs, desc="Sweep", disable=not progress)]

    failed = sum(1 for r in reports if r.status == "failed")
    logger.info(f"[{run_id}] Sweep finished: {len(reports) - failed} ok, {failed} failed")
    return reports


def save_sweep(repository: ResultRepository, reports: List[KeyRateReport], config: Dict,
               name: Optional[str] = None) -> str:
    return repository.save([r.csv_row() for r in reports], config, name)
