"""Command-line entry point: ``python -m src.cli <command>`` or ``dmcv-keyrate <command>``."""
import argparse
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import numpy as np
from scipy import stats

from src.core.app_settings import settings
from src.core.error_handlers import KeyRateError, error_record
from src.core.run_config import RunConfig, dump_run_config, load_run_config
from src.domain.entities.corrections import LinearisationPoints
from src.domain.entities.protocol import ALL_SCORES, TEST_SCORES
from src.domain.entities.report import KeyRateReport
from src.application.services.completeness_service import simulate_completeness
from src.application.services.finite_size import audit_report_row, ev_hash_length
from src.application.services.keyrate_service import KeyRateService, PointOptions
from src.application.services.sweep_service import run_sweep, save_sweep
from src.infrastructure.channel.channel_model import empirical_score_frequencies, honest_statistics, stream
from src.infrastructure.numerics.special_math import binomial_bound_F, gauss_radau
from src.infrastructure.operators.operator_export import dump_operators
from src.infrastructure.operators.protocol_operators import build_truncated_operators
from src.infrastructure.repositories.result_repository import CsvResultRepository
from src.infrastructure.sdp.serialization import certificate_to_dict, dump_json, problem_to_dict

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_KEYRATE_ERROR = 2


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=None, help="JSON run configuration.")
    common.add_argument("--output", type=str, default=None, help="Output file or directory.")
    common.add_argument("--seed", type=int, default=settings.SEED, help="Root seed for random streams.")
    common.add_argument("--workers", type=int, default=settings.WORKERS, help="Worker processes for sweeps.")
    common.add_argument("--no-continuity-penalty", action="store_true",
                        help="Drop the entropy continuity penalty (ablation).")
    common.add_argument("--no-constraint-corrections", action="store_true",
                        help="Drop every statistical-constraint correction (ablation).")
    common.add_argument("--loss-db", type=float, default=None, help="Override the channel loss.")
    common.add_argument("--rounds", type=float, default=None, help="Override N.")
    common.add_argument("--quiet", action="store_true", help="Warnings only, no progress bars.")
    common.add_argument("--log-level", type=str, default=settings.LOG_LEVEL)

    parser = argparse.ArgumentParser(prog="dmcv-keyrate",
                                     description="Certified finite-size key rates for QPSK DM-CV-QKD.")
    commands = parser.add_subparsers(dest="command", required=True)

    for name, text in (("asymptotic", "Asymptotic key rate of one point."),
                       ("keyrate", "Finite-size key rate of one point.")):
        sub = commands.add_parser(name, parents=[common], help=text)
        sub.add_argument("--dump-sdp", type=str, default=None,
                         help="Directory for the SDP problem and certificate snapshots.")

    sweep = commands.add_parser("sweep", parents=[common], help="Loss / N sweep to CSV plus JSON sidecar.")
    sweep.add_argument("--name", type=str, default=None, help="Run name (default: config hash).")
    sweep.add_argument("--mode", choices=["asymptotic", "finite"], default=None)

    simulate = commands.add_parser("simulate", parents=[common], help="Monte Carlo completeness check.")
    simulate.add_argument("--trials", type=int, default=10_000)
    simulate.add_argument("--budget", type=float, default=0.1, help="ε_com^PE used to build the tolerances.")
    simulate.add_argument("--samples", type=int, default=0,
                          help="Also sample this many rounds and compare score frequencies.")

    commands.add_parser("dump-operators", parents=[common], help="Export the truncated operators.")
    commands.add_parser("selftest", parents=[common], help="Fast consistency checks.")
    return parser


def _configure(args: argparse.Namespace) -> RunConfig:
    level = "WARNING" if args.quiet else args.log_level.upper()
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s", force=True)
    config = load_run_config(args.config)
    updates = {}
    if args.no_continuity_penalty:
        updates["continuity_penalty"] = False
    if args.no_constraint_corrections:
        updates["constraint_corrections"] = False
    if updates:
        config = config.model_copy(update={"optimise": config.optimise.model_copy(update=updates)})
    if args.loss_db is not None:
        config = config.model_copy(update={"channel": config.channel.model_copy(update={"loss_db": args.loss_db})})
    if args.rounds is not None:
        config = config.model_copy(update={"protocol": config.protocol.model_copy(update={"rounds": args.rounds})})
    return config


def _progress(args: argparse.Namespace) -> bool:
    return not args.quiet and sys.stderr.isatty()


def _emit(record: dict, output: Optional[str]) -> None:
    text = json.dumps(record, indent=2, default=str)
    if output:
        Path(output).parent.mkdir(parents=True, exist_ok=True)
        Path(output).write_text(text)
        logger.info(f"Wrote {output}")
    print(text)


def _dump_sdp(service: KeyRateService, config: RunConfig, options: PointOptions,
              report: KeyRateReport, directory: str) -> None:
    params = config.protocol_params().with_updates(alpha=report.alpha)
    channel = replace(config.channel_params(), dual_excess_noise=report.chi_dual)
    points = LinearisationPoints(nu_c=report.nu_c, nu_l=report.nu_l, nu_u=report.nu_u)
    bundle = service.dual(params, channel, points, options)
    dump_json(problem_to_dict(bundle.problem), Path(directory) / "problem.json")
    dump_json(certificate_to_dict(bundle.certificate), Path(directory) / "certificate.json")


def _point(args: argparse.Namespace, config: RunConfig, mode: str) -> int:
    service = config.service()
    options = config.point_options(mode=mode)
    params, channel = config.protocol_params(), config.channel_params()
    if mode == "asymptotic":
        report = service.asymptotic_rate(params, channel, options)
    else:
        report = service.keyrate_point(params, channel, options)
    if args.dump_sdp:
        _dump_sdp(service, config, options, report, args.dump_sdp)
    _emit(report.to_dict(), args.output)
    return EXIT_OK


def _sweep(args: argparse.Namespace, config: RunConfig) -> int:
    if args.mode:
        config = config.model_copy(update={"sweep": config.sweep.model_copy(update={"mode": args.mode})})
    spec = config.sweep_spec()
    service = config.service()
    reports = run_sweep(spec, config.protocol_params(), config.channel_params(), workers=args.workers,
                        service=service, base=config.point_options(), progress=_progress(args))
    repository = CsvResultRepository(args.output or settings.OUTPUT_DIR)
    full_config = json.loads(dump_run_config(config))
    full_config["seed"] = args.seed
    run = save_sweep(repository, reports, full_config, args.name)
    print(json.dumps({"run": run, "csv": str(repository.csv_path(run)),
                      "sidecar": str(repository.sidecar_path(run)),
                      "failed": sum(1 for r in reports if r.status == "failed")}))
    return EXIT_OK


def _simulate(args: argparse.Namespace, config: RunConfig) -> int:
    params, channel = config.protocol_params(), config.channel_params()
    rng = stream(args.seed, 0)
    result = simulate_completeness(params, channel, args.trials, rng, budget=args.budget,
                                   top_share=config.optimise.top_share, progress=_progress(args))
    record = result.to_dict()
    if args.samples > 0:
        honest = honest_statistics(params, channel)
        expected = honest.scores.with_bottom(params.test_probability)
        observed = empirical_score_frequencies(args.samples, params, channel, stream(args.seed, 1),
                                               progress=_progress(args))
        record["frequencies"] = {
            c.value: {"observed": float(observed[c]), "expected": expected[c],
                      "sigma": math.sqrt(expected[c] * (1.0 - expected[c]) / args.samples)}
            for c in ALL_SCORES
        }
    _emit(record, args.output)
    return EXIT_OK


def _dump_operators(args: argparse.Namespace, config: RunConfig) -> int:
    operators = build_truncated_operators(config.protocol_params())
    written = dump_operators(operators, args.output or Path(settings.OUTPUT_DIR) / "operators")
    print(json.dumps({"kappa": operators.kappa, "files": [str(p) for p in written]}))
    return EXIT_OK


def _selftest(args: argparse.Namespace, config: RunConfig) -> int:
    checks = {}
    rule = gauss_radau(2)
    checks["gauss_radau_m2"] = (np.allclose(rule.nodes, (1 / 3, 1.0), atol=1e-12)
                                and np.allclose(rule.weights, (0.75, 0.25), atol=1e-12))
    checks["ev_hash_length"] = ev_hash_length(1e-15) == 50

    violations = 0
    for n in (10, 100):
        for p in (0.1, 0.5, 0.9):
            for k in range(n):
                exact = stats.binom.cdf(k, n, p)
                if not binomial_bound_F(n, p, k) <= exact + 1e-12 or not exact <= binomial_bound_F(n, p, k + 1) + 1e-12:
                    violations += 1
    checks["binomial_sandwich"] = violations == 0

    small = config.protocol_params().with_updates(n_max=3, quadrature_order=2)
    service = config.service()
    options = PointOptions(mode="finite", optimise=frozenset({"beta", "epsilons"}))
    report = service.keyrate_point(small, config.channel_params(), options)
    checks["small_point_certified"] = math.isfinite(report.entropy_bound)
    checks["report_audit"] = audit_report_row(report.csv_row())
    checks["entropy_bound_range"] = -1e-6 <= report.entropy_bound <= math.log2(small.d_z) + 1e-6
    checks["scores"] = len(TEST_SCORES) + 1 == len(ALL_SCORES)

    failed = [name for name, ok in checks.items() if not ok]
    print(json.dumps({"checks": checks, "failed": failed}, indent=2))
    if failed:
        print(json.dumps({"error": "SelfTestFailed", "detail": f"failed checks: {failed}"}), file=sys.stderr)
        return EXIT_KEYRATE_ERROR
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = _parser().parse_args(argv)
    try:
        settings.validate()
        config = _configure(args)
        if args.command in ("asymptotic", "keyrate"):
            return _point(args, config, "asymptotic" if args.command == "asymptotic" else "finite")
        handlers = {
            "sweep": _sweep,
            "simulate": _simulate,
            "dump-operators": _dump_operators,
            "selftest": _selftest,
        }
        return handlers[args.command](args, config)
    except KeyRateError as e:
        logger.error(f"{args.command} failed: {e}")
        print(json.dumps(error_record(e)), file=sys.stderr)
        return EXIT_KEYRATE_ERROR
    except Exception as e:
        logger.exception(f"{args.command} failed unexpectedly")
        print(json.dumps(error_record(e)), file=sys.stderr)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
