"""Key rate of one parameter point: dual construction, min-tradeoff function, finite-size accounting and optimisation."""
import logging
import math
import threading
import uuid
from dataclasses import dataclass, replace
from typing import Callable, Dict, FrozenSet, Optional, Tuple

from scipy import optimize

from src.core.error_handlers import DomainError, KeyRateError
from src.domain.entities.certificate import AffineScoreFunction, DualCertificate
from src.domain.entities.corrections import (
    DELTA_PEAK_WEIGHT,
    XI_L_PLATEAU_WEIGHT,
    XI_U_PLATEAU_WEIGHT,
    CorrectionSet,
    LinearisationPoints,
)
from src.domain.entities.protocol import EpsilonBudget, ProtocolParams, Score, TruncatedOperators
from src.domain.entities.report import OPTIMISABLE, AcceptanceSet, KeyRateReport
from src.domain.entities.statistics import ChannelParams, HonestStatistics
from src.application.services.finite_size import (
    build_acceptance_set,
    ev_hash_length,
    floor_over_acceptance,
    optimise_secrecy,
)
from src.infrastructure.channel.channel_model import honest_statistics, leakage_per_round
from src.infrastructure.numerics.special_math import gauss_radau
from src.infrastructure.operators.protocol_operators import build_truncated_operators
from src.infrastructure.sdp.dimension_reduction import build_corrections, default_linearisation_points
from src.infrastructure.sdp.entropy_sdp import (
    ConicBackend,
    EntropySdpProblem,
    build_problem,
    certify,
    default_backend,
)
from src.infrastructure.sdp.tradeoff import assemble_g, min_tradeoff

logger = logging.getLogger(__name__)

ALPHA_RANGE = (0.2, 1.6)
CHI_DUAL_RANGE = (0.0, 0.05)
LINE_SEARCH_ITERATIONS = 12
FAILED_TRIAL = 1e300


@dataclass(frozen=True)
class PointOptions:
    """Per-point switches: what to optimise, which corrections to keep, leakage convention."""
    mode: str = "finite"
    optimise: FrozenSet[str] = frozenset({"beta", "epsilons"})
    continuity_penalty: bool = True
    constraint_corrections: bool = True
    leakage_mode: str = "direct"
    beta: float = 1e-4
    top_share: Optional[float] = None
    linearisation: Optional[LinearisationPoints] = None
    max_rounds: int = 3

    def __post_init__(self) -> None:
        if self.mode not in ("asymptotic", "finite"):
            raise DomainError(f"mode must be 'asymptotic' or 'finite', got {self.mode!r}")
        unknown = set(self.optimise) - OPTIMISABLE
        if unknown:
            raise DomainError(f"unknown optimisation variables {sorted(unknown)}")
        if self.max_rounds < 1:
            raise DomainError("max_rounds must be at least 1")

    def with_updates(self, **changes) -> "PointOptions":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class DualBundle:
    """Everything derived from one certified dual solve."""
    operators: TruncatedOperators
    problem: EntropySdpProblem
    certificate: DualCertificate
    corrections: CorrectionSet
    g: AffineScoreFunction
    f: AffineScoreFunction


@dataclass
class _Trial:
    params: ProtocolParams
    channel: ChannelParams
    points: Optional[LinearisationPoints]
    report: Optional[KeyRateReport] = None
    score: float = -math.inf


class KeyRateService:
    """Computes certified key rates, caching operators and dual solves across calls."""

    def __init__(self, backend: Optional[ConicBackend] = None, verify_tolerance: Optional[float] = None):
        self.backend = backend or default_backend()
        self.verify_tolerance = verify_tolerance
        self._operators: Dict[Tuple, TruncatedOperators] = {}
        self._duals: Dict[Tuple, DualBundle] = {}
        self._lock = threading.Lock()

    # -- building blocks -------------------------------------------------

    def operators(self, params: ProtocolParams) -> TruncatedOperators:
        key = (params.alpha, params.tau_min_key, params.tau_min, params.tau_max, params.n_max)
        with self._lock:
            cached = self._operators.get(key)
        if cached is None:
            cached = build_truncated_operators(params)
            with self._lock:
                self._operators[key] = cached
        return cached

    def linearisation_points(self, params: ProtocolParams, channel: ChannelParams,
                             options: PointOptions) -> LinearisationPoints:
        if options.linearisation is not None:
            return options.linearisation
        dual_statistics = honest_statistics(params, channel.dual_channel())
        return default_linearisation_points(dual_statistics.scores[Score.TOP], self.operators(params).kappa)

    def dual(self, params: ProtocolParams, channel: ChannelParams, points: LinearisationPoints,
             options: PointOptions) -> DualBundle:
        """
        Certified dual at the trial statistics generated with the dual excess noise.

        Args:
            params: Protocol parameters (α, thresholds, cutoff, quadrature order)
            channel: Channel; its dual excess noise selects the trial statistics
            points: Tangent points of the corrections
            options: Ablation switches

        Returns:
            DualBundle with g and the min-tradeoff f
        """
        key = (
            replace(params, rounds=1.0, epsilons=EpsilonBudget()),
            channel.transmittance, channel.noise_for_dual, points,
            options.continuity_penalty, options.constraint_corrections,
        )
        with self._lock:
            cached = self._duals.get(key)
        if cached is not None:
            return cached

        run_id = uuid.uuid4().hex[:8]
        logger.info(f"[{run_id}] Solving dual: alpha={params.alpha:.4f}, eta={channel.transmittance:.4f}, "
                    f"chi_dual={channel.noise_for_dual:.4g}")
        operators = self.operators(params)
        statistics = honest_statistics(params, channel.dual_channel())
        corrections = build_corrections(
            operators.kappa, points, params.d_z,
            continuity_penalty=options.continuity_penalty,
            constraint_corrections=options.constraint_corrections,
        )
        problem = build_problem(operators, gauss_radau(params.quadrature_order), statistics.scores,
                                corrections, params.test_probability)
        certificate = certify(problem, self.backend.solve(problem), self.verify_tolerance)
        g = assemble_g(certificate, corrections)
        f = min_tradeoff(g, params.test_probability)
        bundle = DualBundle(operators=operators, problem=problem, certificate=certificate,
                            corrections=corrections, g=g, f=f)
        logger.info(f"[{run_id}] Certified entropy bound {certificate.dual_value:.6f} "
                    f"(primal {certificate.primal_value}), g at q_dual {g(statistics.scores):.6f}")
        with self._lock:
            self._duals[key] = bundle
        return bundle

    # -- evaluation at fixed optimisation variables ----------------------

    def evaluate(self, params: ProtocolParams, channel: ChannelParams, options: PointOptions,
                 points: Optional[LinearisationPoints] = None,
                 honest: Optional[HonestStatistics] = None) -> KeyRateReport:
        """Key rate with α, χ_dual and the tangent points held fixed (β and ε may still be searched)."""
        points = points or self.linearisation_points(params, channel, options)
        honest = honest or honest_statistics(params, channel)
        bundle = self.dual(params, channel, points, options)
        f = bundle.f
        gamma = params.test_probability
        p = honest.scores.with_bottom(gamma)
        leak_per_round = leakage_per_round(honest, gamma, options.leakage_mode)
        common = dict(
            loss_db=channel.loss_db, alpha=params.alpha, chi_dual=channel.noise_for_dual,
            nu_c=points.nu_c, nu_l=points.nu_l, nu_u=points.nu_u,
            entropy_bound=bundle.certificate.dual_value,
            primal_value=bundle.certificate.primal_value,
            g_corr=bundle.corrections.penalty(bundle.problem.statistics[Score.TOP]),
            min_tradeoff=f.to_dict(),
        )

        if options.mode == "asymptotic":
            h = floor_over_acceptance(f, AcceptanceSet.point(p.as_vector(f.scores)))
            rate_raw = h - leak_per_round
            return KeyRateReport(
                mode="asymptotic", h=h, leak_ec=leak_per_round, rate=max(rate_raw, 0.0), rate_raw=rate_raw,
                status="positive" if rate_raw > 0 else "zero", **common,
            )

        rounds = params.rounds
        epsilons = params.epsilons
        acceptance = build_acceptance_set(p, rounds, epsilons, options.top_share)
        h = floor_over_acceptance(f, acceptance)
        leak_ec = rounds * leak_per_round
        l_ev = ev_hash_length(epsilons.correctness)
        plan = optimise_secrecy(
            f, h, rounds, params.d_z, leak_ec, l_ev, epsilons,
            search_eps="epsilons" in options.optimise,
            search_beta="beta" in options.optimise,
            beta=options.beta,
        )
        surplus = plan.terms.bound - leak_ec - l_ev + 2.0 + 2.0 * math.log2(epsilons.secrecy - 2.0 * plan.eps_s)
        return KeyRateReport(
            mode="finite", rounds=rounds, h=h, leak_ec=leak_ec,
            rate=plan.key_length / rounds, rate_raw=surplus / rounds,
            status="positive" if plan.key_length > 0 else "zero",
            beta=plan.beta, v=plan.terms.v, k_beta=plan.terms.k_beta,
            smoothing_term=plan.terms.smoothing_term, geat_bound=plan.terms.bound,
            l_ev=l_ev, key_length=plan.key_length,
            eps_s=plan.eps_s, eps_ea=plan.eps_ea, eps_sec=epsilons.secrecy,
            acceptance=acceptance.to_dict(), **common,
        )

    # -- optimisation ----------------------------------------------------

    def _line_search(self, trial: _Trial, options: PointOptions, bounds: Tuple[float, float],
                     apply: Callable[[_Trial, float], _Trial], log_scale: bool = False) -> _Trial:
        best = trial

        def objective(x: float) -> float:
            nonlocal best
            value = math.exp(x) if log_scale else x
            candidate = apply(trial, value)
            try:
                report = self.evaluate(candidate.params, candidate.channel, options, candidate.points)
            except KeyRateError as e:
                logger.warning(f"Trial {value:.6g} failed: {e}")
                return FAILED_TRIAL
            if report.rate_raw > best.score:
                best = replace(candidate, report=report, score=report.rate_raw)
            return -report.rate_raw

        low, high = (math.log(bounds[0]), math.log(bounds[1])) if log_scale else bounds
        optimize.minimize_scalar(objective, bounds=(low, high), method="bounded",
                                 options={"maxiter": LINE_SEARCH_ITERATIONS, "xatol": 1e-3})
        return best

    def _searches(self, params: ProtocolParams, options: PointOptions):
        kappa = self.operators(params).kappa
        searches = []
        if "alpha" in options.optimise:
            searches.append(("alpha", ALPHA_RANGE, False,
                             lambda t, v: replace(t, params=t.params.with_updates(alpha=v), points=None)))
        if "chi_dual" in options.optimise:
            searches.append(("chi_dual", CHI_DUAL_RANGE, False,
                             lambda t, v: replace(t, channel=replace(t.channel, dual_excess_noise=v), points=None)))
        for name, weight in (("nu_c", DELTA_PEAK_WEIGHT), ("nu_l", XI_L_PLATEAU_WEIGHT),
                             ("nu_u", XI_U_PLATEAU_WEIGHT)):
            if name in options.optimise:
                bounds = (1e-12 / kappa, (1.0 - 1e-9) * weight / kappa)
                searches.append((name, bounds, True, self._point_setter(name, options)))
        return searches

    def _point_setter(self, name: str, options: PointOptions):
        def apply(trial: _Trial, value: float) -> _Trial:
            points = trial.points or self.linearisation_points(trial.params, trial.channel, options)
            return replace(trial, points=replace(points, **{name: value}))
        return apply

    def keyrate_point(self, params: ProtocolParams, channel: ChannelParams,
                      options: Optional[PointOptions] = None) -> KeyRateReport:
        """
        Optimised key rate of one (parameters, channel) point.

        Coordinate descent over the requested subset of α, χ_dual, ν_c, ν_L,
        ν_U with bounded line searches; β and the ε split are optimised
        inside every evaluation. Deterministic for a given input.

        Raises:
            KeyRateError: When the point itself (not a trial) cannot be evaluated
        """
        options = options or PointOptions()
        run_id = uuid.uuid4().hex[:8]
        logger.info(f"[{run_id}] Key rate ({options.mode}) at {channel.loss_db:.3f} dB, "
                    f"N={params.rounds:.3g}, optimising {sorted(options.optimise)}")

        report = self.evaluate(params, channel, options, options.linearisation)
        best = _Trial(params=params, channel=channel, points=options.linearisation,
                      report=report, score=report.rate_raw)
        searches = self._searches(params, options)
        for round_index in range(options.max_rounds if searches else 0):
            start = best.score
            for name, bounds, log_scale, apply in searches:
                best = self._line_search(best, options, bounds, apply, log_scale)
                logger.debug(f"[{run_id}] round {round_index}: {name} -> rate_raw={best.score:.6e}")
            if best.score - start <= 1e-9 * max(1.0, abs(start)):
                break

        result = best.report.with_updates(run_id=run_id)
        logger.info(f"[{run_id}] Rate {result.rate:.6e} (raw {result.rate_raw:.6e}), status={result.status}")
        return result

    def asymptotic_rate(self, params: ProtocolParams, channel: ChannelParams,
                        options: Optional[PointOptions] = None) -> KeyRateReport:
        """N → ∞ limit: f at the honest p minus the leakage per round."""
        options = (options or PointOptions()).with_updates(mode="asymptotic")
        return self.keyrate_point(params, channel, options)

    def clear_cache(self) -> None:
        with self._lock:
            self._operators.clear()
            self._duals.clear()
