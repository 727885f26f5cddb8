import logging
import uuid
from dataclasses import asdict, dataclass
from typing import Dict, Optional

import numpy as np
from scipy import stats
from tqdm import tqdm

from src.core.error_handlers import DomainError
from src.domain.entities.protocol import ALL_SCORES, ProtocolParams
from src.domain.entities.report import AcceptanceSet
from src.domain.entities.statistics import ChannelParams
from src.application.services.finite_size import build_acceptance_set
from src.infrastructure.channel.channel_model import honest_statistics

logger = logging.getLogger(__name__)

TRIAL_CHUNK = 1000


@dataclass(frozen=True)
class CompletenessResult:
    trials: int
    aborts: int
    abort_rate: float
    ci_low: float
    ci_high: float
    budget: Optional[float] = None

    @property
    def ci_width(self) -> float:
        return self.ci_high - self.ci_low

    def to_dict(self) -> Dict:
        record = asdict(self)
        record["ci_width"] = self.ci_width
        return record


def simulate_acceptance(p: np.ndarray, acceptance: AcceptanceSet, rounds: int, trials: int,
                        rng: np.random.Generator, confidence: float = 0.95,
                        progress: bool = False) -> CompletenessResult:
    """
    Fraction of honest N-round runs whose score frequencies leave the acceptance boxes.

    Frequency vectors are drawn directly from Multinomial(N, p).

    Args:
        p: Honest distribution over ALL_SCORES
        acceptance: Boxes to test against
        rounds: N
        trials: Number of simulated runs
        rng: Random stream
        confidence: Level of the Wilson interval

    Returns:
        CompletenessResult with a Wilson confidence interval
    """
    p = np.asarray(p, dtype=float)
    if p.shape != (len(ALL_SCORES),) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise DomainError("p must be a distribution over every score")
    if rounds < 1 or trials < 1:
        raise DomainError(f"need rounds >= 1 and trials >= 1, got {rounds}, {trials}")
    p = p / p.sum()

    aborts = 0
    for start in tqdm(range(0, trials, TRIAL_CHUNK), desc="Completeness trials", disable=not progress):
        counts = rng.multinomial(int(rounds), p, size=min(TRIAL_CHUNK, trials - start))
        frequencies = counts / rounds
        inside = np.all((frequencies >= acceptance.lower) & (frequencies <= acceptance.upper), axis=1)
        aborts += int((~inside).sum())

    interval = stats.binomtest(aborts, trials).proportion_ci(confidence_level=confidence, method="wilson")
    return CompletenessResult(
        trials=trials, aborts=aborts, abort_rate=aborts / trials,
        ci_low=float(interval.low), ci_high=float(interval.high),
    )


def simulate_completeness(params: ProtocolParams, channel: ChannelParams, trials: int,
                          rng: np.random.Generator, budget: Optional[float] = None,
                          top_share: Optional[float] = None, progress: bool = False) -> CompletenessResult:
    """Empirical abort rate of the honest implementation against its own acceptance set."""
    run_id = uuid.uuid4().hex[:8]
    epsilons = params.epsilons
    if budget is not None:
        epsilons = type(epsilons).create(
            secrecy=epsilons.secrecy, correctness=epsilons.correctness, completeness_pe=budget,
            completeness_ec=epsilons.completeness_ec, smoothing=epsilons.smoothing,
            accumulation=epsilons.accumulation,
        )
    honest = honest_statistics(params, channel)
    p = honest.scores.with_bottom(params.test_probability)
    rounds = int(params.rounds)
    acceptance = build_acceptance_set(p, rounds, epsilons, top_share)
    logger.info(f"[{run_id}] Simulating {trials} runs of N={rounds} at budget {epsilons.completeness_pe:.3g}")

    result = simulate_acceptance(p.as_vector(ALL_SCORES), acceptance, rounds, trials, rng, progress=progress)
    result = CompletenessResult(**{**asdict(result), "budget": epsilons.completeness_pe})
    logger.info(f"[{run_id}] Abort rate {result.abort_rate:.4g} "
                f"(Wilson [{result.ci_low:.4g}, {result.ci_high:.4g}])")
    return result
