"""Honest lossy/noisy Gaussian channel: region probabilities, score statistics and a round sampler.

Given Alice's symbol x, Bob's heterodyne outcome Y has density

    p(y | x) = exp(-|y - μ_x|^2 / v) / (π v),   μ_x = sqrt(η) α exp(i(π x/2 + π/4)),

with v = 1 + ηχ/2. Radial integrals are done in closed form (erf); the arc
is integrated numerically.
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np
import pandas as pd
from scipy import integrate, special
from tqdm import tqdm

from src.core.error_handlers import DomainError
from src.domain.entities.protocol import ALL_SCORES, TEST_SCORES, ProtocolParams, Score
from src.domain.entities.statistics import (
    ChannelParams,
    HonestStatistics,
    PhaseSpaceRegion,
    ScoreDistribution,
)
from src.infrastructure.operators.protocol_operators import (
    discretize_key,
    discretize_test,
    quadrants_of,
    score,
    score_indices,
)

logger = logging.getLogger(__name__)

KEY_DISCARDED = -1
NOT_KEY_ROUND = -2
QUAD_OPTIONS = {"epsabs": 1e-12, "epsrel": 1e-10, "limit": 200}


def symbol_mean(x: int, channel: ChannelParams, alpha: float) -> complex:
    return math.sqrt(channel.transmittance) * alpha * np.exp(1j * (math.pi * x / 2.0 + math.pi / 4.0))


def _radial_integral(theta: float, r_lower: float, r_upper: float, mean: complex, v: float) -> float:
    """∫ r p(r e^{iθ} | x) dr over [r_lower, r_upper] in closed form."""
    m = abs(mean)
    a = m * math.cos(theta - np.angle(mean))
    sqrt_v = math.sqrt(v)
    shift = math.exp(-(m * m - a * a) / v)

    lower_gauss = math.exp(-((r_lower - a) ** 2) / v)
    upper_gauss = 0.0 if math.isinf(r_upper) else math.exp(-((r_upper - a) ** 2) / v)
    upper_erf = 1.0 if math.isinf(r_upper) else special.erf((r_upper - a) / sqrt_v)
    lower_erf = special.erf((r_lower - a) / sqrt_v)

    value = 0.5 * v * (lower_gauss - upper_gauss) + a * 0.5 * math.sqrt(math.pi * v) * (upper_erf - lower_erf)
    return shift * value / (math.pi * v)


def region_probability(x: int, region: PhaseSpaceRegion, channel: ChannelParams, alpha: float) -> float:
    """
    Pr[Y ∈ region | X = x] for the honest channel.

    Args:
        x: Alice's symbol 0..3
        region: Intensity interval times arc
        channel: Transmittance and excess noise
        alpha: Coherent-state amplitude

    Returns:
        Probability in [0, 1]
    """
    if x not in (0, 1, 2, 3):
        raise DomainError(f"symbol must be 0..3, got {x}")
    v = channel.variance
    mean = symbol_mean(x, channel, alpha)
    if abs(mean) == 0.0:
        arc = (region.theta_upper - region.theta_lower) / (2.0 * math.pi)
        upper_tail = 0.0 if math.isinf(region.u_upper) else math.exp(-region.u_upper / v)
        return arc * (math.exp(-region.u_lower / v) - upper_tail)

    r_lower, r_upper = math.sqrt(region.u_lower), math.sqrt(region.u_upper)
    value, error = integrate.quad(
        _radial_integral, region.theta_lower, region.theta_upper,
        args=(r_lower, r_upper, mean, v), **QUAD_OPTIONS,
    )
    if error > 1e-9:
        logger.warning(f"Region integral for x={x}, {region} has error estimate {error:.2e}")
    return float(min(max(value, 0.0), 1.0))


def analytic_sector_probability(x: int, quadrant: int, channel: ChannelParams, alpha: float) -> float:
    """Full-radius sector probability from the angular erf form.

    (1/2π) ∫ e^{-φ²} [1 + sqrt(π) φ f e^{φ² f²} (1 + erf(φ f))] dθ with
    φ = |μ_x| / sqrt(v) and f = cos(θ - arg μ_x), evaluated as
    e^{-φ²(1-f²)} erfc(-φ f) to stay finite.
    """
    if x not in (0, 1, 2, 3) or quadrant not in (0, 1, 2, 3):
        raise DomainError(f"symbol and quadrant must be 0..3, got {x}, {quadrant}")
    mean = symbol_mean(x, channel, alpha)
    phi = abs(mean) / math.sqrt(channel.variance)
    direction = float(np.angle(mean))

    def integrand(theta: float) -> float:
        f = math.cos(theta - direction)
        return (math.exp(-phi * phi)
                + math.sqrt(math.pi) * phi * f * math.exp(-phi * phi * (1.0 - f * f)) * special.erfc(-phi * f))

    value, _ = integrate.quad(integrand, quadrant * math.pi / 2.0, (quadrant + 1) * math.pi / 2.0, **QUAD_OPTIONS)
    return float(value / (2.0 * math.pi))


def _entropy_bits(probabilities: np.ndarray) -> float:
    return float(special.entr(probabilities).sum() / math.log(2.0))


def honest_statistics(params: ProtocolParams, channel: ChannelParams) -> HonestStatistics:
    """
    Score distribution and key-round table of the honest implementation.

    Probabilities of quadrant regions depend only on (z - x) mod 4, so they
    are integrated for x = 0 and rotated.
    """
    alpha = params.alpha
    band = [region_probability(0, PhaseSpaceRegion.quadrant(k, params.tau_min, params.tau_max), channel, alpha)
            for k in range(4)]
    if params.tau_min > 0:
        inner = [region_probability(0, PhaseSpaceRegion.quadrant(k, 0.0, params.tau_min), channel, alpha)
                 for k in range(4)]
    else:
        inner = [0.0] * 4
    top = region_probability(0, PhaseSpaceRegion(params.tau_max, math.inf), channel, alpha)

    raw = {Score.rotation(k): band[k] for k in range(4)}
    raw.update({Score.inner(k): inner[k] for k in range(4)})
    raw[Score.TOP] = top
    total = sum(raw.values())
    if abs(total - 1.0) > 1e-7:
        logger.warning(f"Honest test statistics sum to {total:.12f} before renormalisation")
    scores = ScoreDistribution({c: p / total for c, p in raw.items()})

    key = [region_probability(0, PhaseSpaceRegion.quadrant(k, params.tau_min_key), channel, alpha) for k in range(4)]
    discarded = region_probability(0, PhaseSpaceRegion(0.0, params.tau_min_key), channel, alpha)
    row = np.array([discarded] + key)
    row = row / row.sum()
    table = np.zeros((4, 5))
    for x in range(4):
        table[x, 0] = row[0] / 4.0
        for z in range(4):
            table[x, 1 + z] = row[1 + (z - x) % 4] / 4.0

    kept = table[:, 1:]
    pass_probability = float(kept.sum())
    conditional = kept / pass_probability
    joint_entropy = _entropy_bits(conditional.ravel())
    entropy_x_given_z = joint_entropy - _entropy_bits(conditional.sum(axis=0))
    entropy_z_given_x = joint_entropy - _entropy_bits(conditional.sum(axis=1))

    statistics = HonestStatistics(
        scores=scores,
        joint_key_table=table,
        pass_probability=pass_probability,
        entropy_x_given_z=entropy_x_given_z,
        entropy_z_given_x=entropy_z_given_x,
        channel=channel,
    )
    logger.debug(f"Honest statistics at eta={channel.transmittance:.4f}, chi={channel.excess_noise}: "
                 f"q_top={scores[Score.TOP]:.3e}, pass={pass_probability:.4f}, H(X|Z)={entropy_x_given_z:.4f}")
    return statistics


def leakage_per_round(honest: HonestStatistics, test_probability: float, mode: str = "direct") -> float:
    """Error-correction leakage per protocol round: (1-γ) Pr[pass] H(X|Z, pass), or H(Z|X, pass) when reverse."""
    if mode not in ("direct", "reverse"):
        raise DomainError(f"leakage mode must be 'direct' or 'reverse', got {mode!r}")
    entropy = honest.entropy_x_given_z if mode == "direct" else honest.entropy_z_given_x
    return (1.0 - test_probability) * honest.pass_probability * entropy


def statistics_frame(honest: HonestStatistics) -> pd.DataFrame:
    """Score label / probability table for CSV export."""
    return pd.DataFrame({
        "score": [c.value for c in TEST_SCORES],
        "probability": [honest.scores[c] for c in TEST_SCORES],
    })


@dataclass(frozen=True)
class RoundSample:
    x: int
    t: int
    y: complex
    z: object
    score: Score


@dataclass(frozen=True, eq=False)
class RoundBatch:
    """Vectorised rounds; ``key`` is the key-round quadrant, KEY_DISCARDED or NOT_KEY_ROUND."""
    x: np.ndarray
    t: np.ndarray
    y: np.ndarray
    key: np.ndarray
    score: np.ndarray

    def __len__(self) -> int:
        return int(self.x.size)


def _draw_outputs(x: np.ndarray, params: ProtocolParams, channel: ChannelParams,
                  rng: np.random.Generator) -> np.ndarray:
    means = math.sqrt(channel.transmittance) * params.alpha * np.exp(1j * (np.pi * x / 2.0 + np.pi / 4.0))
    noise = rng.standard_normal((2, x.size))
    return means + math.sqrt(channel.variance / 2.0) * (noise[0] + 1j * noise[1])


def sample_round(params: ProtocolParams, channel: ChannelParams, rng: np.random.Generator) -> RoundSample:
    """One protocol round: X uniform, T ~ Bernoulli(γ), Y from the channel, then Z and the score."""
    x = int(rng.integers(0, 4))
    t = int(rng.random() < params.test_probability)
    y = complex(_draw_outputs(np.array([x]), params, channel, rng)[0])
    if t == 1:
        z = discretize_test(y, params)
        return RoundSample(x=x, t=t, y=y, z=z, score=score(1, x, z))
    z = discretize_key(y, params)
    return RoundSample(x=x, t=t, y=y, z=z, score=score(0, None, z))


def sample_rounds(n: int, params: ProtocolParams, channel: ChannelParams,
                  rng: np.random.Generator) -> RoundBatch:
    """Vectorised sample_round for n rounds."""
    if n < 0:
        raise DomainError(f"number of rounds must be nonnegative, got {n}")
    x = rng.integers(0, 4, size=n)
    t = (rng.random(n) < params.test_probability).astype(np.int64)
    y = _draw_outputs(x, params, channel, rng)
    key = np.where(np.abs(y) ** 2 < params.tau_min_key, KEY_DISCARDED, quadrants_of(y))
    key = np.where(t == 1, NOT_KEY_ROUND, key)
    return RoundBatch(x=x, t=t, y=y, key=key, score=score_indices(t, x, y, params))


def empirical_score_frequencies(n: int, params: ProtocolParams, channel: ChannelParams,
                                rng: np.random.Generator, chunk_size: int = 1_000_000,
                                progress: bool = False) -> Dict[Score, float]:
    """Relative score frequencies over n sampled rounds, processed in chunks."""
    if n < 1:
        raise DomainError(f"need at least one round, got {n}")
    counts = np.zeros(len(ALL_SCORES), dtype=np.int64)
    chunks = range(0, n, chunk_size)
    for start in tqdm(chunks, desc="Sampling rounds", disable=not progress):
        batch = sample_rounds(min(chunk_size, n - start), params, channel, rng)
        counts += np.bincount(batch.score, minlength=len(ALL_SCORES))
    return {c: counts[i] / n for i, c in enumerate(ALL_SCORES)}


def stream(seed: Optional[int], index: int = 0) -> np.random.Generator:
    """Independent generator for worker ``index`` derived from a root seed."""
    children = np.random.SeedSequence(seed).spawn(index + 1)
    return np.random.default_rng(children[index])
