import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional

import numpy as np

from src.core.error_handlers import DomainError
from src.domain.entities.protocol import ALL_SCORES, TEST_SCORES, Score


@dataclass(frozen=True)
class ChannelParams:
    """Honest channel: transmittance, excess noise and the trial noise for the dual."""
    transmittance: float = 1.0
    excess_noise: float = 0.0
    dual_excess_noise: Optional[float] = None

    def __post_init__(self) -> None:
        if not 0.0 < self.transmittance <= 1.0:
            raise DomainError(f"transmittance must lie in (0, 1], got {self.transmittance}")
        if self.excess_noise < 0.0:
            raise DomainError(f"excess_noise must be nonnegative, got {self.excess_noise}")
        if self.dual_excess_noise is not None and self.dual_excess_noise < 0.0:
            raise DomainError(f"dual_excess_noise must be nonnegative, got {self.dual_excess_noise}")

    @classmethod
    def from_loss_db(cls, loss_db: float, excess_noise: float = 0.0,
                     dual_excess_noise: Optional[float] = None) -> "ChannelParams":
        if loss_db < 0:
            raise DomainError(f"loss_db must be nonnegative, got {loss_db}")
        return cls(
            transmittance=10.0 ** (-loss_db / 10.0),
            excess_noise=excess_noise,
            dual_excess_noise=dual_excess_noise,
        )

    @property
    def noise_for_dual(self) -> float:
        return self.excess_noise if self.dual_excess_noise is None else self.dual_excess_noise

    @property
    def variance(self) -> float:
        """Per-mode variance denominator 1 + ηχ/2 of the heterodyne density."""
        return 1.0 + self.transmittance * self.excess_noise / 2.0

    def dual_channel(self) -> "ChannelParams":
        """Same loss with the trial noise used to generate the dual statistics."""
        return ChannelParams(transmittance=self.transmittance, excess_noise=self.noise_for_dual)

    @property
    def loss_db(self) -> float:
        return -10.0 * math.log10(self.transmittance)


@dataclass(frozen=True)
class PhaseSpaceRegion:
    """Intensity interval [u_lower, u_upper] (W = |Y|^2) times the arc [theta_lower, theta_upper]."""
    u_lower: float
    u_upper: float
    theta_lower: float = 0.0
    theta_upper: float = 2.0 * math.pi

    def __post_init__(self) -> None:
        if not 0.0 <= self.u_lower < self.u_upper:
            raise DomainError(f"empty intensity interval [{self.u_lower}, {self.u_upper}]")
        if not self.theta_lower < self.theta_upper <= self.theta_lower + 2.0 * math.pi + 1e-12:
            raise DomainError(f"invalid arc [{self.theta_lower}, {self.theta_upper}]")

    @classmethod
    def quadrant(cls, z: int, u_lower: float, u_upper: float = math.inf) -> "PhaseSpaceRegion":
        return cls(u_lower, u_upper, (z % 4) * math.pi / 2.0, (z % 4 + 1) * math.pi / 2.0)

    @property
    def is_full_circle(self) -> bool:
        return self.theta_upper - self.theta_lower >= 2.0 * math.pi - 1e-12


@dataclass(frozen=True)
class ScoreDistribution:
    """Probability vector over scores.

    ``probabilities`` is either test-conditional (keys TEST_SCORES) or full
    (keys ALL_SCORES, including ⊥).
    """
    probabilities: Mapping[Score, float]

    def __post_init__(self) -> None:
        keys = set(self.probabilities)
        if keys != set(TEST_SCORES) and keys != set(ALL_SCORES):
            raise DomainError(f"Score distribution has unexpected support {sorted(k.value for k in keys)}")
        values = np.array(list(self.probabilities.values()), dtype=float)
        if np.any(values < -1e-12) or not np.all(np.isfinite(values)):
            raise DomainError("Score probabilities must be finite and nonnegative")
        if abs(values.sum() - 1.0) > 1e-8:
            raise DomainError(f"Score probabilities sum to {values.sum():.12f}, not 1")

    @property
    def is_test_conditional(self) -> bool:
        return Score.BOTTOM not in self.probabilities

    def __getitem__(self, score: Score) -> float:
        return float(self.probabilities[score])

    def as_vector(self, order=TEST_SCORES) -> np.ndarray:
        return np.array([self.probabilities.get(c, 0.0) for c in order], dtype=float)

    def with_bottom(self, test_probability: float) -> "ScoreDistribution":
        """Full distribution p with p(⊥) = 1 - γ and p(c) = γ q(c)."""
        if not self.is_test_conditional:
            return self
        full = {c: test_probability * self.probabilities[c] for c in TEST_SCORES}
        full[Score.BOTTOM] = 1.0 - test_probability
        return ScoreDistribution(full)

    def test_conditional(self) -> "ScoreDistribution":
        if self.is_test_conditional:
            return self
        weight = 1.0 - self.probabilities[Score.BOTTOM]
        if weight <= 0:
            raise DomainError("Distribution has no test-round mass")
        return ScoreDistribution({c: self.probabilities[c] / weight for c in TEST_SCORES})

    @classmethod
    def from_vector(cls, values, order=TEST_SCORES) -> "ScoreDistribution":
        return cls({c: float(v) for c, v in zip(order, values)})


KEY_SYMBOLS = (None, 0, 1, 2, 3)


@dataclass(frozen=True, eq=False)
class HonestStatistics:
    """Statistics of the honest implementation at a channel point."""
    scores: ScoreDistribution
    joint_key_table: np.ndarray  # Pr[X = x, Z = z | T = 0], shape (4, 5), columns ∅,0,1,2,3
    pass_probability: float
    entropy_x_given_z: float
    entropy_z_given_x: float
    channel: ChannelParams = field(default_factory=ChannelParams)

    def __post_init__(self) -> None:
        if self.joint_key_table.shape != (4, len(KEY_SYMBOLS)):
            raise DomainError(f"joint key table must have shape (4, 5), got {self.joint_key_table.shape}")
        if np.any(self.joint_key_table < -1e-12):
            raise DomainError("joint key table has negative entries")
        if abs(self.joint_key_table.sum() - 1.0) > 1e-8:
            raise DomainError(f"joint key table sums to {self.joint_key_table.sum():.12f}")

    def to_dict(self) -> Dict:
        return {
            "scores": {c.value: self.scores[c] for c in TEST_SCORES},
            "joint_key_table": self.joint_key_table.tolist(),
            "pass_probability": self.pass_probability,
            "entropy_x_given_z": self.entropy_x_given_z,
            "entropy_z_given_x": self.entropy_z_given_x,
            "transmittance": self.channel.transmittance,
            "excess_noise": self.channel.excess_noise,
        }
