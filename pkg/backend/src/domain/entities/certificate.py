from dataclasses import dataclass, field, replace
from typing import Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from src.core.error_handlers import DomainError
from src.domain.entities.protocol import ALL_SCORES, TEST_SCORES, Score
from src.domain.entities.statistics import ScoreDistribution

Distribution = Union[ScoreDistribution, Sequence[float], np.ndarray]


def _as_vector(q: Distribution, order: Tuple[Score, ...]) -> np.ndarray:
    if isinstance(q, ScoreDistribution):
        if order == TEST_SCORES:
            return q.test_conditional().as_vector(order)
        if q.is_test_conditional:
            raise DomainError("a full score distribution (including ⊥) is required here")
        return q.as_vector(order)
    vector = np.asarray(q, dtype=float)
    if vector.shape != (len(order),):
        raise DomainError(f"expected a vector of length {len(order)}, got shape {vector.shape}")
    return vector


@dataclass(frozen=True, eq=False)
class AffineForm:
    """a + Σ_c b_c q_c over the test-conditional statistics q."""
    constant: float
    coefficients: np.ndarray = field(default_factory=lambda: np.zeros(len(TEST_SCORES)))

    def __post_init__(self) -> None:
        if np.shape(self.coefficients) != (len(TEST_SCORES),):
            raise DomainError(f"affine form needs {len(TEST_SCORES)} coefficients")
        if not (np.isfinite(self.constant) and np.all(np.isfinite(self.coefficients))):
            raise DomainError("affine form has non-finite entries")

    @classmethod
    def create(cls, constant: float = 0.0, **by_score: float) -> "AffineForm":
        """Build from keyword coefficients, e.g. AffineForm.create(0.1, top=2.0)."""
        coefficients = np.zeros(len(TEST_SCORES))
        for name, value in by_score.items():
            coefficients[TEST_SCORES.index(Score(name))] = value
        return cls(float(constant), coefficients)

    def __call__(self, q: Distribution) -> float:
        return float(self.constant + self.coefficients @ _as_vector(q, TEST_SCORES))

    def scaled(self, factor: float) -> "AffineForm":
        return AffineForm(factor * self.constant, factor * self.coefficients)

    def to_dict(self) -> Dict:
        return {"constant": self.constant, "coefficients": self.coefficients.tolist()}

    @classmethod
    def from_dict(cls, data: Mapping) -> "AffineForm":
        return cls(float(data["constant"]), np.asarray(data["coefficients"], dtype=float))


def multiplier_sign(name: str) -> float:
    """+1 if the constraint reads Tr[...] <= rhs in the Lagrangian, -1 for >= rows."""
    return -1.0 if name.startswith("lower:") else 1.0


@dataclass(frozen=True, eq=False)
class DualCertificate:
    """Dual point of the entropy SDP.

    ``multipliers`` and ``constraint_forms`` share keys: ``norm``, ``dist``,
    ``upper:<score>`` and ``lower:<score>``. ``blocks`` holds the matrix duals
    that are not fixed by stationarity (``S12``, ``Y11:i:z``, ``Y21:i:z``,
    ``W11:i:z``). The dual value at statistics q is

        φ - Σ_k sign_k λ_k rhs_k(q)

    where φ = λ_norm + Tr[(S12 + S12†) ρ_A] + t already contains every
    q-independent contribution.
    """
    multipliers: Dict[str, float]
    constraint_forms: Dict[str, AffineForm]
    phi: float
    slack_min: float
    blocks: Dict[str, np.ndarray]
    dual_value: float
    primal_value: Optional[float] = None
    solver: str = ""
    status: str = ""
    residuals: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if set(self.multipliers) != set(self.constraint_forms):
            raise DomainError("multipliers and constraint forms must share their keys")

    def value_at(self, q: Distribution) -> float:
        total = self.phi
        for name, lam in self.multipliers.items():
            total -= multiplier_sign(name) * lam * self.constraint_forms[name](q)
        return float(total)

    def as_affine(self) -> AffineForm:
        """The dual value as an affine function of q."""
        constant = self.phi
        coefficients = np.zeros(len(TEST_SCORES))
        for name, lam in self.multipliers.items():
            form = self.constraint_forms[name]
            sign = multiplier_sign(name)
            constant -= sign * lam * form.constant
            coefficients -= sign * lam * form.coefficients
        return AffineForm(float(constant), coefficients)

    @property
    def gap(self) -> Optional[float]:
        if self.primal_value is None:
            return None
        return self.primal_value - self.dual_value

    def with_updates(self, **changes) -> "DualCertificate":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class AffineScoreFunction:
    """Affine function of a score distribution: constant + Σ_c coefficient_c p_c.

    Used both for g (over the test scores) and for the min-tradeoff f (over
    every score including ⊥), together with the GEAT metadata.
    """
    constant: float
    coefficients: np.ndarray
    scores: Tuple[Score, ...] = TEST_SCORES
    max_value: Optional[float] = None
    min_value: Optional[float] = None
    min_sigma: Optional[float] = None
    variance: Optional[float] = None

    def __post_init__(self) -> None:
        if np.shape(self.coefficients) != (len(self.scores),):
            raise DomainError("one coefficient per score is required")
        if not (np.isfinite(self.constant) and np.all(np.isfinite(self.coefficients))):
            raise DomainError("affine score function has non-finite entries")

    def __call__(self, p: Distribution) -> float:
        return float(self.constant + self.coefficients @ _as_vector(p, self.scores))

    def coefficient(self, score: Score) -> float:
        return float(self.coefficients[self.scores.index(score)])

    def vertex_value(self, score: Score) -> float:
        """Value at the point mass on ``score``."""
        return self.constant + self.coefficient(score)

    @property
    def is_min_tradeoff(self) -> bool:
        return self.scores == ALL_SCORES

    def to_dict(self) -> Dict:
        return {
            "constant": self.constant,
            "coefficients": {c.value: float(v) for c, v in zip(self.scores, self.coefficients)},
            "max": self.max_value,
            "min": self.min_value,
            "min_sigma": self.min_sigma,
            "var": self.variance,
        }
