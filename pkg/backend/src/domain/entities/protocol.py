from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Optional, Tuple

import numpy as np

from src.core.error_handlers import DomainError


class Score(str, Enum):
    """Per-round public statistic of the QPSK protocol."""
    BOTTOM = "bottom"
    TOP = "top"
    ROT_0 = "0"
    ROT_1 = "1"
    ROT_2 = "2"
    ROT_3 = "3"
    INNER_0 = "inner0"
    INNER_1 = "inner1"
    INNER_2 = "inner2"
    INNER_3 = "inner3"

    @classmethod
    def rotation(cls, k: int) -> "Score":
        return cls(str(k % 4))

    @classmethod
    def inner(cls, k: int) -> "Score":
        return cls(f"inner{k % 4}")

    @property
    def is_rotation(self) -> bool:
        return self.value in ("0", "1", "2", "3")

    @property
    def is_inner(self) -> bool:
        return self.value.startswith("inner")

    @property
    def offset(self) -> Optional[int]:
        """Rotation class k = (z - x) mod 4 for band and inner scores."""
        if self.is_rotation:
            return int(self.value)
        if self.is_inner:
            return int(self.value[-1])
        return None


TEST_SCORES: Tuple[Score, ...] = (
    Score.ROT_0, Score.ROT_1, Score.ROT_2, Score.ROT_3,
    Score.INNER_0, Score.INNER_1, Score.INNER_2, Score.INNER_3,
    Score.TOP,
)
ALL_SCORES: Tuple[Score, ...] = TEST_SCORES + (Score.BOTTOM,)


@dataclass(frozen=True)
class RegionOutcome:
    """Discretised test-round outcome: inner (∅, z), band z, or ⊤."""
    region: str
    quadrant: Optional[int] = None

    def __post_init__(self) -> None:
        if self.region not in ("inner", "band", "top"):
            raise DomainError(f"Unknown test region '{self.region}'")
        if (self.region == "top") != (self.quadrant is None):
            raise DomainError("Only the ⊤ outcome carries no quadrant")


@dataclass(frozen=True)
class EpsilonBudget:
    correctness: float = 1e-15
    secrecy: float = 1e-6
    smoothing: float = 1e-6 / 8
    accumulation: float = 1e-6 / 2
    completeness_pe: float = 1e-10
    completeness_ec: float = 0.0

    def __post_init__(self) -> None:
        for name in ("correctness", "secrecy", "smoothing", "accumulation", "completeness_pe"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise DomainError(f"epsilon '{name}' must lie in (0, 1), got {value}")
        if not 0.0 <= self.completeness_ec < 1.0:
            raise DomainError(f"epsilon 'completeness_ec' must lie in [0, 1), got {self.completeness_ec}")
        if self.accumulation > self.secrecy:
            raise DomainError("epsilon_EA must not exceed epsilon_sec")
        if 2.0 * self.smoothing >= self.secrecy:
            raise DomainError("2 * epsilon_s must be smaller than epsilon_sec")

    @classmethod
    def create(cls, secrecy: float = 1e-6, correctness: float = 1e-15,
               completeness_pe: float = 1e-10, completeness_ec: float = 0.0,
               smoothing: Optional[float] = None, accumulation: Optional[float] = None) -> "EpsilonBudget":
        """Factory applying the default split ε_EA = ε_sec/2, ε_s = ε_sec/8."""
        return cls(
            correctness=correctness,
            secrecy=secrecy,
            smoothing=smoothing if smoothing is not None else secrecy / 8,
            accumulation=accumulation if accumulation is not None else secrecy / 2,
            completeness_pe=completeness_pe,
            completeness_ec=completeness_ec,
        )


@dataclass(frozen=True)
class ProtocolParams:
    """Protocol and proof parameters. Thresholds are intensities W = |Y|^2."""
    rounds: float = 1e14
    alpha: float = 0.75
    test_probability: float = 0.01
    tau_min_key: float = 0.6
    tau_min: float = 1.5
    tau_max: float = 20.0
    n_max: int = 12
    quadrature_order: int = 4
    d_z: int = 5
    epsilons: EpsilonBudget = field(default_factory=EpsilonBudget)

    def __post_init__(self) -> None:
        if self.rounds < 1:
            raise DomainError(f"rounds must be >= 1, got {self.rounds}")
        if self.alpha < 0:
            raise DomainError(f"alpha must be nonnegative, got {self.alpha}")
        if not 0.0 < self.test_probability < 1.0:
            raise DomainError(f"test_probability must lie in (0, 1), got {self.test_probability}")
        if self.tau_min_key <= 0:
            raise DomainError(f"tau_min_key must be positive, got {self.tau_min_key}")
        if not 0.0 <= self.tau_min < self.tau_max:
            raise DomainError(f"need 0 <= tau_min < tau_max, got {self.tau_min}, {self.tau_max}")
        if self.n_max < 1:
            raise DomainError(f"n_max must be >= 1, got {self.n_max}")
        if self.quadrature_order < 1:
            raise DomainError(f"quadrature_order must be >= 1, got {self.quadrature_order}")
        if self.d_z < 1:
            raise DomainError(f"d_z must be >= 1, got {self.d_z}")

    @property
    def fock_dimension(self) -> int:
        return self.n_max + 1

    @property
    def dimension(self) -> int:
        return 4 * self.fock_dimension

    def with_updates(self, **changes) -> "ProtocolParams":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class TruncatedOperators:
    """Finite-dimensional operator family entering the entropy SDP.

    Ordering of the joint space is A ⊗ B with index a * (n_max + 1) + n.
    """
    n_max: int
    test_povms: Dict[Score, np.ndarray]
    key_povms: Dict[int, np.ndarray]
    no_click_povm: np.ndarray
    post_selection: np.ndarray
    alice_marginal: np.ndarray
    kappa: float

    @property
    def fock_dimension(self) -> int:
        return self.n_max + 1

    @property
    def dimension(self) -> int:
        return 4 * self.fock_dimension

    def key_projector(self, z: int) -> np.ndarray:
        """1_A ⊗ P_{z|0} on the joint space."""
        return np.kron(np.eye(4), self.key_povms[z])
