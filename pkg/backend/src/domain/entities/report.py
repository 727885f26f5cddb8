import math
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, FrozenSet, List, Optional, Tuple

import numpy as np

from src.core.error_handlers import DomainError
from src.domain.entities.protocol import ALL_SCORES, Score

CSV_COLUMNS = (
    "loss_db", "N", "alpha", "beta", "nu_c", "nu_L", "nu_U", "chi_dual",
    "h", "V", "Kbeta", "leak_ec", "l_ev", "key_len", "rate", "status",
    "mode", "rate_raw", "eps_s", "eps_ea", "eps_sec", "entropy_bound", "error",
)

OPTIMISABLE = frozenset({"alpha", "beta", "nu_c", "nu_l", "nu_u", "chi_dual", "epsilons"})
MODES = ("asymptotic", "finite")


@dataclass(frozen=True, eq=False)
class AcceptanceSet:
    """Per-score frequency boxes [p(c) - ζ'_c, p(c) + ζ_c] over ALL_SCORES, intersected with the simplex."""
    lower: np.ndarray
    upper: np.ndarray
    honest: np.ndarray
    within_budget: bool = True

    def __post_init__(self) -> None:
        shape = (len(ALL_SCORES),)
        if self.lower.shape != shape or self.upper.shape != shape or self.honest.shape != shape:
            raise DomainError(f"acceptance bounds need shape {shape}")
        if np.any(self.lower < 0.0) or np.any(self.upper > 1.0) or np.any(self.lower > self.upper):
            raise DomainError("acceptance intervals must satisfy 0 <= lower <= upper <= 1")
        if not self.contains(self.honest):
            raise DomainError("honest distribution lies outside its own acceptance set")

    @classmethod
    def point(cls, honest: np.ndarray) -> "AcceptanceSet":
        """Degenerate set {p}, the asymptotic limit."""
        honest = np.asarray(honest, dtype=float)
        return cls(lower=honest.copy(), upper=honest.copy(), honest=honest)

    @classmethod
    def whole_simplex(cls, honest: np.ndarray) -> "AcceptanceSet":
        honest = np.asarray(honest, dtype=float)
        return cls(lower=np.zeros_like(honest), upper=np.ones_like(honest), honest=honest)

    def contains(self, frequencies: np.ndarray, tolerance: float = 1e-12) -> bool:
        frequencies = np.asarray(frequencies, dtype=float)
        return bool(np.all(frequencies >= self.lower - tolerance) and np.all(frequencies <= self.upper + tolerance))

    def interval(self, score: Score) -> Tuple[float, float]:
        index = ALL_SCORES.index(score)
        return float(self.lower[index]), float(self.upper[index])

    def to_dict(self) -> Dict:
        return {
            c.value: {"honest": float(p), "lower": float(lo), "upper": float(hi)}
            for c, p, lo, hi in zip(ALL_SCORES, self.honest, self.lower, self.upper)
        }


@dataclass(frozen=True)
class KeyRateReport:
    """Key length and the terms it was derived from.

    Finite-mode reports carry the GEAT terms; asymptotic reports leave them
    as None and use ``rate_raw`` = f(p) - leakage per round.
    """
    mode: str
    loss_db: float
    alpha: float
    chi_dual: float
    nu_c: float
    nu_l: float
    nu_u: float
    h: float
    leak_ec: float
    rate: float
    rate_raw: float
    status: str
    rounds: Optional[float] = None
    beta: Optional[float] = None
    v: Optional[float] = None
    k_beta: Optional[float] = None
    smoothing_term: Optional[float] = None
    geat_bound: Optional[float] = None
    l_ev: Optional[int] = None
    key_length: Optional[int] = None
    eps_s: Optional[float] = None
    eps_ea: Optional[float] = None
    eps_sec: Optional[float] = None
    entropy_bound: Optional[float] = None
    primal_value: Optional[float] = None
    g_corr: Optional[float] = None
    min_tradeoff: Dict = field(default_factory=dict)
    acceptance: Dict = field(default_factory=dict)
    error: str = ""
    run_id: str = ""

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise DomainError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.key_length is not None and self.key_length < 0:
            raise DomainError("key length cannot be negative")

    @classmethod
    def failed(cls, mode: str, loss_db: float, alpha: float, chi_dual: float,
               error: str, rounds: Optional[float] = None, run_id: str = "") -> "KeyRateReport":
        """Record for a point whose computation raised; rate fields are NaN, never 0."""
        nan = math.nan
        return cls(
            mode=mode, loss_db=loss_db, alpha=alpha, chi_dual=chi_dual,
            nu_c=nan, nu_l=nan, nu_u=nan, h=nan, leak_ec=nan, rate=nan, rate_raw=nan,
            status="failed", rounds=rounds, error=error, run_id=run_id,
        )

    @property
    def is_positive(self) -> bool:
        return self.status == "positive"

    def with_updates(self, **changes) -> "KeyRateReport":
        return replace(self, **changes)

    def to_dict(self) -> Dict:
        return asdict(self)

    def csv_row(self) -> Dict:
        row = {
            "loss_db": self.loss_db,
            "N": self.rounds,
            "alpha": self.alpha,
            "beta": self.beta,
            "nu_c": self.nu_c,
            "nu_L": self.nu_l,
            "nu_U": self.nu_u,
            "chi_dual": self.chi_dual,
            "h": self.h,
            "V": self.v,
            "Kbeta": self.k_beta,
            "leak_ec": self.leak_ec,
            "l_ev": self.l_ev,
            "key_len": self.key_length,
            "rate": self.rate,
            "status": self.status,
            "mode": self.mode,
            "rate_raw": self.rate_raw,
            "eps_s": self.eps_s,
            "eps_ea": self.eps_ea,
            "eps_sec": self.eps_sec,
            "entropy_bound": self.entropy_bound,
            "error": self.error,
        }
        return {column: row[column] for column in CSV_COLUMNS}


@dataclass(frozen=True)
class SweepSpec:
    """Grid of (loss dB, N) points plus per-point optimisation and ablation switches."""
    losses_db: Tuple[float, ...]
    rounds: Tuple[float, ...] = (1e14,)
    mode: str = "finite"
    optimise: FrozenSet[str] = frozenset({"beta", "epsilons"})
    continuity_penalty: bool = True
    constraint_corrections: bool = True

    def __post_init__(self) -> None:
        if not self.losses_db:
            raise DomainError("sweep needs at least one loss value")
        if any(loss < 0 for loss in self.losses_db):
            raise DomainError("losses must be nonnegative dB values")
        if self.mode not in MODES:
            raise DomainError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "finite" and (not self.rounds or any(n < 1 for n in self.rounds)):
            raise DomainError("finite sweeps need at least one N >= 1")
        unknown = set(self.optimise) - OPTIMISABLE
        if unknown:
            raise DomainError(f"unknown optimisation variables {sorted(unknown)}")

    def points(self) -> List[Tuple[float, Optional[float]]]:
        """(loss_db, N) in grid order; N is None in asymptotic mode."""
        if self.mode == "asymptotic":
            return [(loss, None) for loss in self.losses_db]
        return [(loss, n) for loss in self.losses_db for n in self.rounds]

    def to_dict(self) -> Dict:
        return {
            "losses_db": list(self.losses_db),
            "rounds": list(self.rounds),
            "mode": self.mode,
            "optimise": sorted(self.optimise),
            "continuity_penalty": self.continuity_penalty,
            "constraint_corrections": self.constraint_corrections,
        }
