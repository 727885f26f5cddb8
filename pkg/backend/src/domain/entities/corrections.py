import math
from dataclasses import dataclass

from src.core.error_handlers import DomainError

DELTA_PEAK_WEIGHT = 2.0 / 3.0
XI_L_PLATEAU_WEIGHT = (5.0 + math.sqrt(5.0)) / 10.0
XI_U_PLATEAU_WEIGHT = (5.0 - math.sqrt(5.0)) / 10.0


@dataclass(frozen=True)
class LinearisationPoints:
    """Tangent points for the continuity penalty (ν_c) and statistical corrections (ν_L, ν_U)."""
    nu_c: float
    nu_l: float
    nu_u: float

    def validate(self, kappa: float) -> None:
        if not 0.0 < kappa * self.nu_c < DELTA_PEAK_WEIGHT:
            raise DomainError(f"nu_c={self.nu_c} outside (0, 2/(3κ)) for κ={kappa:.6g}")
        if not 0.0 < kappa * self.nu_l <= XI_L_PLATEAU_WEIGHT:
            raise DomainError(f"nu_L={self.nu_l} outside (0, (5+√5)/(10κ)] for κ={kappa:.6g}")
        if not 0.0 < kappa * self.nu_u <= XI_U_PLATEAU_WEIGHT:
            raise DomainError(f"nu_U={self.nu_u} outside (0, (5-√5)/(10κ)] for κ={kappa:.6g}")


@dataclass(frozen=True)
class CorrectionSet:
    """Slopes and intercepts of every linearised dimension-reduction correction.

    g_corr(ν) = m_corr (ν - ν_c) + c_corr; ξ̂_L(ν) = m_L ν + c_L; ξ̂_U(ν) = m_U ν + c_U.
    The trace-distance tangent δ(κν) <= m_0 (ν - ν_c) + c_0 is reported alongside.
    """
    kappa: float
    points: LinearisationPoints
    m_corr: float
    c_corr: float
    m_0: float
    c_0: float
    m_l: float
    c_l: float
    m_u: float
    c_u: float
    continuity_penalty: bool = True
    constraint_corrections: bool = True

    def __post_init__(self) -> None:
        if self.c_corr < 0 or self.m_corr < 0:
            raise DomainError("continuity penalty tangent must have nonnegative slope and intercept")
        for name in ("m_corr", "c_corr", "m_0", "c_0", "m_l", "c_l", "m_u", "c_u"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"correction '{name}' is not finite")

    def penalty(self, q_top: float) -> float:
        return self.m_corr * (q_top - self.points.nu_c) + self.c_corr

    def xi_hat_lower(self, q_top: float) -> float:
        return self.m_l * q_top + self.c_l

    def xi_hat_upper(self, q_top: float) -> float:
        return self.m_u * q_top + self.c_u

    @property
    def relaxation_slope(self) -> float:
        """Coefficient of q_⊤ in the normalisation and marginal relaxations."""
        return self.kappa if self.constraint_corrections else 0.0
