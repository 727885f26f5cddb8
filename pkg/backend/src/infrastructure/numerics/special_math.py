"""Scalar special functions and the Gauss-Radau rule shared by every other module.

All functions are pure and safe to call from concurrent sweep workers.
"""
import logging
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import linalg, special

from src.core.error_handlers import DomainError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Radau rule on [0, 1] with the last node fixed at t = 1."""
    nodes: Tuple[float, ...]
    weights: Tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.nodes) != len(self.weights) or not self.nodes:
            raise DomainError("Quadrature rule needs matching, non-empty nodes and weights")
        if self.nodes[-1] != 1.0:
            raise DomainError(f"Last quadrature node must be exactly 1, got {self.nodes[-1]!r}")
        if any(b <= a for a, b in zip(self.nodes, self.nodes[1:])) or self.nodes[0] <= 0.0:
            raise DomainError("Quadrature nodes must be strictly increasing in (0, 1]")
        if any(w <= 0.0 for w in self.weights):
            raise DomainError("Quadrature weights must be positive")

    @property
    def order(self) -> int:
        return len(self.nodes)

    def integrate(self, func) -> float:
        return float(sum(w * func(t) for t, w in zip(self.nodes, self.weights)))


def upper_incomplete_gamma(a: float, x: float) -> float:
    """Γ(a, x) = ∫_x^∞ t^(a-1) e^(-t) dt.

    scipy's ``gammaincc`` switches between the power series (small x) and the
    Legendre continued fraction (x > a + 1), which keeps the relative accuracy
    uniform over the half-integer orders used by the POVM radial integrals.
    """
    if a <= 0:
        raise DomainError(f"upper_incomplete_gamma requires a > 0, got a={a}")
    if x < 0:
        raise DomainError(f"upper_incomplete_gamma requires x >= 0, got x={x}")
    if x == 0:
        return float(special.gamma(a))
    q = special.gammaincc(a, x)
    if q == 0.0:
        return 0.0
    return float(math.exp(math.log(q) + special.gammaln(a)))


def regularized_upper_gamma(a: float, x: float) -> float:
    """Q(a, x) = Γ(a, x) / Γ(a); never overflows."""
    if a <= 0:
        raise DomainError(f"regularized_upper_gamma requires a > 0, got a={a}")
    if x < 0:
        raise DomainError(f"regularized_upper_gamma requires x >= 0, got x={x}")
    if math.isinf(x):
        return 0.0
    return float(special.gammaincc(a, x))


def binary_entropy(x: float) -> float:
    """h2(x) = -x log2 x - (1-x) log2 (1-x), with h2(0) = h2(1) = 0."""
    if x < 0.0 or x > 1.0:
        raise DomainError(f"binary_entropy requires x in [0, 1], got {x}")
    return float(special.entr(x) + special.entr(1.0 - x)) / math.log(2.0)


def normal_cdf(a: float) -> float:
    """Standard normal CDF Φ(a)."""
    return float(special.ndtr(a))


def relative_entropy_binary(q: float, p: float) -> float:
    """D(q || p) between Bernoulli distributions, natural log, 0 ln 0 = 0."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"relative_entropy_binary requires p in (0, 1), got {p}")
    if q < 0.0 or q > 1.0:
        raise DomainError(f"relative_entropy_binary requires q in [0, 1], got {q}")
    return float(special.rel_entr(q, p) + special.rel_entr(1.0 - q, 1.0 - p))


def binomial_bound_F(n: int, p: float, k: int) -> float:
    """Zubkov-Serov bound F(n, p, k) = Φ(sign(k/n - p) sqrt(2n D(k/n, p))).

    Satisfies F(n, p, k) <= Pr[Bin(n, p) <= k] <= F(n, p, k + 1).
    """
    if not 0.0 < p < 1.0:
        raise DomainError(f"binomial_bound_F requires p in (0, 1), got {p}")
    if n < 1:
        raise DomainError(f"binomial_bound_F requires n >= 1, got {n}")
    if k < 0 or k > n:
        raise DomainError(f"binomial_bound_F requires 0 <= k <= n, got k={k}, n={n}")
    q = k / n
    divergence = max(relative_entropy_binary(q, p), 0.0)
    return normal_cdf(math.copysign(math.sqrt(2.0 * n * divergence), q - p))


def gauss_radau(m: int) -> QuadratureRule:
    """Gauss-Radau rule of order m on [0, 1] with fixed node t = 1.

    Built from the Jacobi matrix of the Legendre polynomials on [-1, 1]; the
    last diagonal entry is modified so that 1 becomes an eigenvalue (Golub),
    then nodes and weights are mapped to [0, 1].
    """
    if m < 1:
        raise DomainError(f"gauss_radau requires m >= 1, got {m}")
    if m == 1:
        return QuadratureRule(nodes=(1.0,), weights=(1.0,))

    k = np.arange(1, m, dtype=float)
    off_diagonal = k / np.sqrt(4.0 * k * k - 1.0)
    diagonal = np.zeros(m)

    # (J_{m-1} - I) d = b_{m-1}^2 e_{m-1}, then alpha_m = 1 + d_{m-1}
    rhs = np.zeros(m - 1)
    rhs[-1] = off_diagonal[-1] ** 2
    shifted = np.zeros((3, m - 1))
    shifted[0, 1:] = off_diagonal[:-1]
    shifted[1, :] = diagonal[:-1] - 1.0
    shifted[2, :-1] = off_diagonal[:-1]
    d = linalg.solve_banded((1, 1), shifted, rhs)
    diagonal[-1] = 1.0 + d[-1]

    eigenvalues, eigenvectors = linalg.eigh_tridiagonal(diagonal, off_diagonal)
    weights = eigenvectors[0, :] ** 2  # mu_0 = 2 on [-1, 1], halved on [0, 1]
    nodes = (eigenvalues + 1.0) / 2.0

    order = np.argsort(nodes)
    nodes = nodes[order]
    weights = weights[order]
    nodes[-1] = 1.0
    weights = weights / weights.sum()

    logger.debug(f"Gauss-Radau m={m}: nodes={nodes}, weights={weights}")
    return QuadratureRule(nodes=tuple(float(t) for t in nodes), weights=tuple(float(w) for w in weights))
