"""Conditional-entropy SDP over the truncated state, its explicit dual and certificate checks.

The primal minimises the Gauss-Radau objective over σ (the truncated ρ_AB),
the moment blocks (ω, η, θ) of every (node, key symbol) pair and the
trace-distance pair (ζ1, ζ2). The dual is written out explicitly: its
variables are exactly the certificate entries, so no solver-specific dual
conventions leak into the certified bound.
"""
import logging
import math
import uuid
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Tuple

import cvxpy as cp
import numpy as np

from src.core.app_settings import settings
from src.core.error_handlers import (
    CertificateRejectedError,
    DomainError,
    InfeasibleProblemError,
    SolverError,
)
from src.domain.entities.certificate import AffineForm, DualCertificate, multiplier_sign
from src.domain.entities.corrections import CorrectionSet
from src.domain.entities.protocol import TEST_SCORES, Score, TruncatedOperators
from src.domain.entities.statistics import ScoreDistribution
from src.infrastructure.numerics.special_math import QuadratureRule

logger = logging.getLogger(__name__)

LN2 = math.log(2.0)
KEY_SYMBOLS = (0, 1, 2, 3)
NEGATIVE_MULTIPLIER_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class EntropySdpProblem:
    """Data of one entropy SDP instance.

    ``constraint_forms`` holds the right-hand side of every scalar constraint
    as an affine function of the test statistics q; ``statistics`` is the q
    the instance was built for.
    """
    operators: TruncatedOperators
    rule: QuadratureRule
    statistics: ScoreDistribution
    corrections: CorrectionSet
    test_probability: float
    constraint_forms: Dict[str, AffineForm]
    row_scales: Dict[Score, float]

    @property
    def dimension(self) -> int:
        return self.operators.dimension

    @property
    def objective_weights(self) -> Tuple[float, ...]:
        """(1 - γ) w_i / (t_i ln 2) for every quadrature node."""
        return tuple(
            (1.0 - self.test_probability) * w / (t * LN2)
            for t, w in zip(self.rule.nodes, self.rule.weights)
        )

    def blocks(self) -> Iterator[Tuple[int, int, float, float]]:
        """(node index, key symbol, t_i, objective weight) for every moment block."""
        for i, (t, b) in enumerate(zip(self.rule.nodes, self.objective_weights)):
            for z in KEY_SYMBOLS:
                yield i, z, t, b

    def rhs(self, name: str) -> float:
        return self.constraint_forms[name](self.statistics)

    def constraint_count(self) -> Dict[str, int]:
        return {
            "scalar": 3 + 2 * len(TEST_SCORES),
            "psd": 2 * self.rule.order * len(KEY_SYMBOLS) + 1,
        }


def _statistical_forms(score: Score, corrections: CorrectionSet) -> Tuple[AffineForm, AffineForm]:
    """Unclamped q_c - ξ̂_U(q_⊤) and q_c - ξ̂_L(q_⊤) as affine forms."""
    unit = np.zeros(len(TEST_SCORES))
    unit[TEST_SCORES.index(score)] = 1.0
    top = np.zeros(len(TEST_SCORES))
    top[TEST_SCORES.index(Score.TOP)] = 1.0
    upper = AffineForm(-corrections.c_u, unit - corrections.m_u * top)
    lower = AffineForm(-corrections.c_l, unit - corrections.m_l * top)
    return upper, lower


def build_problem(operators: TruncatedOperators, rule: QuadratureRule, q: ScoreDistribution,
                  corrections: CorrectionSet, test_probability: float) -> EntropySdpProblem:
    """
    Assemble the entropy SDP for statistics q.

    Args:
        operators: Truncated operator family
        rule: Gauss-Radau rule (nodes in (0, 1], last node 1)
        q: Test-conditional score distribution used for the constraints
        corrections: Linearised dimension-reduction corrections
        test_probability: γ

    Returns:
        EntropySdpProblem
    """
    if not 0.0 < test_probability <= 1.0:
        raise DomainError(f"test_probability must lie in (0, 1], got {test_probability}")
    d = operators.dimension
    for score, matrix in operators.test_povms.items():
        if matrix.shape != (d, d):
            raise DomainError(f"test POVM {score.value} has shape {matrix.shape}, expected {(d, d)}")
    for z, matrix in operators.key_povms.items():
        if matrix.shape != (operators.fock_dimension,) * 2:
            raise DomainError(f"key POVM {z} has shape {matrix.shape}")
    if operators.alice_marginal.shape != (4, 4):
        raise DomainError("Alice's marginal must be 4x4")
    if not math.isclose(operators.kappa, corrections.kappa, rel_tol=1e-10):
        raise DomainError(f"corrections built for κ={corrections.kappa}, operators have κ={operators.kappa}")

    q = q.test_conditional()
    relaxation = AffineForm.create(0.0, top=corrections.relaxation_slope)
    forms: Dict[str, AffineForm] = {"norm": relaxation, "dist": relaxation}
    for score in TEST_SCORES:
        upper, lower = _statistical_forms(score, corrections)
        if upper(q) > 1.0:
            upper = AffineForm(1.0)
        if lower(q) < 0.0:
            lower = AffineForm(0.0)
        forms[f"upper:{score.value}"] = upper
        forms[f"lower:{score.value}"] = lower

        upper_value, lower_value = upper(q), lower(q)
        if upper_value < 0.0:
            raise InfeasibleProblemError(f"upper:{score.value}", f"upper bound {upper_value:.3e} is negative")
        if lower_value > 1.0:
            raise InfeasibleProblemError(f"lower:{score.value}", f"lower bound {lower_value:.3e} exceeds 1")
        if lower_value > upper_value + 1e-12:
            raise InfeasibleProblemError(
                f"statistics:{score.value}",
                f"lower bound {lower_value:.6e} exceeds upper bound {upper_value:.6e}",
            )

    row_scales = {
        score: 1.0 / max(float(np.linalg.eigvalsh(operators.test_povms[score]).max()), 1e-300)
        for score in TEST_SCORES
    }
    problem = EntropySdpProblem(
        operators=operators,
        rule=rule,
        statistics=q,
        corrections=corrections,
        test_probability=test_probability,
        constraint_forms=forms,
        row_scales=row_scales,
    )
    logger.debug(f"Built entropy SDP: dimension={d}, nodes={rule.order}, counts={problem.constraint_count()}")
    return problem


def _embed_alice(matrix, fock_dimension: int):
    """M ⊗ 1_B for a 4x4 cvxpy expression, with A as the outer index."""
    identity = np.eye(fock_dimension)
    terms = []
    for a in range(4):
        for b in range(4):
            unit = np.zeros((4, 4))
            unit[a, b] = 1.0
            terms.append(matrix[a, b] * np.kron(unit, identity))
    return sum(terms[1:], terms[0])


class ConicBackend(ABC):
    """Solves an EntropySdpProblem and returns its dual certificate."""

    name: str = "abstract"

    @abstractmethod
    def solve(self, problem: EntropySdpProblem) -> DualCertificate:
        pass


class CvxpyBackend(ConicBackend):
    """cvxpy modelling layer in front of any installed conic solver (SCS by default)."""

    def __init__(self, solver: Optional[str] = None, eps: Optional[float] = None,
                 max_iters: Optional[int] = None, compute_primal: Optional[bool] = None):
        self.solver = (solver or settings.SOLVER).upper()
        self.eps = eps if eps is not None else settings.SOLVER_EPS
        self.max_iters = max_iters if max_iters is not None else settings.SOLVER_MAX_ITERS
        self.compute_primal = settings.SOLVE_PRIMAL if compute_primal is None else compute_primal
        self.name = f"cvxpy/{self.solver}"

    def _options(self) -> Dict:
        if self.solver == "SCS":
            return {"eps_abs": self.eps, "eps_rel": self.eps, "max_iters": self.max_iters}
        if self.solver == "CLARABEL":
            return {"tol_gap_abs": self.eps, "tol_gap_rel": self.eps, "tol_feas": self.eps,
                    "max_iter": self.max_iters}
        return {}

    def _run(self, program: cp.Problem, role: str, run_id: str) -> str:
        try:
            program.solve(solver=self.solver, **self._options())
        except cp.error.SolverError as e:
            raise SolverError(self.solver, None, f"{role} program: {e}") from e
        status = program.status
        logger.info(f"[{run_id}] {role} program finished with status '{status}' (value={program.value})")
        if status == cp.OPTIMAL_INACCURATE:
            logger.warning(f"[{run_id}] {role} program solved inaccurately; the certificate check decides")
        return status

    def _dual_program(self, problem: EntropySdpProblem):
        ops = problem.operators
        d, n_b = ops.dimension, ops.fock_dimension
        post_selection = ops.post_selection
        weights = problem.objective_weights

        lam_norm = cp.Variable(nonneg=True, name="lambda_norm")
        lam_dist = cp.Variable(nonneg=True, name="lambda_dist")
        mu_upper = {c: cp.Variable(nonneg=True, name=f"mu_upper_{c.value}") for c in TEST_SCORES}
        mu_lower = {c: cp.Variable(nonneg=True, name=f"mu_lower_{c.value}") for c in TEST_SCORES}
        slack = cp.Variable(nonpos=True, name="t")
        s12 = cp.Variable((4, 4), complex=True, name="S12")

        constraints = [cp.bmat([[lam_dist * np.eye(4), s12], [s12.H, lam_dist * np.eye(4)]]) >> 0]
        coupling = s12 + s12.H
        stationary = -lam_norm * np.eye(d) - _embed_alice(coupling, n_b) + sum(weights) * post_selection
        for c in TEST_SCORES:
            stationary = stationary + (mu_upper[c] - mu_lower[c]) * (problem.row_scales[c] * ops.test_povms[c])

        blocks: Dict[str, cp.Variable] = {}
        for i, z, t, b in problem.blocks():
            key_projector = ops.key_projector(z)
            y11 = cp.Variable((d, d), hermitian=True, name=f"Y11_{i}_{z}")
            y21 = cp.Variable((d, d), complex=True, name=f"Y21_{i}_{z}")
            w11 = cp.Variable((d, d), hermitian=True, name=f"W11_{i}_{z}")
            w12 = b * key_projector - y21
            constraints.append(cp.bmat([[y11, y21.H], [y21, b * (1.0 - t) * key_projector]]) >> 0)
            constraints.append(cp.bmat([[w11, w12], [w12.H, b * t * post_selection]]) >> 0)
            stationary = stationary - y11 - w11
            blocks[f"Y11:{i}:{z}"] = y11
            blocks[f"Y21:{i}:{z}"] = y21
            blocks[f"W11:{i}:{z}"] = w11
        constraints.append(stationary - slack * np.eye(d) >> 0)

        objective = lam_norm * (1.0 - problem.rhs("norm")) - lam_dist * problem.rhs("dist") + slack
        objective = objective + cp.real(cp.trace(coupling @ ops.alice_marginal))
        for c in TEST_SCORES:
            scale = problem.row_scales[c]
            objective = objective - mu_upper[c] * scale * problem.rhs(f"upper:{c.value}")
            objective = objective + mu_lower[c] * scale * problem.rhs(f"lower:{c.value}")

        variables = {"norm": lam_norm, "dist": lam_dist, "t": slack, "S12": s12,
                     "upper": mu_upper, "lower": mu_lower, "blocks": blocks}
        return cp.Problem(cp.Maximize(objective), constraints), variables

    def _primal_program(self, problem: EntropySdpProblem) -> cp.Problem:
        ops = problem.operators
        d, n_b = ops.dimension, ops.fock_dimension
        post_selection = ops.post_selection
        weights = problem.objective_weights

        sigma = cp.Variable((d, d), hermitian=True, name="sigma")
        zeta1 = cp.Variable((4, 4), hermitian=True, name="zeta1")
        zeta2 = cp.Variable((4, 4), hermitian=True, name="zeta2")
        trace_sigma = cp.real(cp.trace(sigma))
        marginal_gap = cp.partial_trace(sigma, [4, n_b], axis=1) - ops.alice_marginal

        constraints = [
            trace_sigma <= 1.0,
            1.0 - trace_sigma <= problem.rhs("norm"),
            cp.real(cp.trace(zeta1 + zeta2)) <= problem.rhs("dist"),
            cp.bmat([[zeta1, marginal_gap], [marginal_gap, zeta2]]) >> 0,
        ]
        for c in TEST_SCORES:
            scale = problem.row_scales[c]
            row = scale * cp.real(cp.trace(sigma @ ops.test_povms[c]))
            constraints.append(row <= scale * problem.rhs(f"upper:{c.value}"))
            constraints.append(row >= scale * problem.rhs(f"lower:{c.value}"))

        objective = cp.real(cp.trace(sigma @ post_selection)) * sum(weights)
        for i, z, t, b in problem.blocks():
            key_projector = ops.key_projector(z)
            omega = cp.Variable((d, d), complex=True, name=f"omega_{i}_{z}")
            eta = cp.Variable((d, d), hermitian=True, name=f"eta_{i}_{z}")
            theta = cp.Variable((d, d), hermitian=True, name=f"theta_{i}_{z}")
            constraints.append(cp.bmat([[sigma, omega], [omega.H, eta]]) >> 0)
            constraints.append(cp.bmat([[sigma, omega.H], [omega, theta]]) >> 0)
            objective = objective + b * (
                2.0 * cp.real(cp.trace(key_projector @ omega))
                + (1.0 - t) * cp.real(cp.trace(key_projector @ eta))
                + t * cp.real(cp.trace(theta @ post_selection))
            )
        return cp.Problem(cp.Minimize(objective), constraints)

    def solve(self, problem: EntropySdpProblem) -> DualCertificate:
        run_id = uuid.uuid4().hex[:8]
        logger.info(f"[{run_id}] Solving entropy SDP with {self.name} (dimension={problem.dimension}, "
                    f"nodes={problem.rule.order})")

        dual, variables = self._dual_program(problem)
        status = self._run(dual, "dual", run_id)
        if status in (cp.UNBOUNDED, cp.UNBOUNDED_INACCURATE):
            raise InfeasibleProblemError("unknown", f"dual program unbounded ({status})")
        if status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
            raise SolverError(self.solver, status, "dual program")

        multipliers = {"norm": float(variables["norm"].value), "dist": float(variables["dist"].value)}
        for c in TEST_SCORES:
            multipliers[f"upper:{c.value}"] = float(variables["upper"][c].value) * problem.row_scales[c]
            multipliers[f"lower:{c.value}"] = float(variables["lower"][c].value) * problem.row_scales[c]
        s12 = np.asarray(variables["S12"].value, dtype=complex)
        blocks = {"S12": s12}
        blocks.update({name: np.asarray(v.value, dtype=complex) for name, v in variables["blocks"].items()})
        slack = float(variables["t"].value)
        coupling = s12 + s12.conj().T
        phi = multipliers["norm"] + float(np.real(np.trace(coupling @ problem.operators.alice_marginal))) + slack

        primal_value = None
        if self.compute_primal:
            primal = self._primal_program(problem)
            primal_status = self._run(primal, "primal", run_id)
            if primal_status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
                raise InfeasibleProblemError("unknown", f"primal program infeasible ({primal_status})")
            if primal_status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
                primal_value = float(primal.value)
            else:
                raise SolverError(self.solver, primal_status, "primal program")

        certificate = DualCertificate(
            multipliers=multipliers,
            constraint_forms=dict(problem.constraint_forms),
            phi=phi,
            slack_min=slack,
            blocks=blocks,
            dual_value=float(dual.value),
            primal_value=primal_value,
            solver=self.name,
            status=status,
        )
        residuals = {"dual_value_recomputed": certificate.value_at(problem.statistics) - certificate.dual_value}
        if primal_value is not None:
            residuals["gap"] = primal_value - certificate.dual_value
            if residuals["gap"] < -1e-6 * max(1.0, abs(primal_value)):
                logger.warning(f"[{run_id}] Weak duality violated numerically: gap={residuals['gap']:.3e}")
        logger.info(f"[{run_id}] Dual value {certificate.dual_value:.10f}, primal {primal_value}")
        return certificate.with_updates(residuals=residuals)


def default_backend() -> ConicBackend:
    return CvxpyBackend()


def solve(problem: EntropySdpProblem, backend: Optional[ConicBackend] = None) -> DualCertificate:
    return (backend or default_backend()).solve(problem)


def _check_psd(name: str, matrix: np.ndarray, tolerance: float) -> None:
    hermitian = 0.5 * (matrix + matrix.conj().T)
    eigenvalues = np.linalg.eigvalsh(hermitian)
    scale = max(1.0, float(np.abs(eigenvalues).max()))
    if eigenvalues.min() < -tolerance * scale:
        raise CertificateRejectedError(f"psd:{name}", float(eigenvalues.min()))


def dual_slack_matrix(problem: EntropySdpProblem, certificate: DualCertificate,
                      tolerance: Optional[float] = None) -> np.ndarray:
    """Coefficient R' of σ in the Lagrangian, checking every dual block on the way."""
    tolerance = settings.VERIFY_TOLERANCE if tolerance is None else tolerance
    ops = problem.operators
    d, n_b = ops.dimension, ops.fock_dimension
    lam = certificate.multipliers

    s12 = certificate.blocks["S12"]
    lam_dist = lam["dist"]
    _check_psd("S", np.block([[lam_dist * np.eye(4), s12], [s12.conj().T, lam_dist * np.eye(4)]]), tolerance)

    slack = sum(problem.objective_weights) * ops.post_selection - lam["norm"] * np.eye(d, dtype=complex)
    slack = slack - np.kron(s12 + s12.conj().T, np.eye(n_b))
    for c in TEST_SCORES:
        slack = slack + (lam[f"upper:{c.value}"] - lam[f"lower:{c.value}"]) * ops.test_povms[c]

    for i, z, t, b in problem.blocks():
        key_projector = ops.key_projector(z)
        y11 = certificate.blocks[f"Y11:{i}:{z}"]
        y21 = certificate.blocks[f"Y21:{i}:{z}"]
        w11 = certificate.blocks[f"W11:{i}:{z}"]
        w12 = b * key_projector - y21
        _check_psd(f"Y:{i}:{z}", np.block([[y11, y21.conj().T], [y21, b * (1.0 - t) * key_projector]]), tolerance)
        _check_psd(f"W:{i}:{z}", np.block([[w11, w12], [w12.conj().T, b * t * ops.post_selection]]), tolerance)
        slack = slack - y11 - w11
    return 0.5 * (slack + slack.conj().T)


def certify(problem: EntropySdpProblem, certificate: DualCertificate,
            tolerance: Optional[float] = None) -> DualCertificate:
    """
    Independently re-check a dual certificate against the problem data.

    Args:
        problem: The problem the certificate claims to solve
        certificate: Dual point to check
        tolerance: Relative PSD and φ tolerance (default KEYRATE_VERIFY_TOLERANCE)

    Returns:
        The certificate with φ, t and the dual value replaced by recomputed values

    Raises:
        CertificateRejectedError: If any dual feasibility check fails
    """
    tolerance = settings.VERIFY_TOLERANCE if tolerance is None else tolerance
    for name, value in certificate.multipliers.items():
        if value < -NEGATIVE_MULTIPLIER_TOLERANCE:
            raise CertificateRejectedError(f"nonnegative:{name}", value)
    for name, form in problem.constraint_forms.items():
        claimed = certificate.constraint_forms.get(name)
        if claimed is None:
            raise CertificateRejectedError(f"form:{name}", math.inf)
        mismatch = max(abs(claimed.constant - form.constant),
                       float(np.abs(claimed.coefficients - form.coefficients).max()))
        if mismatch > tolerance:
            raise CertificateRejectedError(f"form:{name}", mismatch)
    if certificate.slack_min > tolerance:
        raise CertificateRejectedError("slack", certificate.slack_min)

    clipped = certificate.with_updates(
        multipliers={name: max(value, 0.0) for name, value in certificate.multipliers.items()},
        constraint_forms=dict(problem.constraint_forms),
    )
    slack_matrix = dual_slack_matrix(problem, clipped, tolerance)
    minimum = min(0.0, float(np.linalg.eigvalsh(slack_matrix).min()))
    s12 = certificate.blocks["S12"]
    phi = (clipped.multipliers["norm"]
           + float(np.real(np.trace((s12 + s12.conj().T) @ problem.operators.alice_marginal)))
           + minimum)
    if certificate.phi > phi + tolerance * max(1.0, abs(phi)):
        raise CertificateRejectedError("phi", certificate.phi - phi)

    recomputed = clipped.with_updates(phi=phi, slack_min=minimum)
    value = recomputed.value_at(problem.statistics)
    logger.debug(f"Certificate verified: phi={phi:.10f} (claimed {certificate.phi:.10f}), bound={value:.10f}")
    return recomputed.with_updates(dual_value=value)


def verify_certificate(problem: EntropySdpProblem, certificate: DualCertificate,
                       tolerance: Optional[float] = None) -> float:
    """Certified lower bound on the SDP value; see certify()."""
    return certify(problem, certificate, tolerance).dual_value


def classical_entropy_bound(p_z, rule: QuadratureRule) -> float:
    """
    Gauss-Radau entropy bound for a classical key register with an uninformed adversary.

    Args:
        p_z: Subnormalised probabilities of the kept key symbols
        rule: Gauss-Radau rule

    Returns:
        Σ_i w_i/(t_i ln 2) Σ_z [p_z - p_z² / ((1 - t_i) p_z + t_i Σ p)] in bits
    """
    p = np.asarray(p_z, dtype=float)
    if np.any(p < 0):
        raise DomainError("probabilities must be nonnegative")
    total = p.sum()
    if total <= 0:
        return 0.0
    value = 0.0
    for t, w in zip(rule.nodes, rule.weights):
        denominator = (1.0 - t) * p + t * total
        inner = np.where(p > 0, p - p ** 2 / np.where(denominator > 0, denominator, 1.0), 0.0)
        value += w / (t * LN2) * float(inner.sum())
    return value


def multiplier_summary(certificate: DualCertificate) -> List[Tuple[str, float]]:
    """Nonzero multipliers in decreasing magnitude, signed as they enter the dual value."""
    rows = [(name, multiplier_sign(name) * value) for name, value in certificate.multipliers.items()
            if abs(value) > NEGATIVE_MULTIPLIER_TOLERANCE]
    return sorted(rows, key=lambda row: -abs(row[1]))
