"""Run configuration: a JSON document with optional sections, validated by pydantic."""
import json
import logging
from pathlib import Path
from typing import List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.application.services.keyrate_service import KeyRateService, PointOptions
from src.core.error_handlers import ConfigurationError
from src.domain.entities.corrections import LinearisationPoints
from src.domain.entities.protocol import EpsilonBudget, ProtocolParams
from src.domain.entities.report import SweepSpec
from src.domain.entities.statistics import ChannelParams
from src.infrastructure.sdp.entropy_sdp import CvxpyBackend

logger = logging.getLogger(__name__)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class EpsilonConfig(_Section):
    secrecy: float = Field(1e-6, gt=0, lt=1)
    correctness: float = Field(1e-15, gt=0, lt=1)
    completeness_pe: float = Field(1e-10, gt=0, lt=1)
    completeness_ec: float = Field(0.0, ge=0, lt=1)
    smoothing: Optional[float] = Field(None, gt=0, lt=1)
    accumulation: Optional[float] = Field(None, gt=0, lt=1)


class ProtocolConfig(_Section):
    rounds: float = Field(1e14, ge=1)
    alpha: float = Field(0.75, ge=0)
    test_probability: float = Field(0.01, gt=0, lt=1)
    tau_min_key: float = Field(0.6, gt=0)
    tau_min: float = Field(1.5, ge=0)
    tau_max: float = Field(20.0, gt=0)
    n_max: int = Field(12, ge=1)
    quadrature_order: int = Field(4, ge=1)
    d_z: int = Field(5, ge=1)
    epsilons: EpsilonConfig = Field(default_factory=EpsilonConfig)


class ChannelConfig(_Section):
    loss_db: float = Field(0.0, ge=0)
    excess_noise: float = Field(0.0, ge=0)
    dual_excess_noise: Optional[float] = Field(None, ge=0)


class LinearisationConfig(_Section):
    nu_c: Optional[float] = Field(None, gt=0)
    nu_l: Optional[float] = Field(None, gt=0)
    nu_u: Optional[float] = Field(None, gt=0)

    @model_validator(mode="after")
    def all_or_none(self) -> "LinearisationConfig":
        given = [v is not None for v in (self.nu_c, self.nu_l, self.nu_u)]
        if any(given) and not all(given):
            raise ValueError("set all of nu_c, nu_l, nu_u or none of them")
        return self


class OptimiseConfig(_Section):
    variables: List[Literal["alpha", "beta", "nu_c", "nu_l", "nu_u", "chi_dual", "epsilons"]] = ["beta", "epsilons"]
    beta: float = Field(1e-4, gt=0, lt=0.5)
    top_share: Optional[float] = Field(None, gt=0, lt=1)
    leakage_mode: Literal["direct", "reverse"] = "direct"
    continuity_penalty: bool = True
    constraint_corrections: bool = True
    max_rounds: int = Field(3, ge=1)


class SweepConfig(_Section):
    losses_db: List[float] = [0.0, 1.0, 2.0, 3.0]
    rounds: List[float] = [1e14]
    mode: Literal["asymptotic", "finite"] = "finite"


class SolverConfig(_Section):
    name: Optional[str] = None
    eps: Optional[float] = Field(None, gt=0, lt=1)
    max_iters: Optional[int] = Field(None, ge=1)
    verify_tolerance: Optional[float] = Field(None, gt=0)
    solve_primal: Optional[bool] = None


class RunConfig(_Section):
    protocol: ProtocolConfig = Field(default_factory=ProtocolConfig)
    channel: ChannelConfig = Field(default_factory=ChannelConfig)
    linearisation: LinearisationConfig = Field(default_factory=LinearisationConfig)
    optimise: OptimiseConfig = Field(default_factory=OptimiseConfig)
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)

    def protocol_params(self) -> ProtocolParams:
        p = self.protocol
        eps = p.epsilons
        return ProtocolParams(
            rounds=p.rounds, alpha=p.alpha, test_probability=p.test_probability,
            tau_min_key=p.tau_min_key, tau_min=p.tau_min, tau_max=p.tau_max,
            n_max=p.n_max, quadrature_order=p.quadrature_order, d_z=p.d_z,
            epsilons=EpsilonBudget.create(
                secrecy=eps.secrecy, correctness=eps.correctness,
                completeness_pe=eps.completeness_pe, completeness_ec=eps.completeness_ec,
                smoothing=eps.smoothing, accumulation=eps.accumulation,
            ),
        )

    def channel_params(self) -> ChannelParams:
        c = self.channel
        return ChannelParams.from_loss_db(c.loss_db, c.excess_noise, c.dual_excess_noise)

    def point_options(self, mode: Optional[str] = None) -> PointOptions:
        o, lin = self.optimise, self.linearisation
        points = None
        if lin.nu_c is not None:
            points = LinearisationPoints(nu_c=lin.nu_c, nu_l=lin.nu_l, nu_u=lin.nu_u)
        return PointOptions(
            mode=mode or self.sweep.mode,
            optimise=frozenset(o.variables),
            continuity_penalty=o.continuity_penalty,
            constraint_corrections=o.constraint_corrections,
            leakage_mode=o.leakage_mode,
            beta=o.beta,
            top_share=o.top_share,
            linearisation=points,
            max_rounds=o.max_rounds,
        )

    def sweep_spec(self) -> SweepSpec:
        o = self.optimise
        return SweepSpec(
            losses_db=tuple(self.sweep.losses_db),
            rounds=tuple(self.sweep.rounds),
            mode=self.sweep.mode,
            optimise=frozenset(o.variables),
            continuity_penalty=o.continuity_penalty,
            constraint_corrections=o.constraint_corrections,
        )

    def backend(self) -> CvxpyBackend:
        s = self.solver
        return CvxpyBackend(solver=s.name, eps=s.eps, max_iters=s.max_iters, compute_primal=s.solve_primal)

    def service(self) -> KeyRateService:
        return KeyRateService(backend=self.backend(), verify_tolerance=self.solver.verify_tolerance)


def parse_run_config(data: Union[dict, str]) -> RunConfig:
    """Validate a configuration given as a dict or JSON text."""
    try:
        if isinstance(data, str):
            return RunConfig.model_validate_json(data)
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid run configuration: {e}") from e


def load_run_config(path: Optional[Union[str, Path]]) -> RunConfig:
    """Read a run configuration file; None gives the defaults."""
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigurationError(f"Cannot read configuration {path}: {e}") from e
    config = parse_run_config(text)
    logger.info(f"Loaded run configuration from {path}")
    return config


def dump_run_config(config: RunConfig) -> str:
    return json.dumps(config.model_dump(mode="json"), indent=2, sort_keys=True)
