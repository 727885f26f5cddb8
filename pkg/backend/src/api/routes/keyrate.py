from fastapi import APIRouter, Depends
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict, Field
from typing import List, Literal, Optional
import logging
import traceback
import uuid

from src.application.services.keyrate_service import KeyRateService
from src.core.error_handlers import (
    ConfigurationError,
    DomainError,
    InvalidParametersError,
    KeyRateComputationError,
    KeyRateError,
)
from src.core.run_config import ChannelConfig, OptimiseConfig, ProtocolConfig, RunConfig

# Set up logger
logger = logging.getLogger(__name__)

router = APIRouter()

_service: Optional[KeyRateService] = None


def get_keyrate_service() -> KeyRateService:
    """Shared service so repeated requests reuse cached operators and duals."""
    global _service
    if _service is None:
        logger.info("Initializing key rate service")
        _service = KeyRateService()
    return _service


class KeyRateFlags(BaseModel):
    """Ablation and convention switches of a key-rate request."""
    model_config = ConfigDict(extra="forbid")

    continuity_penalty: bool = True
    constraint_corrections: bool = True
    leakage_mode: Literal["direct", "reverse"] = "direct"
    top_share: Optional[float] = Field(None, gt=0, lt=1)


class AsymptoticRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    protocol: ProtocolConfig = Field(default_factory=ProtocolConfig)
    channel: ChannelConfig = Field(default_factory=ChannelConfig)
    flags: KeyRateFlags = Field(default_factory=KeyRateFlags)

    def run_config(self, variables: List[str]) -> RunConfig:
        return RunConfig(
            protocol=self.protocol,
            channel=self.channel,
            optimise=OptimiseConfig(
                variables=variables,
                continuity_penalty=self.flags.continuity_penalty,
                constraint_corrections=self.flags.constraint_corrections,
                leakage_mode=self.flags.leakage_mode,
                top_share=self.flags.top_share,
            ),
        )


class PointRequest(AsymptoticRequest):
    optimise: List[Literal["alpha", "beta", "nu_c", "nu_l", "nu_u", "chi_dual", "epsilons"]] = ["beta", "epsilons"]


def _compute(request_id: str, label: str, action):
    try:
        return JSONResponse(content=action())
    except (DomainError, ConfigurationError) as e:
        logger.warning(f"[{request_id}] Rejected {label} request: {str(e)}")
        raise InvalidParametersError(str(e))
    except KeyRateError as e:
        logger.error(f"[{request_id}] Error computing {label}: {str(e)}")
        logger.error(traceback.format_exc())
        raise KeyRateComputationError(str(e))


@router.post("/asymptotic")
def asymptotic_rate(request: AsymptoticRequest, service: KeyRateService = Depends(get_keyrate_service)):
    """
    Asymptotic key rate: the min-tradeoff function at the honest statistics minus leakage.
    """
    request_id = uuid.uuid4().hex[:8]
    logger.info(f"[{request_id}] Asymptotic rate at {request.channel.loss_db} dB")
    config = request.run_config([])

    def action():
        report = service.asymptotic_rate(config.protocol_params(), config.channel_params(),
                                         config.point_options(mode="asymptotic"))
        logger.info(f"[{request_id}] Asymptotic rate {report.rate_raw:.6e}")
        return report.to_dict()

    return _compute(request_id, "asymptotic rate", action)


@router.post("/point")
def keyrate_point(request: PointRequest, service: KeyRateService = Depends(get_keyrate_service)):
    """
    Finite-size key rate of one parameter point, optimised over the requested variables.
    """
    request_id = uuid.uuid4().hex[:8]
    logger.info(f"[{request_id}] Key rate at {request.channel.loss_db} dB, N={request.protocol.rounds:.3g}")
    config = request.run_config(list(request.optimise))

    def action():
        report = service.keyrate_point(config.protocol_params(), config.channel_params(),
                                       config.point_options(mode="finite"))
        logger.info(f"[{request_id}] Key length {report.key_length} ({report.status})")
        return report.to_dict()

    return _compute(request_id, "key rate", action)
