from fastapi import APIRouter, Query
from pydantic import BaseModel, ConfigDict, Field
import logging
import traceback
import uuid

from src.core.error_handlers import InvalidParametersError, KeyRateComputationError, KeyRateError, DomainError
from src.core.run_config import ChannelConfig, ProtocolConfig, RunConfig
from src.infrastructure.channel.channel_model import honest_statistics
from src.infrastructure.operators.protocol_operators import kappa

logger = logging.getLogger(__name__)

router = APIRouter()


class StatisticsRequest(BaseModel):
    """Request model for honest channel statistics."""
    model_config = ConfigDict(extra="forbid")

    protocol: ProtocolConfig = Field(default_factory=ProtocolConfig)
    channel: ChannelConfig = Field(default_factory=ChannelConfig)


@router.post("/channel/statistics")
def channel_statistics(request: StatisticsRequest):
    """Honest score distribution, key-round table, pass probability and conditional entropies."""
    request_id = uuid.uuid4().hex[:8]
    logger.info(f"[{request_id}] Honest statistics at {request.channel.loss_db} dB, "
                f"chi={request.channel.excess_noise}")
    try:
        config = RunConfig(protocol=request.protocol, channel=request.channel)
        honest = honest_statistics(config.protocol_params(), config.channel_params())
        return honest.to_dict()
    except DomainError as e:
        raise InvalidParametersError(str(e))
    except KeyRateError as e:
        logger.error(f"[{request_id}] Error computing statistics: {str(e)}")
        logger.error(traceback.format_exc())
        raise KeyRateComputationError(str(e))


@router.get("/operators/kappa")
def operator_kappa(n_max: int = Query(12, ge=1), tau_max: float = Query(20.0, gt=0)):
    """κ for the photon cutoff and the ⊤ intensity threshold."""
    try:
        return {"n_max": n_max, "tau_max": tau_max, "kappa": kappa(n_max, tau_max)}
    except DomainError as e:
        raise InvalidParametersError(str(e))
