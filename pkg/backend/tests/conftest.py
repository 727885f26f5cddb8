import json

import numpy as np
import pytest

from src.application.services.keyrate_service import KeyRateService
from src.domain.entities.certificate import AffineScoreFunction
from src.domain.entities.protocol import TEST_SCORES, ProtocolParams
from src.domain.entities.statistics import ChannelParams
from src.infrastructure.sdp.entropy_sdp import CvxpyBackend

# Photon cutoff and quadrature order small enough for SDP solves inside unit tests
SMALL_N_MAX = 3
SMALL_ORDER = 2


@pytest.fixture
def small_params() -> ProtocolParams:
    return ProtocolParams(n_max=SMALL_N_MAX, quadrature_order=SMALL_ORDER, rounds=1e12)


@pytest.fixture
def default_params() -> ProtocolParams:
    return ProtocolParams()


@pytest.fixture
def channel() -> ChannelParams:
    return ChannelParams.from_loss_db(1.0, excess_noise=0.01)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240521)


@pytest.fixture(scope="session")
def test_backend() -> CvxpyBackend:
    return CvxpyBackend(solver="SCS", eps=1e-8, max_iters=100_000, compute_primal=False)


@pytest.fixture(scope="session")
def keyrate_service(test_backend) -> KeyRateService:
    """Shared across the session so repeated points reuse cached duals."""
    return KeyRateService(backend=test_backend, verify_tolerance=1e-6)


@pytest.fixture
def sample_g() -> AffineScoreFunction:
    """Affine g over the test scores with distinct coefficients."""
    return AffineScoreFunction(
        constant=0.4,
        coefficients=np.linspace(-0.3, 0.2, len(TEST_SCORES)),
        scores=TEST_SCORES,
    )


@pytest.fixture
def small_config(tmp_path):
    """Path of a run configuration sized for unit tests."""
    config = {
        "protocol": {"n_max": SMALL_N_MAX, "quadrature_order": SMALL_ORDER, "rounds": 1e6},
        "channel": {"loss_db": 1.0, "excess_noise": 0.01},
        "sweep": {"losses_db": [0.0, 1.0], "rounds": [1e10], "mode": "asymptotic"},
        "solver": {"name": "SCS", "eps": 1e-8, "max_iters": 100000,
                   "verify_tolerance": 1e-6, "solve_primal": False},
    }
    path = tmp_path / "run.json"
    path.write_text(json.dumps(config))
    return path
