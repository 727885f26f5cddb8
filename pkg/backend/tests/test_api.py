import pytest
from fastapi.testclient import TestClient

from src.api.routes.keyrate import get_keyrate_service
from src.main import app

SMALL_PROTOCOL = {"n_max": 3, "quadrature_order": 2, "rounds": 1e10}


@pytest.fixture
def client(keyrate_service):
    app.dependency_overrides[get_keyrate_service] = lambda: keyrate_service
    yield TestClient(app)
    app.dependency_overrides.clear()


def test_root(client):
    response = client.get("/")
    assert response.status_code == 200
    assert response.json() == {"message": "DM-CV-QKD key rate service is running"}


def test_kappa_endpoint(client):
    response = client.get("/api/operators/kappa", params={"n_max": 12, "tau_max": 20})
    assert response.status_code == 200
    body = response.json()
    assert body["n_max"] == 12
    assert body["kappa"] > 1.0
    assert client.get("/api/operators/kappa", params={"n_max": 0}).status_code == 422


def test_channel_statistics(client):
    response = client.post("/api/channel/statistics",
                           json={"channel": {"loss_db": 2.0, "excess_noise": 0.01}})
    assert response.status_code == 200
    body = response.json()
    assert sum(body["scores"].values()) == pytest.approx(1.0)
    assert len(body["joint_key_table"]) == 4
    assert body["transmittance"] == pytest.approx(10 ** -0.2)


@pytest.mark.parametrize("payload", [
    {"channel": {"loss_db": -1.0}},
    {"channel": {"loss_db": 1.0}, "colour": "blue"},
    {"protocol": {"test_probability": 1.5}},
])
def test_statistics_rejects_malformed_requests(client, payload):
    assert client.post("/api/channel/statistics", json=payload).status_code == 422


def test_statistics_rejects_inconsistent_thresholds(client):
    response = client.post("/api/channel/statistics", json={"protocol": {"tau_min": 30.0}})
    assert response.status_code == 422
    assert response.json()["detail"].startswith("Invalid parameters")


def test_point_rejects_unknown_optimisation_variable(client):
    response = client.post("/api/keyrate/point", json={"optimise": ["gamma"]})
    assert response.status_code == 422


@pytest.mark.slow
def test_asymptotic_endpoint(client):
    response = client.post("/api/keyrate/asymptotic", json={
        "protocol": SMALL_PROTOCOL,
        "channel": {"loss_db": 1.0, "excess_noise": 0.01},
    })
    assert response.status_code == 200
    body = response.json()
    assert body["mode"] == "asymptotic"
    assert body["rate_raw"] == pytest.approx(body["h"] - body["leak_ec"], abs=1e-12)
    assert body["rate"] >= 0.0
