import pytest
from fastapi.testclient import TestClient

from main import app
from services.curve import GX, GY


@pytest.fixture(scope="module")
def client():
    return TestClient(app)


def test_health(client):
    response = client.get("/health")
    assert response.status_code == 200
    assert response.json()["status"] == "healthy"


def test_root_lists_endpoints(client):
    body = client.get("/").json()
    assert body["endpoints"]["kp"] == "/api/v1/kp"


def test_kp_of_one(client):
    response = client.post("/api/v1/kp", json={"scalar": "1"})
    assert response.status_code == 200
    body = response.json()
    assert (body["x"], body["y"]) == (f"{GX:064x}", f"{GY:064x}")
    assert body["verified"]


@pytest.mark.parametrize("scalar", ["0101", "12", ""])
def test_kp_rejects_invalid_scalar(client, scalar):
    assert client.post("/api/v1/kp", json={"scalar": scalar}).status_code == 400


def test_kp_rejects_point_off_curve(client):
    response = client.post("/api/v1/kp", json={"scalar": "11", "point_x": "1", "point_y": "1"})
    assert response.status_code == 400


def test_estimate_time(client):
    response = client.post("/api/v1/estimate-time", json={"bit_length": 256, "clock_mhz": 100.0})
    assert response.status_code == 200
    assert response.json()["min_cycles"] == 74_190_720
    assert response.json()["max_cycles"] == 185_476_800


def test_estimate_time_validates_bit_length(client):
    assert client.post("/api/v1/estimate-time", json={"bit_length": 0}).status_code == 422


def test_script_as_text(client):
    response = client.get("/api/v1/scripts/PA")
    assert response.status_code == 200
    rows = [line for line in response.text.splitlines() if line and not line.startswith("#")]
    assert len(rows) == 42


def test_unknown_script_kind(client):
    assert client.get("/api/v1/scripts/XY").status_code == 422


def test_run_experiment(client):
    response = client.post("/api/v1/experiments/run", json={"scalar": "1111", "trace": {
        "x_cycles": 1000, "n_cycles": 100, "a_cycles": 100, "nop_short_cycles": 400,
        "nop_long_cycles": 3000, "prefix_cycles": 3000, "seed": 3}})
    assert response.status_code == 200
    body = response.json()
    assert (body["doublings"], body["additions"]) == (3, 3)
    assert body["excluded"] == ["Doubling 1"]
    assert body["verdict"]


def test_run_experiment_rejects_bad_config(client):
    assert client.post("/api/v1/experiments/run", json={"scalar": "0"}).status_code == 422
