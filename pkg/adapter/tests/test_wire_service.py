"""Endpoint behavior through the in-process test client."""

import numpy as np
import pytest
from fastapi.testclient import TestClient

from oracle_adapter.model import ServedModel, builtin_model
from oracle_adapter.service import create_app


@pytest.fixture()
def soft_client():
    app = create_app(builtin_model("blobs-2d"), mode="soft")
    return TestClient(app), app


@pytest.fixture()
def hard_client():
    app = create_app(builtin_model("blobs-2d"), mode="hard")
    return TestClient(app), app


def test_info_bytes(soft_client):
    client, _ = soft_client
    resp = client.get("/v1/info")
    assert resp.status_code == 200
    assert resp.content == b'{"input_dim":2,"num_classes":2}'
    assert resp.headers["content-type"] == "application/json"


def test_hard_answer_has_no_probs(hard_client):
    client, _ = hard_client
    resp = client.post("/v1/query", json={"input": [0.62, 0.61], "mode": "hard"})
    assert resp.status_code == 200
    doc = resp.json()
    assert doc["label"] == 1
    assert "probs" not in doc


def test_soft_answer_carries_a_distribution(soft_client):
    client, _ = soft_client
    resp = client.post("/v1/query", json={"input": [0.41, 0.38], "mode": "soft"})
    assert resp.status_code == 200
    doc = resp.json()
    assert doc["label"] == 0
    probs = doc["probs"]
    assert len(probs) == 2
    assert abs(sum(probs) - 1.0) < 1e-9
    assert max(range(2), key=probs.__getitem__) == doc["label"]


def test_mode_defaults_to_hard(soft_client):
    client, _ = soft_client
    resp = client.post("/v1/query", json={"input": [0.5, 0.5]})
    assert resp.status_code == 200
    assert "probs" not in resp.json()


def test_soft_request_refused_in_hard_mode(hard_client):
    client, _ = hard_client
    resp = client.post("/v1/query", json={"input": [0.5, 0.5], "mode": "soft"})
    assert resp.status_code == 400
    assert "hard mode" in resp.json()["error"]


def test_malformed_bodies_get_400(soft_client):
    client, _ = soft_client
    checks = [
        b"{broken",
        b"[1, 2]",
        b'{"mode": "hard"}',
        b'{"input": []}',
        b'{"input": "nope"}',
        b'{"input": [0.1, "x"]}',
        b'{"input": [0.1, true]}',
        b'{"input": [0.1, Infinity]}',
        b'{"input": [0.1, 0.2], "mode": "loud"}',
    ]
    for body in checks:
        resp = client.post(
            "/v1/query", content=body, headers={"content-type": "application/json"}
        )
        assert resp.status_code == 400, body
        assert set(resp.json()) == {"error"}


def test_dimension_mismatch_gets_422(soft_client):
    client, _ = soft_client
    resp = client.post("/v1/query", json={"input": [0.1, 0.2, 0.3], "mode": "hard"})
    assert resp.status_code == 422
    assert "dimensions" in resp.json()["error"]


def test_responses_are_byte_stable_and_stateless(soft_client):
    client, _ = soft_client
    body = {"input": [0.47, 0.52], "mode": "soft"}
    first = client.post("/v1/query", json=body).content
    # Interleave unrelated traffic, then repeat the original request.
    client.post("/v1/query", json={"input": [0.9, 0.1], "mode": "hard"})
    client.post("/v1/query", json={"input": [0.2, 0.8], "mode": "soft"})
    again = client.post("/v1/query", json=body).content
    assert first == again


def test_counter_counts_only_served_queries(soft_client):
    client, app = soft_client
    assert app.state.queries == 0
    client.post("/v1/query", json={"input": [0.5, 0.5], "mode": "hard"})
    client.post("/v1/query", content=b"{broken")
    client.post("/v1/query", json={"input": [0.1, 0.2, 0.3]})
    client.post("/v1/query", json={"input": [0.5, 0.5], "mode": "soft"})
    assert app.state.queries == 2


def test_model_contract_breach_is_a_500():
    broken = ServedModel(
        predict=lambda x: np.array([0.7, 0.7]), input_dim=2, num_classes=2, name="broken"
    )
    client = TestClient(create_app(broken, mode="hard"))
    resp = client.post("/v1/query", json={"input": [0.5, 0.5], "mode": "hard"})
    assert resp.status_code == 500
    assert "sum" in resp.json()["error"]


def test_create_app_rejects_unknown_mode():
    with pytest.raises(ValueError, match="mode"):
        create_app(builtin_model("blobs-2d"), mode="medium")
