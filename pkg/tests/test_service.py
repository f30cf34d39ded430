"""HTTP decision service: parity with the library, error statuses, health."""

import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from uar.config import ServiceConfig
from uar.errors import ClientFailure, ConfigError, IoFailure
from uar.gate import TreePolicy, decide_tree, policy_from_string
from uar.service import create_app
from tests.test_gate import DIM, const_bundle, random_bundle


@pytest.fixture(scope="module")
def bundle():
    return random_bundle(np.random.Generator(np.random.PCG64(77)))


@pytest.fixture(scope="module")
def client(bundle):
    config = ServiceConfig(model_tag="svc-7b")
    app = create_app(config, bundle=bundle)
    with TestClient(app) as c:
        yield c


class TestHealth:
    def test_reports_dim_and_tag(self, client):
        response = client.get("/v1/health")
        assert response.status_code == 200
        assert response.json() == {"status": "ok", "dim": DIM, "model_tag": "svc-7b"}


class TestDecide:
    def test_parity_with_library(self, client, bundle):
        rng = np.random.Generator(np.random.PCG64(5))
        for _ in range(50):
            vector = rng.standard_normal(DIM)
            response = client.post("/v1/decide", json={"vector": vector.tolist()})
            assert response.status_code == 200
            expected = decide_tree(bundle, vector).to_json()
            assert response.content == expected.encode()

    def test_default_policy_is_tree(self, client):
        response = client.post("/v1/decide", json={"vector": [0.1] * DIM})
        assert response.json()["policy"] == "uar_tree"

    def test_policy_override(self, client):
        response = client.post("/v1/decide", json={"vector": [0.1] * DIM, "policy": "always"})
        assert response.json() == {"final": "retrieve", "policy": "always", "evaluated": [], "criteria": {}}

    def test_single_policy(self, client, bundle):
        vector = [0.3, -0.2, 0.9]
        response = client.post("/v1/decide", json={"vector": vector, "policy": "single:self"})
        expected = policy_from_string("single:self", bundle).decide(vector=np.array(vector))
        assert response.content == expected.to_json().encode()

    def test_wrong_dim_400(self, client):
        response = client.post("/v1/decide", json={"vector": [0.1] * (DIM + 1)})
        assert response.status_code == 400
        body = response.json()
        assert body["code"] == "dimension_mismatch"
        assert str(DIM) in body["message"]

    def test_malformed_json_400(self, client):
        response = client.post("/v1/decide", content=b"{not json", headers={"content-type": "application/json"})
        assert response.status_code == 400
        assert response.json()["code"] == "malformed_json"

    def test_non_object_body_400(self, client):
        response = client.post("/v1/decide", json=[1, 2, 3])
        assert response.status_code == 400
        assert response.json()["code"] == "malformed_json"

    def test_missing_vector_400(self, client):
        response = client.post("/v1/decide", json={"policy": "uar_tree"})
        assert response.status_code == 400
        assert response.json()["code"] == "malformed_vector"

    def test_non_numeric_vector_400(self, client):
        response = client.post("/v1/decide", json={"vector": ["a", "b", "c"]})
        assert response.json()["code"] == "malformed_vector"

    def test_bool_entries_rejected(self, client):
        response = client.post("/v1/decide", json={"vector": [True, False, True]})
        assert response.json()["code"] == "malformed_vector"

    def test_non_finite_rejected(self, client):
        response = client.post(
            "/v1/decide",
            content=b'{"vector": [NaN, 0.0, 0.0]}',
            headers={"content-type": "application/json"},
        )
        assert response.status_code == 400
        assert response.json()["code"] == "malformed_vector"

    def test_unknown_policy_400(self, client):
        response = client.post("/v1/decide", json={"vector": [0.0] * DIM, "policy": "sometimes"})
        assert response.status_code == 400
        assert response.json()["code"] == "config_error"

    def test_payload_too_large_413(self, bundle):
        config = ServiceConfig(max_body_bytes=64)
        with TestClient(create_app(config, bundle=bundle)) as small_client:
            response = small_client.post("/v1/decide", json={"vector": [0.123456789] * 100})
            assert response.status_code == 413
            assert response.json()["code"] == "payload_too_large"

    def test_stateless_identical_responses(self, client):
        payload = {"vector": [0.5, -0.25, 1.5]}
        first = client.post("/v1/decide", json=payload)
        second = client.post("/v1/decide", json=payload)
        assert first.content == second.content


class FakeExtractor:
    def __init__(self, vector, dim=None, fail=False):
        self.vector = list(vector)
        self.dim = len(self.vector) if dim is None else dim
        self.fail = fail
        self.calls = 0

    def extract(self, text):
        self.calls += 1
        if self.fail:
            raise ClientFailure("extractor", "connection refused")
        return {"vector": self.vector, "dim": self.dim, "model_tag": "fake"}


class TestDecideText:
    def test_no_extractor_503(self, client):
        response = client.post("/v1/decide_text", json={"text": "When is the next eclipse?"})
        assert response.status_code == 503
        assert response.json()["code"] == "extractor_unavailable"

    def test_proxies_to_extractor(self, bundle):
        vector = [0.7, -1.2, 0.2]
        extractor = FakeExtractor(vector)
        app = create_app(ServiceConfig(), bundle=bundle, extractor=extractor)
        with TestClient(app) as c:
            response = c.post("/v1/decide_text", json={"text": "Who won in 2022?"})
            assert response.status_code == 200
            assert response.content == decide_tree(bundle, np.array(vector)).to_json().encode()
            assert extractor.calls == 1

    def test_extractor_failure_503(self, bundle):
        app = create_app(ServiceConfig(), bundle=bundle, extractor=FakeExtractor([0.0] * DIM, fail=True))
        with TestClient(app) as c:
            response = c.post("/v1/decide_text", json={"text": "hm"})
            assert response.status_code == 503
            assert response.json()["code"] == "extractor_unavailable"

    def test_extractor_dim_mismatch_400(self, bundle):
        app = create_app(ServiceConfig(), bundle=bundle, extractor=FakeExtractor([0.0] * (DIM + 2)))
        with TestClient(app) as c:
            response = c.post("/v1/decide_text", json={"text": "hm"})
            assert response.status_code == 400
            assert response.json()["code"] == "dimension_mismatch"

    def test_missing_text_400(self, bundle):
        app = create_app(ServiceConfig(), bundle=bundle, extractor=FakeExtractor([0.0] * DIM))
        with TestClient(app) as c:
            response = c.post("/v1/decide_text", json={"vector": [1.0]})
            assert response.status_code == 400
            assert response.json()["code"] == "malformed_text"

    def test_policy_override_applies(self, bundle):
        app = create_app(ServiceConfig(), bundle=bundle, extractor=FakeExtractor([0.0] * DIM))
        with TestClient(app) as c:
            response = c.post("/v1/decide_text", json={"text": "hm", "policy": "never"})
            assert response.json()["final"] == "no_retrieve"


class TestStartup:
    def test_refuses_missing_bundle_dir(self):
        with pytest.raises(ConfigError):
            create_app(ServiceConfig())

    def test_refuses_incomplete_bundle(self, tmp_path):
        bundle = const_bundle(True, True, True, True)
        bundle.save_dir(tmp_path)
        (tmp_path / "time.json").unlink()
        with pytest.raises(IoFailure):
            create_app(ServiceConfig(bundle_dir=str(tmp_path)))

    def test_loads_bundle_from_dir(self, tmp_path):
        const_bundle(True, False, False, False).save_dir(tmp_path)
        app = create_app(ServiceConfig(bundle_dir=str(tmp_path)))
        with TestClient(app) as c:
            assert c.get("/v1/health").json()["dim"] == DIM
            body = c.post("/v1/decide", json={"vector": [0.0] * DIM}).json()
            assert body["final"] == "retrieve"
