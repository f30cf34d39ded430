import numpy as np
import pytest
from fastapi.testclient import TestClient

from uar_extractor.errors import NonFiniteActivation, TokenizationFailure
from uar_extractor.service import create_app


@pytest.fixture(scope="module")
def client(tiny_config, tiny_model):
    return TestClient(create_app(tiny_config, model=tiny_model))


class TestHealth:
    def test_reports_model_geometry(self, client):
        response = client.get("/v1/health")
        assert response.status_code == 200
        assert response.json() == {"status": "ok", "dim": 32, "model_tag": "tiny-lm"}


class TestExtract:
    def test_response_shape(self, client):
        response = client.post("/v1/extract", json={"text": "Who won the 2022 final?"})
        assert response.status_code == 200
        doc = response.json()
        assert set(doc) == {"vector", "dim", "model_tag"}
        assert doc["dim"] == 32 and doc["model_tag"] == "tiny-lm"
        assert len(doc["vector"]) == 32

    def test_vector_matches_offline_bitwise(self, client, tiny_model):
        text = "Is this bitwise identical?"
        doc = client.post("/v1/extract", json={"text": text}).json()
        served = np.asarray(doc["vector"], dtype=np.float32)
        assert served.tobytes() == tiny_model.vector(text).tobytes()

    def test_repeat_requests_identical(self, client):
        first = client.post("/v1/extract", json={"text": "same text"}).content
        second = client.post("/v1/extract", json={"text": "same text"}).content
        assert first == second

    @pytest.mark.parametrize("raw", [b"not json", b"[1, 2]", b'"text"'])
    def test_malformed_json(self, client, raw):
        response = client.post("/v1/extract", content=raw)
        assert response.status_code == 400
        assert response.json()["code"] == "malformed_json"

    @pytest.mark.parametrize("body", [{}, {"text": ""}, {"text": 7}, {"texts": "x"}])
    def test_malformed_text(self, client, body):
        response = client.post("/v1/extract", json=body)
        assert response.status_code == 400
        assert response.json()["code"] == "malformed_text"


class _FailingModel:
    hidden_size = 32
    model_tag = "broken"

    def __init__(self, exc):
        self.exc = exc

    def vector(self, text, item_id=""):
        raise self.exc


class TestModelFailureMapping:
    def test_tokenization_failure_is_400(self, tiny_config):
        app = create_app(tiny_config, model=_FailingModel(TokenizationFailure("", "no tokens")))
        response = TestClient(app).post("/v1/extract", json={"text": "x"})
        assert response.status_code == 400
        assert response.json()["code"] == "tokenization_failure"

    def test_non_finite_is_500(self, tiny_config):
        app = create_app(tiny_config, model=_FailingModel(NonFiniteActivation("", "nan")))
        response = TestClient(app).post("/v1/extract", json={"text": "x"})
        assert response.status_code == 500
        assert response.json()["code"] == "non_finite_activation"
