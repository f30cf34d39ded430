"""HTTP decision service.

Endpoints:
    POST /v1/decide       {"vector": [...], "policy": optional} -> decision JSON
    POST /v1/decide_text  {"text": "...", "policy": optional}   -> decision JSON,
                          vector fetched from the configured extractor endpoint
    GET  /v1/health       {"status": "ok", "dim": d, "model_tag": "..."}

Decision bodies are the canonical single-line decision JSON, so a service
response can be byte-compared against the library's output. Errors come back
as {"code": ..., "message": ...} with 400 for bad bodies or wrong dims, 413
over the size limit, 503 when text decisions need an extractor that is not
configured or not answering.

The loaded bundle is immutable shared state; requests never mutate it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
import requests
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response

from uar.config import ServiceConfig
from uar.errors import ClientFailure, ConfigError, UarError
from uar.gate import GateBundle, policy_from_string


@dataclass
class HttpExtractor:
    """Client for the hidden-state extractor endpoint."""

    endpoint: str
    timeout: float = 120.0

    def extract(self, text: str) -> dict:
        try:
            response = requests.post(self.endpoint, json={"text": text}, timeout=self.timeout)
            response.raise_for_status()
            doc = response.json()
        except Exception as exc:
            raise ClientFailure("extractor", f"extractor endpoint {self.endpoint}: {exc}") from exc
        if not isinstance(doc, dict) or "vector" not in doc or "dim" not in doc:
            raise ClientFailure("extractor", "extractor response missing vector/dim")
        return doc


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"code": code, "message": message})


def _parse_body(raw: bytes, limit: int):
    """Returns (doc, None) or (None, error response)."""
    if len(raw) > limit:
        return None, _error(413, "payload_too_large", f"body exceeds {limit} bytes")
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        return None, _error(400, "malformed_json", "request body is not valid JSON")
    if not isinstance(doc, dict):
        return None, _error(400, "malformed_json", "request body must be a JSON object")
    return doc, None


def create_app(config: ServiceConfig, bundle: GateBundle | None = None, extractor=None) -> FastAPI:
    """Build the app; refuses to start on an inconsistent bundle directory."""
    if bundle is None:
        if not config.bundle_dir:
            raise ConfigError("no bundle directory configured")
        bundle = GateBundle.load_dir(config.bundle_dir)
    if extractor is None and config.extractor_url:
        extractor = HttpExtractor(config.extractor_url)

    dim = bundle.intent_clf.dim
    app = FastAPI(title="retrieval-timing gate", docs_url=None, redoc_url=None)

    def run_policy(doc: dict, vector) -> Response | JSONResponse:
        if not isinstance(vector, list) or not vector:
            return _error(400, "malformed_vector", "body needs a nonempty 'vector' array of numbers")
        for v in vector:
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                return _error(400, "malformed_vector", "vector entries must be finite numbers")
        if len(vector) != dim:
            return _error(400, "dimension_mismatch", f"expected dim {dim}, got {len(vector)}")
        policy_name = doc.get("policy", config.policy)
        if not isinstance(policy_name, str):
            return _error(400, "config_error", "'policy' must be a string")
        try:
            policy = policy_from_string(policy_name, bundle=bundle)
            decision = policy.decide(vector=np.asarray(vector, dtype=np.float64))
        except UarError as exc:
            return _error(400, exc.code, exc.message)
        return Response(content=decision.to_json(), media_type="application/json")

    @app.post("/v1/decide")
    async def decide(request: Request):
        doc, failure = _parse_body(await request.body(), config.max_body_bytes)
        if failure is not None:
            return failure
        return run_policy(doc, doc.get("vector"))

    @app.post("/v1/decide_text")
    async def decide_text(request: Request):
        doc, failure = _parse_body(await request.body(), config.max_body_bytes)
        if failure is not None:
            return failure
        text = doc.get("text")
        if not isinstance(text, str) or not text:
            return _error(400, "malformed_text", "body needs a nonempty 'text' string")
        if extractor is None:
            return _error(503, "extractor_unavailable", "no extractor endpoint configured")
        try:
            extracted = extractor.extract(text)
        except UarError as exc:
            return _error(503, "extractor_unavailable", exc.message)
        return run_policy(doc, extracted.get("vector"))

    @app.get("/v1/health")
    async def health():
        return JSONResponse({"status": "ok", "dim": dim, "model_tag": config.model_tag})

    return app


def serve(config: ServiceConfig) -> None:
    import uvicorn

    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level=config.log_level)
