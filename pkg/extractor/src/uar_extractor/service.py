"""HTTP face of the extractor: one POST that turns text into a vector."""

from __future__ import annotations

import json

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from uar_extractor.config import ExtractionConfig
from uar_extractor.errors import NonFiniteActivation, TokenizationFailure
from uar_extractor.runner import HiddenStateModel


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"code": code, "message": message})


def create_app(config: ExtractionConfig, model: HiddenStateModel | None = None) -> FastAPI:
    if model is None:
        model = HiddenStateModel(config)
    app = FastAPI(docs_url=None, redoc_url=None)

    @app.post("/v1/extract")
    async def extract(request: Request):
        raw = await request.body()
        try:
            doc = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            return _error(400, "malformed_json", "request body is not valid JSON")
        if not isinstance(doc, dict):
            return _error(400, "malformed_json", "request body must be a JSON object")
        text = doc.get("text")
        if not isinstance(text, str) or not text:
            return _error(400, "malformed_text", "'text' must be a non-empty string")
        try:
            vector = model.vector(text)
        except TokenizationFailure as exc:
            return _error(400, exc.code, exc.message)
        except NonFiniteActivation as exc:
            return _error(500, exc.code, exc.message)
        return JSONResponse(
            content={
                "vector": [float(v) for v in vector],
                "dim": model.hidden_size,
                "model_tag": model.model_tag,
            }
        )

    @app.get("/v1/health")
    def health():
        return {"status": "ok", "dim": model.hidden_size, "model_tag": model.model_tag}

    return app


def serve(
    config: ExtractionConfig,
    host: str = "127.0.0.1",
    port: int = 8090,
    log_level: str = "info",
) -> None:  # pragma: no cover - thin uvicorn shell
    import uvicorn

    uvicorn.run(create_app(config), host=host, port=port, log_level=log_level)
