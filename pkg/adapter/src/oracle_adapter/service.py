"""The wire service: GET /v1/info and POST /v1/query.

Responses are serialized by hand (compact separators, repr floats) so a
given request against given weights always produces identical bytes. The
service holds no per-client state; the only mutable thing is a served-query
counter used for logging.
"""

from __future__ import annotations

import json
import logging
import threading

from fastapi import FastAPI, Request, Response

from .model import ModelError, ServedModel

log = logging.getLogger("oracle_adapter")

MODES = ("hard", "soft")


def _json_response(doc: dict, status: int = 200) -> Response:
    body = json.dumps(doc, separators=(",", ":"))
    return Response(content=body, status_code=status, media_type="application/json")


def _error(status: int, message: str) -> Response:
    return _json_response({"error": message}, status=status)


def create_app(model: ServedModel, mode: str = "hard") -> FastAPI:
    """Wrap one loaded model; `mode` decides whether probs may leave the box."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")

    app = FastAPI(openapi_url=None, docs_url=None, redoc_url=None)
    app.state.model = model
    app.state.mode = mode
    app.state.queries = 0
    counter_lock = threading.Lock()

    @app.get("/v1/info")
    def info() -> Response:
        return _json_response(
            {"input_dim": model.input_dim, "num_classes": model.num_classes}
        )

    @app.post("/v1/query")
    async def query(request: Request) -> Response:
        raw = await request.body()
        try:
            doc = json.loads(raw)
        except (json.JSONDecodeError, UnicodeDecodeError):
            return _error(400, "request body is not valid JSON")
        if not isinstance(doc, dict):
            return _error(400, "request body must be a JSON object")

        vector = doc.get("input")
        if not isinstance(vector, list) or not vector:
            return _error(400, "field 'input' must be a non-empty array of numbers")
        for v in vector:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                return _error(400, "field 'input' must contain only numbers")
            if v != v or v in (float("inf"), float("-inf")):
                return _error(400, "field 'input' must contain only finite numbers")

        want = doc.get("mode", "hard")
        if want not in MODES:
            return _error(400, f"field 'mode' must be one of {list(MODES)}")
        if want == "soft" and mode == "hard":
            return _error(400, "this service runs in hard mode and will not return probs")

        if len(vector) != model.input_dim:
            return _error(
                422,
                f"input has {len(vector)} dimensions, model expects {model.input_dim}",
            )

        try:
            probs = model.probabilities(vector)
        except ModelError as exc:
            return _error(500, str(exc))
        label = model.label(probs)

        with counter_lock:
            app.state.queries += 1
            served = app.state.queries
        log.info("query %d: label=%d", served, label)

        if want == "soft":
            return _json_response(
                {"label": label, "probs": [float(p) for p in probs]}
            )
        return _json_response({"label": label})

    return app
