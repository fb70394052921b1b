"""REST front end over pre-loaded rerankers.

``POST /rerank`` takes ``{"model_type", "query", "documents": [{doc_id, text,
metadata?}], "top_k"?}`` and answers with the canonical RankedResults JSON.
``GET /health`` lists the loaded handles and their capability records.

Errors come back as ``{"error": <name>, "detail": <text>}`` with 400 for a
malformed body, 422 for invalid documents, 404 for a model type that is not
loaded and 503 for backend failures.
"""

from __future__ import annotations

import json
from collections.abc import Mapping
from typing import Any

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel, ConfigDict, Field, StrictInt, StrictStr, ValidationError
from starlette.concurrency import run_in_threadpool

from ..core import Document, top_k
from ..errors import InputError, RerankError, UnknownModelType
from ..registry import RankerKind, Reranker, parse_kind


class DocRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    doc_id: StrictInt | StrictStr
    text: StrictStr
    metadata: dict[str, Any] = Field(default_factory=dict)


class RerankBody(BaseModel):
    model_config = ConfigDict(extra="forbid")

    model_type: StrictStr
    query: StrictStr
    documents: list[DocRecord]
    top_k: StrictInt | None = Field(default=None, ge=1)


def _error(status: int, name: str, detail: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": name, "detail": detail})


def create_app(handles: Mapping[RankerKind, Reranker]) -> FastAPI:
    if not handles:
        raise ValueError("at least one reranker must be loaded")
    handles = dict(handles)
    loaded = [k.alias for k in handles]
    app = FastAPI(title="unirank", version="0.1.0")

    @app.get("/health")
    def health() -> dict[str, Any]:
        records = [
            {"kind": kind.value, "alias": kind.alias, "available": True, "info": handle.info}
            for kind, handle in handles.items()
        ]
        return {"status": "ok", "loaded": loaded, "capabilities": records}

    @app.post("/rerank")
    async def rerank(request: Request) -> Response:
        raw = await request.body()
        try:
            body = RerankBody.model_validate(json.loads(raw))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            return _error(400, "MalformedBody", f"body is not valid JSON: {exc}")
        except ValidationError as exc:
            return _error(400, "MalformedBody", "; ".join(e["msg"] + f" at {e['loc']}" for e in exc.errors()))

        try:
            kind = parse_kind(body.model_type)
        except UnknownModelType as exc:
            return _error(404, exc.name, f"{exc}; loaded: {', '.join(loaded)}")
        handle = handles.get(kind)
        if handle is None:
            return _error(404, "ModelNotLoaded", f"model type {body.model_type!r} is not loaded; loaded: {', '.join(loaded)}")

        try:
            docs = [Document(d.doc_id, d.text, d.metadata) for d in body.documents]
            results = await run_in_threadpool(handle.rank, body.query, docs)
        except InputError as exc:
            return _error(422, exc.name, str(exc))
        except RerankError as exc:
            return _error(503, exc.name, str(exc))
        if body.top_k is not None:
            results = top_k(results, body.top_k)
        return Response(content=results.to_json(), media_type="application/json")

    return app
