"""HTTP surface: query understanding, health, and latency metrics.

Error mapping: invalid input is a 400, a timeout with no degradable partial
result is a 504, and malformed backend output is never a 500 because the
pipeline degrades it into a flagged pass-through result.
"""

from __future__ import annotations

from typing import Any

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .domain import MemberProfile, Query
from .exceptions import BudgetExhausted
from .pipeline import Pipeline


class UnderstandRequest(BaseModel):
    query: str
    profile: dict[str, Any] | None = None
    locale: str | None = None
    request_id: str = ""


def create_app(pipeline: Pipeline) -> FastAPI:
    app = FastAPI(title="querylens", version="0.1.0")
    app.state.pipeline = pipeline

    @app.post("/v1/query/understand")
    def understand(body: UnderstandRequest) -> dict[str, Any]:
        try:
            query = Query(text=body.query, locale=body.locale, request_id=body.request_id)
            profile = MemberProfile.from_dict(body.profile) if body.profile else None
        except (ValueError, KeyError, TypeError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        try:
            result = pipeline.understand(query, profile)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        except BudgetExhausted as exc:
            raise HTTPException(status_code=504, detail=str(exc)) from exc
        return result.to_dict()

    @app.get("/v1/health")
    def health() -> dict[str, str]:
        return {"status": "ok"}

    @app.get("/v1/metrics")
    def metrics() -> dict[str, Any]:
        return {"stages": pipeline.recorder.snapshot()}

    return app
