"""HTTP facade over a query session.

Endpoints (JSON unless noted): GET /session, POST /load {kind, path, id?},
POST /query {target, prompt, top_k?}, POST /segment {image, mode},
GET /image/{id}. Load swaps the whole session atomically, so concurrent
reads never observe a half-loaded state; all other handlers are pure
reads and byte-deterministic for an unchanged session.
"""

from __future__ import annotations

import base64
import mimetypes
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel

from .errors import (
    BadMagic,
    BadSchema,
    BadVersion,
    DimMismatch,
    DveError,
    MissingProbe,
    MissingReferences,
    NoEmbedderConfigured,
    NoMapLoaded,
    ProviderTimeout,
    ProviderUnreachable,
    TruncatedPayload,
    UnknownImage,
)
from .service import (
    ImageQueryResult,
    SessionState,
    handle_query,
    handle_segment,
    session_load,
)

_STATUS = {
    UnknownImage: 404,
    NoMapLoaded: 404,
    NoEmbedderConfigured: 422,
    MissingReferences: 422,
    MissingProbe: 422,
    ProviderUnreachable: 502,
    ProviderTimeout: 504,
    DimMismatch: 400,
    BadSchema: 400,
    BadMagic: 400,
    BadVersion: 400,
    TruncatedPayload: 400,
}


class LoadRequest(BaseModel):
    kind: str
    path: str
    id: Optional[str] = None


class QueryRequest(BaseModel):
    target: str
    prompt: str
    top_k: Optional[int] = None


class SegmentRequest(BaseModel):
    image: str
    mode: str


def create_app(session: SessionState) -> FastAPI:
    app = FastAPI(title="dve query service")
    app.state.session = session

    @app.exception_handler(DveError)
    async def dve_error_handler(_request: Request, exc: DveError):
        status = _STATUS.get(type(exc), 400)
        return JSONResponse(
            status_code=status,
            content={"error": type(exc).__name__, "detail": str(exc)},
        )

    @app.get("/session")
    def get_session():
        return app.state.session.inventory()

    @app.post("/load")
    def post_load(body: LoadRequest):
        # Build the new state fully, then swap in one assignment.
        new_session = session_load(app.state.session, body.kind, body.path, body.id)
        app.state.session = new_session
        return new_session.inventory()

    @app.post("/query")
    def post_query(body: QueryRequest):
        result = handle_query(app.state.session, body.target, body.prompt, body.top_k)
        if isinstance(result, ImageQueryResult):
            return {
                "stats": result.stats,
                "pgm_base64": base64.b64encode(result.pgm).decode("ascii"),
            }
        return {
            "results": [
                {"key": list(key), "similarity": sim} for key, sim in result.entries
            ]
        }

    @app.post("/segment")
    def post_segment(body: SegmentRequest):
        result = handle_segment(app.state.session, body.image, body.mode)
        return {
            "lmap_base64": base64.b64encode(result.lmap).decode("ascii"),
            "legend": result.legend,
        }

    @app.get("/image/{image_id}")
    def get_image(image_id: str):
        path = app.state.session.display_images.get(image_id)
        if path is None:
            raise UnknownImage(f"no display image for {image_id!r}")
        media_type = mimetypes.guess_type(path)[0] or "application/octet-stream"
        with open(path, "rb") as fh:
            return Response(content=fh.read(), media_type=media_type)

    return app
