"""The HTTP service: three scoring endpoints plus a health probe.

Request handling is stateless, so replicas can sit behind one address.
With the fake backend (and greedy decoding on real ones) identical
requests produce identical responses; the health payload declares this
so the engine's manifests can rely on it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from .backends import FakeDeterministicBackend
from .protocol import (
    ERROR_BACKEND,
    ERROR_BAD_SCHEMA,
    ERROR_OVERSIZED,
    PROTOCOL,
    LogprobRequest,
    QualityRequest,
    TranslateRequest,
    error_body,
)


@dataclass
class GatewayConfig:
    max_batch: int = 256
    backend: object = field(default_factory=FakeDeterministicBackend)
    quality_backend: object | None = None  # defaults to the main backend


def create_app(config: GatewayConfig | None = None) -> FastAPI:
    config = config or GatewayConfig()
    backend = config.backend
    quality_backend = config.quality_backend or backend
    app = FastAPI(title="alsel scoring gateway", docs_url=None, redoc_url=None)

    @app.exception_handler(RequestValidationError)
    async def bad_schema(request: Request, exc: RequestValidationError):
        batch_id = None
        try:
            body = await request.json()
            if isinstance(body, dict):
                batch_id = body.get("batch_id")
        except Exception:
            pass
        return JSONResponse(
            status_code=400,
            content=error_body(ERROR_BAD_SCHEMA, str(exc.errors()[:3]), batch_id),
        )

    def guard_size(batch_id: str, items) -> JSONResponse | None:
        if len(items) > config.max_batch:
            return JSONResponse(
                status_code=400,
                content=error_body(
                    ERROR_OVERSIZED,
                    f"batch of {len(items)} exceeds max batch size {config.max_batch}",
                    batch_id,
                ),
            )
        return None

    def run(batch_id: str, fn, items):
        try:
            results = fn([item.model_dump() for item in items])
        except Exception as exc:
            return JSONResponse(
                status_code=500, content=error_body(ERROR_BACKEND, str(exc), batch_id)
            )
        return JSONResponse(
            status_code=200,
            content={
                "batch_id": batch_id,
                "model": backend.descriptor(),
                "results": results,
            },
        )

    @app.get("/health")
    def health():
        return {
            "status": "ok",
            "protocol": PROTOCOL,
            "models": {
                "forward": backend.descriptor(),
                "reverse": backend.descriptor(),
                "quality": quality_backend.descriptor()
                if hasattr(quality_backend, "descriptor")
                else str(quality_backend),
            },
            "decode_mode": backend.decode_mode() if hasattr(backend, "decode_mode") else "greedy",
            "deterministic": True,
            "max_batch": config.max_batch,
        }

    @app.post("/translate")
    def translate(request: TranslateRequest):
        return guard_size(request.batch_id, request.items) or run(
            request.batch_id, backend.translate, request.items
        )

    @app.post("/logprob")
    def logprob(request: LogprobRequest):
        return guard_size(request.batch_id, request.items) or run(
            request.batch_id, backend.logprob, request.items
        )

    @app.post("/quality")
    def quality(request: QualityRequest):
        return guard_size(request.batch_id, request.items) or run(
            request.batch_id, quality_backend.quality, request.items
        )

    return app


def serve(config: GatewayConfig, host: str = "127.0.0.1", port: int = 8040) -> None:
    """Run the gateway; backends are constructed (and models loaded) first."""
    import uvicorn

    app = create_app(config)
    uvicorn.run(app, host=host, port=port, log_level="info")
