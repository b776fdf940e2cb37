"""HTTP JSON API for the verification queue, plus static hosting for the UI.

Endpoints:
  GET  /api/items?status=pending&iteration=K
  POST /api/items/{id}/decision   {"decision", "final_text"?, "annotator"}
  GET  /api/progress
  GET  /api/metrics
Errors are 4xx with {"error": str} bodies; an optional shared bearer token
guards every /api route.
"""

from __future__ import annotations

from pathlib import Path
from typing import Callable

from fastapi import FastAPI, Request
from fastapi.responses import FileResponse, JSONResponse
from fastapi.staticfiles import StaticFiles

from .errors import StateError
from .metrics import MetricsReport
from .pool import PoolStore
from .verify import DECISIONS, VerificationQueue


def create_app(
    store: PoolStore,
    queue: VerificationQueue,
    get_metrics: Callable[[], MetricsReport | None] = lambda: None,
    auth_token: str | None = None,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    from fastapi.exceptions import RequestValidationError

    app = FastAPI(title="alforge verification API", docs_url=None, redoc_url=None)

    @app.exception_handler(RequestValidationError)
    async def validation_error(_request: Request, exc: RequestValidationError):
        # Keep the error contract uniform: 4xx with an {"error": str} body.
        return JSONResponse({"error": str(exc.errors()[:1])}, status_code=400)

    def _unauthorized(request: Request) -> JSONResponse | None:
        if auth_token is None:
            return None
        supplied = request.headers.get("authorization", "")
        if supplied == f"Bearer {auth_token}":
            return None
        return JSONResponse({"error": "missing or invalid bearer token"}, status_code=401)

    @app.get("/api/items")
    def list_items(request: Request, status: str | None = None, iteration: int | None = None):
        denied = _unauthorized(request)
        if denied:
            return denied
        items = queue.filter(status=status, iteration=iteration)
        return [item.to_dict() for item in items]

    @app.post("/api/items/{item_id}/decision")
    async def decide(item_id: str, request: Request):
        denied = _unauthorized(request)
        if denied:
            return denied
        try:
            body = await request.json()
        except Exception:
            return JSONResponse({"error": "body must be JSON"}, status_code=400)
        decision = body.get("decision")
        if decision not in DECISIONS:
            return JSONResponse(
                {"error": f"decision must be one of {list(DECISIONS)}"}, status_code=400
            )
        try:
            item = queue.decide(
                item_id,
                decision,
                final_text=body.get("final_text"),
                annotator=body.get("annotator", ""),
            )
        except StateError as exc:
            message = str(exc)
            status_code = 409 if "already decided" in message else 400
            if "unknown verification item" in message:
                status_code = 404
            return JSONResponse({"error": message}, status_code=status_code)
        return item.to_dict()

    @app.get("/api/progress")
    def progress(request: Request):
        denied = _unauthorized(request)
        if denied:
            return denied
        state = store.loop_state
        return {
            "iteration": state.iteration,
            "budget_remaining": state.budget_remaining,
            "batch_size": state.batch_size,
            "strategy": state.strategy,
            "counts": queue.counts(),
            "pool": store.counts(),
            "labeled_pairs": len(store.pairs),
        }

    @app.get("/api/metrics")
    def metrics(request: Request):
        denied = _unauthorized(request)
        if denied:
            return denied
        report = get_metrics()
        if report is None:
            return JSONResponse({"error": "no metrics report yet"}, status_code=404)
        return report.to_dict()

    if ui_dir is not None and Path(ui_dir).exists():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    else:

        @app.get("/")
        def index():
            return FileResponse(Path(__file__).parent / "static" / "index.html")

    return app


def serve(
    store: PoolStore,
    queue: VerificationQueue,
    host: str = "127.0.0.1",
    port: int = 8008,
    get_metrics: Callable[[], MetricsReport | None] = lambda: None,
    auth_token: str | None = None,
    ui_dir: str | Path | None = None,
) -> None:
    import uvicorn

    app = create_app(store, queue, get_metrics, auth_token, ui_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")
