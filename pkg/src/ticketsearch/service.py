"""HTTP service surface and startup wiring."""

from __future__ import annotations

from contextlib import asynccontextmanager
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .config import ServiceConfig
from .corpus import format_timestamp
from .embedding import HashingEmbedder, tokenize
from .engine import FilterSet, run_search
from .engine_manager import EngineManager
from .orchestrator import IngestOrchestrator, ValidationError
from .present import present
from .rerank import CoverageReranker
from .variants import QueryError, load_intent_lexicon, load_translation_dictionary


class SearchRequest(BaseModel):
    query: str
    final_k: int | None = None
    department: str | None = None
    date_from: str | None = None
    date_to: str | None = None
    source_types: list[str] | None = None


def _error(status: int, code: str, message: str, field: str | None = None) -> JSONResponse:
    payload = {"error": {"code": code, "message": message}}
    if field:
        payload["error"]["field"] = field
    return JSONResponse(status_code=status, content=payload)


def _parse_date(value: str, *, end: bool) -> datetime:
    value = value.strip()
    try:
        if len(value) == 10:
            d = datetime.strptime(value, "%Y-%m-%d")
            if end:
                d = d.replace(hour=23, minute=59, second=59)
            return d.replace(tzinfo=timezone.utc)
        return datetime.strptime(value, "%Y-%m-%dT%H:%M:%SZ").replace(tzinfo=timezone.utc)
    except ValueError as exc:
        raise ValueError(f"invalid date {value!r} (expected YYYY-MM-DD)") from exc


def create_app(
    config: ServiceConfig | None = None,
    data_dir="data",
    *,
    embedder=None,
    reranker=None,
) -> FastAPI:
    config = config or ServiceConfig()
    data_dir = Path(data_dir)
    embedder = embedder or HashingEmbedder()
    reranker = reranker or CoverageReranker()
    manager = EngineManager(embedder)
    orchestrator = IngestOrchestrator(data_dir, config, manager, embedder)
    lexicon = load_intent_lexicon(config.variants.lexicon_path)
    dictionary = load_translation_dictionary(config.variants.dictionary_path)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        orchestrator.ensure_artifact()
        orchestrator.start()
        yield
        orchestrator.stop()

    app = FastAPI(title="ticketsearch", lifespan=lifespan)
    app.state.orchestrator = orchestrator
    app.state.engine_manager = manager
    app.state.config = config

    if config.server.cors_origins:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=list(config.server.cors_origins),
            allow_methods=["*"],
            allow_headers=["*"],
        )

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        first = exc.errors()[0] if exc.errors() else {}
        field = ".".join(str(p) for p in first.get("loc", ())[1:]) or None
        return _error(400, "invalid_request", first.get("msg", "invalid request"), field)

    @app.get("/health")
    def health():
        snapshot = manager.snapshot()
        return {
            "status": "ok",
            "generation": snapshot.generation,
            "documents": snapshot.size,
            "embedder_id": embedder.identity,
            "reranker_id": reranker.identity,
        }

    @app.post("/search")
    def search(body: SearchRequest):
        if not body.query.strip():
            return _error(400, "invalid_request", "empty query", "query")
        try:
            date_from = _parse_date(body.date_from, end=False) if body.date_from else None
            date_to = _parse_date(body.date_to, end=True) if body.date_to else None
        except ValueError as exc:
            return _error(400, "invalid_request", str(exc), "date_from")
        if date_from and date_to and date_from > date_to:
            return _error(400, "invalid_request", "date_from is after date_to", "date_from")
        if body.department is not None and body.department not in config.departments:
            return _error(
                400, "invalid_request",
                f"unknown department {body.department!r}", "department",
            )
        if body.source_types is not None:
            from .corpus import SOURCE_TYPES

            for st in body.source_types:
                if st not in SOURCE_TYPES:
                    return _error(
                        400, "invalid_request", f"unknown source_type {st!r}", "source_types"
                    )
        filters = FilterSet(
            department=body.department,
            date_from=date_from,
            date_to=date_to,
            source_types=frozenset(body.source_types) if body.source_types else None,
        )

        cfg = config.retrieval
        if body.final_k is not None:
            if body.final_k < 1:
                return _error(400, "invalid_request", "final_k must be >= 1", "final_k")
            cfg = replace(
                cfg,
                final_k=body.final_k,
                rerank_top_n=max(cfg.rerank_top_n, body.final_k),
            )

        snapshot = manager.snapshot()
        try:
            outcome = run_search(
                snapshot, body.query, filters, cfg, embedder, reranker,
                lexicon, dictionary, config.variants.weights,
                typo_min_frequency=config.variants.typo_min_frequency,
            )
        except QueryError as exc:
            return _error(400, "invalid_request", str(exc), "query")

        results = present(
            outcome.candidates,
            snapshot.records,
            cfg.final_k,
            outcome.candidates_for,
            rt_base_url=config.server.rt_base_url,
            query_tokens=tokenize(body.query),
            max_rounds=cfg.max_overfetch_rounds,
        )
        payload = {
            "results": [
                {
                    "ticket_id": r.ticket_id,
                    "score": r.score,
                    "snippet": r.snippet,
                    "title": r.title,
                    "department": r.department,
                    "last_updated": format_timestamp(r.last_updated),
                    "source_type": r.source_type,
                    "link": r.link,
                }
                for r in results
            ],
            "generation": snapshot.generation,
            "timings": {k: round(v, 6) for k, v in outcome.timings.items()},
        }
        if outcome.reranker_fallback:
            payload["warning"] = "reranker unavailable; results use fused order"
        return payload

    def _submit(kind: str, body: dict):
        try:
            job_id = orchestrator.submit_job(kind, body)
        except ValidationError as exc:
            return _error(400, "invalid_request", str(exc), exc.field)
        return JSONResponse(status_code=202, content={"job_id": job_id})

    @app.post("/ingest/rt-weekly")
    def ingest_rt_weekly(body: dict):
        return _submit("rt_weekly", body)

    @app.post("/ingest/web")
    def ingest_web(body: dict):
        return _submit("web", body)

    @app.post("/ingest/pdf")
    def ingest_pdf(body: dict):
        return _submit("pdf", body)

    @app.post("/ingest/repo-docs")
    def ingest_repo_docs(body: dict):
        return _submit("repo_docs", body)

    @app.get("/jobs")
    def jobs():
        return {"jobs": [m.to_dict() for m in orchestrator.list_jobs()]}

    @app.get("/jobs/{job_id}")
    def job(job_id: str):
        try:
            return orchestrator.load_manifest(job_id).to_dict()
        except KeyError:
            return _error(404, "not_found", f"unknown job {job_id!r}")

    return app
