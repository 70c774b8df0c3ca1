"""HTTP service over the engine core.

Ingestion runs as asynchronous jobs (summary-tree builds can take minutes);
querying and trace retrieval are synchronous. Every error body carries a
machine-readable code plus a human message. Crash safety comes for free from
the registry's atomic commit: a killed build leaves nothing registered.
"""

from __future__ import annotations

import os
import tempfile
import threading
import uuid
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .config import EngineConfig
from .corpus import SourceDocument
from .engine import Engine
from .errors import (
    DuplicateKb,
    GridCodexError,
    ParseError,
    UnknownMode,
    UnknownRegion,
)
from .evaluation import EvalItem, run_benchmark
from .qa import MODES

STATUS_BY_CODE = {
    "unknown_region": 400,
    "unknown_mode": 400,
    "empty_document": 400,
    "parse_error": 400,
    "budget_too_small": 400,
    "config_error": 400,
    "missing_gold": 400,
    "empty_index": 400,
    "duplicate_kb": 409,
    "transport_error": 503,
    "auth_error": 503,
    "context_length_exceeded": 503,
}


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"code": code, "message": message})


class DocumentIn(BaseModel):
    doc_id: str
    title: str
    body: str
    language: str = "en"


class FileIn(BaseModel):
    name: str
    content: str


class KbCreateIn(BaseModel):
    kb_id: str
    kind: str  # factual | terminology
    region: str
    language: str = "en"
    force: bool = False
    documents: list[DocumentIn] = Field(default_factory=list)  # factual
    files: list[FileIn] = Field(default_factory=list)  # terminology


class QueryIn(BaseModel):
    question: str
    region: str
    mode: str = "gridcodex"
    k: int | None = None


class EvalIn(BaseModel):
    items: list[dict]
    modes: list[str] = Field(default_factory=lambda: list(MODES))


class JobBook:
    """In-memory job table; job state survives only as long as the process,
    but the artifacts (KBs, reports) are file-backed."""

    def __init__(self):
        self._jobs: dict[str, dict] = {}
        self._lock = threading.Lock()

    def create(self, kind: str, **extra) -> str:
        job_id = uuid.uuid4().hex
        with self._lock:
            self._jobs[job_id] = {
                "job_id": job_id, "kind": kind, "state": "pending",
                "progress": [], "error": None, **extra,
            }
        return job_id

    def update(self, job_id: str, **fields) -> None:
        with self._lock:
            self._jobs[job_id].update(fields)

    def push_progress(self, job_id: str, stage: str) -> None:
        with self._lock:
            self._jobs[job_id]["progress"].append(stage)

    def get(self, job_id: str) -> dict | None:
        with self._lock:
            job = self._jobs.get(job_id)
            return dict(job) if job else None


def create_app(engine: Engine) -> FastAPI:
    app = FastAPI(title="gridcodex", version="1.0")
    jobs = JobBook()
    reports: dict[str, dict] = {}
    bearer = ""
    if engine.config.bearer_token_env:
        bearer = os.environ.get(engine.config.bearer_token_env, "")

    @app.exception_handler(GridCodexError)
    async def on_engine_error(request: Request, exc: GridCodexError):
        return _error(STATUS_BY_CODE.get(exc.code, 500), exc.code, str(exc))

    @app.middleware("http")
    async def check_bearer(request: Request, call_next):
        if bearer and request.url.path.startswith("/v1"):
            header = request.headers.get("authorization", "")
            if header != f"Bearer {bearer}":
                return _error(401, "auth_error", "missing or invalid bearer token")
        return await call_next(request)

    # The web console is served from a different origin than the API.
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    # -- knowledge bases -----------------------------------------------------

    @app.post("/v1/kb", status_code=202)
    def create_kb(body: KbCreateIn):
        if body.kind not in ("factual", "terminology"):
            return _error(400, "config_error", f"unknown kb kind {body.kind!r}")
        if body.kind == "factual" and not body.documents:
            return _error(400, "empty_document", "factual KB requires documents")
        if body.kind == "terminology" and not body.files:
            return _error(400, "parse_error", "terminology KB requires files")
        if engine.registry.exists(body.kb_id) and not body.force:
            return _error(409, "duplicate_kb", f"kb {body.kb_id} already exists")
        if not engine.acquire_build(body.kb_id):
            return _error(409, "duplicate_kb", f"kb {body.kb_id} is already building")

        job_id = jobs.create("kb_build", kb_id=body.kb_id)

        def work():
            jobs.update(job_id, state="running")
            try:
                if body.kind == "factual":
                    docs = [
                        SourceDocument(
                            doc_id=d.doc_id, region=body.region, language=d.language,
                            title=d.title, body=d.body,
                        )
                        for d in body.documents
                    ]
                    engine.ingest_factual(
                        docs, kb_id=body.kb_id, region=body.region,
                        language=body.language, force=body.force,
                        progress=lambda s: jobs.push_progress(job_id, s),
                        acquire=False,
                    )
                else:
                    with tempfile.TemporaryDirectory() as tmp:
                        paths = []
                        for f in body.files:
                            path = Path(tmp) / Path(f.name).name
                            path.write_text(f.content, encoding="utf-8")
                            paths.append(path)
                        engine.ingest_terminology(
                            paths, kb_id=body.kb_id, region=body.region,
                            language=body.language, force=body.force, acquire=False,
                        )
                jobs.update(job_id, state="done")
            except Exception as exc:
                jobs.update(job_id, state="failed", error=f"{type(exc).__name__}: {exc}")
            finally:
                engine.release_build(body.kb_id)

        threading.Thread(target=work, daemon=True).start()
        return {"kb_id": body.kb_id, "job_id": job_id}

    @app.get("/v1/kb")
    def list_kb():
        return {"kbs": engine.registry.list()}

    @app.get("/v1/jobs/{job_id}")
    def get_job(job_id: str):
        job = jobs.get(job_id)
        if job is None:
            return _error(404, "unknown_job", f"no job {job_id}")
        return job

    # -- querying ------------------------------------------------------------

    @app.post("/v1/query")
    def query(body: QueryIn):
        if body.mode not in MODES:
            raise UnknownMode(f"unknown mode {body.mode!r}; expected one of {MODES}")
        if body.k is not None and body.k < 1:
            return _error(400, "config_error", "k must be >= 1")
        trace = engine.answer_query(body.question, body.region, body.mode, k=body.k)
        hits_by_id = {h["chunk_id"]: h for h in trace.retrieval_hits}
        citations = [
            {
                "chunk_id": cid,
                "clause_path": hits_by_id[cid]["clause_path"],
                "quote": hits_by_id[cid]["text"],
            }
            for cid in trace.cited_chunk_ids
            if cid in hits_by_id
        ]
        return {
            "answer": trace.answer,
            "abstained": trace.abstained,
            "citations": citations,
            "trace_id": trace.trace_id,
        }

    @app.get("/v1/traces/{trace_id}")
    def get_trace(trace_id: str):
        try:
            return engine.traces.load(trace_id).to_dict()
        except KeyError:
            return _error(404, "unknown_trace", f"no trace {trace_id}")

    # -- evaluation ----------------------------------------------------------

    @app.post("/v1/eval", status_code=202)
    def start_eval(body: EvalIn):
        for mode in body.modes:
            if mode not in MODES:
                raise UnknownMode(f"unknown mode {mode!r}")
        try:
            dataset = [EvalItem.from_dict(d) for d in body.items]
        except KeyError as exc:
            raise ParseError(f"dataset record missing field {exc}")
        if not dataset:
            return _error(400, "parse_error", "eval requires at least one item")

        job_id = jobs.create("eval")
        out_dir = Path(engine.config.data_dir) / "reports" / job_id

        def work():
            jobs.update(job_id, state="running")
            try:
                report = run_benchmark(dataset, list(body.modes), engine, out_dir)
                reports[job_id] = report.to_dict()
                jobs.update(job_id, state="done")
            except Exception as exc:
                jobs.update(job_id, state="failed", error=f"{type(exc).__name__}: {exc}")

        threading.Thread(target=work, daemon=True).start()
        return {"job_id": job_id}

    @app.get("/v1/reports/{job_id}")
    def get_report(job_id: str):
        if job_id in reports:
            return reports[job_id]
        job = jobs.get(job_id)
        if job is None or job["kind"] != "eval":
            return _error(404, "unknown_report", f"no report {job_id}")
        if job["state"] == "failed":
            return _error(500, "eval_failed", job["error"] or "evaluation failed")
        return _error(409, "report_not_ready", f"report {job_id} is {job['state']}")

    # -- meta ----------------------------------------------------------------

    @app.get("/v1/health")
    def health():
        providers = {"embedder": {"type": type(engine.providers.embedder).__name__, "status": "ok"}}
        for role, chat in engine.providers.chats.items():
            status = "ok"
            if hasattr(chat, "cfg") and getattr(chat.cfg, "api_key_env", ""):
                status = "ok" if os.environ.get(chat.cfg.api_key_env) else "degraded"
            providers[role] = {"type": type(chat).__name__, "status": status}
        degraded = any(p["status"] != "ok" for p in providers.values())
        return {"status": "degraded" if degraded else "ok", "providers": providers}

    @app.get("/v1/openapi")
    def openapi_doc():
        return app.openapi()

    return app


def serve(config: EngineConfig) -> None:
    """Blocking entry point used by the CLI."""
    import uvicorn

    engine = Engine(config)
    app = create_app(engine)
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
