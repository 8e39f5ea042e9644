"""HTTP API exposing the engine to the companion UI and scripted clients.

Single-process service: one background worker pool executes long-running jobs
(embed, audit, adapter training, projection); per-project writer locks
serialize mutations; reads are cheap re-loads from disk. Mutating endpoints
honor optimistic concurrency via If-Match revision headers where stated.
"""
from __future__ import annotations

import itertools
import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import Body, FastAPI, Header, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, PlainTextResponse, Response
from pydantic import BaseModel, Field

from . import adapter as adapter_mod
from . import audit as audit_mod
from . import classifier, flows
from . import metrics as metrics_mod
from .corpus import ImportMapping, export_responses, load_project
from .embedder import INSTRUCTION_PRESETS, ProviderConfig
from .errors import (
    ConfigurationError,
    ConflictError,
    EngineError,
    IntegrityError,
    StaleRevisionError,
    TransportError,
    ValidationError,
)

_STATUS_BY_CODE = {
    ConflictError: 409,
    StaleRevisionError: 409,
    IntegrityError: 500,
    TransportError: 502,
    ValidationError: 422,
}


def _status_for(exc: EngineError) -> int:
    for klass, status in _STATUS_BY_CODE.items():
        if isinstance(exc, klass):
            return status
    return 400


@dataclass
class Job:
    id: str
    kind: str
    state: str = "queued"  # queued -> running -> done | failed
    progress: float = 0.0
    result_ref: dict | None = None
    error: str | None = None
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def transition(self, state: str, progress: float | None = None) -> None:
        allowed = {"queued": {"running"}, "running": {"done", "failed"}}
        with self._lock:
            if state != self.state and state not in allowed.get(self.state, set()):
                raise IntegrityError(f"job {self.id} cannot move {self.state} -> {state}")
            self.state = state
            if progress is not None:
                self.progress = max(self.progress, progress)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "state": self.state,
            "progress": self.progress,
            "result_ref": self.result_ref,
            "error": self.error,
        }


class JobRegistry:
    def __init__(self, workers: int = 2):
        self._jobs: dict[str, Job] = {}
        self._counter = itertools.count(1)
        self._lock = threading.Lock()
        self._pool = ThreadPoolExecutor(max_workers=workers)

    def submit(self, kind: str, fn) -> Job:
        with self._lock:
            job = Job(id=f"job-{next(self._counter)}", kind=kind)
            self._jobs[job.id] = job

        def run() -> None:
            job.transition("running", 0.1)
            try:
                result = fn()
            except Exception as exc:  # job isolation: failure leaves state alone
                job.error = f"{type(exc).__name__}: {exc}"
                job.transition("failed")
                return
            job.result_ref = result
            job.transition("done", 1.0)

        self._pool.submit(run)
        return job

    def get(self, job_id: str) -> Job:
        job = self._jobs.get(job_id)
        if job is None:
            raise ValidationError(f"unknown job {job_id!r}")
        return job


class ProjectStore:
    """Resolves project ids to directories and serializes writers per project."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.RLock] = {}
        self._locks_guard = threading.Lock()

    def lock(self, project_id: str) -> threading.RLock:
        with self._locks_guard:
            return self._locks.setdefault(project_id, threading.RLock())

    def dir_for(self, project_id: str, must_exist: bool = True) -> Path:
        safe = all(ch.isalnum() or ch in "-_." for ch in project_id)
        if not project_id or not safe:
            raise ValidationError(f"invalid project id {project_id!r}")
        path = self.root / project_id
        if must_exist and not (path / "manifest.json").exists():
            raise ValidationError(f"unknown project {project_id!r}")
        return path


class CreateProject(BaseModel):
    name: str = Field(min_length=1, pattern=r"^[A-Za-z0-9._-]+$")


class ClassifyBody(BaseModel):
    mode: str = "selective"
    temperature: float = 1.0


class EmbedBody(BaseModel):
    instruction_preset: str | None = None


class AuditBody(BaseModel):
    threshold: float = 0.15
    code_source: str = "human"


class ResolutionItem(BaseModel):
    response_id: str
    new_code: str
    resolver: str = ""
    note: str = ""


class ResolutionsBody(BaseModel):
    resolutions: list[ResolutionItem]


class AdapterTrainBody(BaseModel):
    hyperparams: dict | None = None
    apply: bool = False


class ProjectionBody(BaseModel):
    method: str = "pca"
    params: dict = Field(default_factory=dict)


def create_app(
    store_dir: str | Path,
    provider_config: ProviderConfig | None = None,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="embedcode", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
        expose_headers=["ETag"],
    )
    store = ProjectStore(store_dir)
    jobs = JobRegistry()

    @app.exception_handler(EngineError)
    async def engine_error_handler(_req: Request, exc: EngineError):
        return JSONResponse(
            status_code=_status_for(exc),
            content={"code": exc.code, "message": str(exc), "details": {}},
        )

    @app.exception_handler(RequestValidationError)
    async def validation_handler(_req: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=422,
            content={
                "code": "validation",
                "message": "request body failed validation",
                "details": {"errors": exc.errors()},
            },
        )

    def canonical(payload: str) -> Response:
        return Response(content=payload, media_type="application/json")

    @app.get("/health")
    @app.get("/api/v1/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.post("/api/v1/projects", status_code=201)
    def create_project(body: CreateProject) -> dict:
        path = store.dir_for(body.name, must_exist=False)
        with store.lock(body.name):
            project = flows.init_project(path, body.name)
        return {"id": project.id, "revision": project.revision}

    @app.get("/api/v1/projects/{pid}")
    def get_project(pid: str) -> dict:
        project = load_project(store.dir_for(pid))
        return {
            "id": project.id,
            "revision": project.revision,
            "responses": len(project.responses),
            "codebook": project.codebook.to_json() if project.codebook else None,
            "embed_run": project.embed_run,
            "assignments": len(project.assignments),
            "has_audit": project.audit_state is not None,
        }

    @app.post("/api/v1/projects/{pid}/responses")
    async def upload_responses(
        pid: str,
        request: Request,
        format: str = Query("csv"),
        id_column: str = Query("id"),
        text_column: str = Query("text"),
        code_column: str | None = Query(None),
        synthesize_ids: bool = Query(False),
    ) -> dict:
        body = (await request.body()).decode("utf-8")
        mapping = ImportMapping(
            text_column=text_column,
            id_column=None if synthesize_ids else id_column,
            code_column=code_column,
        )
        with store.lock(pid):
            return flows.do_import(
                store.dir_for(pid), source="", fmt=format, mapping=mapping, text=body
            )

    @app.put("/api/v1/projects/{pid}/codebook")
    def put_codebook(pid: str, body: dict = Body(...)) -> dict:
        with store.lock(pid):
            return flows.do_set_codebook(store.dir_for(pid), body)

    @app.post("/api/v1/projects/{pid}/embed", status_code=202)
    def start_embed(pid: str, body: EmbedBody | None = None) -> dict:
        path = store.dir_for(pid)
        if provider_config is None:
            raise ConfigurationError("service started without an embedding provider")
        preset = body.instruction_preset if body else None
        if preset is not None and preset not in INSTRUCTION_PRESETS:
            raise ValidationError(f"unknown instruction preset {preset!r}")

        def work() -> dict:
            with store.lock(pid):
                return flows.do_embed(path, provider_config, instruction_preset=preset)

        return jobs.submit("embed", work).to_json()

    @app.post("/api/v1/projects/{pid}/classify")
    def classify(pid: str, body: ClassifyBody) -> dict:
        with store.lock(pid):
            return flows.do_classify(
                store.dir_for(pid), mode=body.mode, temperature=body.temperature
            )

    @app.get("/api/v1/projects/{pid}/assignments")
    def get_assignments(pid: str, format: str = Query("json")) -> Response:
        project = load_project(store.dir_for(pid))
        if format == "csv":
            return PlainTextResponse(
                content=classifier.assignments_csv(project), media_type="text/csv"
            )
        if format == "jsonl":
            return PlainTextResponse(
                content=classifier.assignments_jsonl(project),
                media_type="application/x-ndjson",
            )
        docs = [
            project.assignments[r.id].to_json()
            for r in project.responses
            if r.id in project.assignments
        ]
        return canonical(json.dumps(docs, sort_keys=True, indent=2) + "\n")

    @app.get("/api/v1/projects/{pid}/metrics")
    def get_metrics(pid: str, drop: str | None = Query(None)) -> Response:
        project = load_project(store.dir_for(pid))
        requested = set(drop.split(",")) if drop else set()
        report = classifier.evaluate_assignments(project, drop_categories=requested)
        return canonical(metrics_mod.report_json(report))

    @app.post("/api/v1/projects/{pid}/audit", status_code=202)
    def start_audit(pid: str, body: AuditBody | None = None) -> dict:
        path = store.dir_for(pid)
        opts = body or AuditBody()

        def work() -> dict:
            with store.lock(pid):
                report = flows.do_audit(
                    path, threshold=opts.threshold, code_source=opts.code_source
                )
            return {"kind": "audit", "project": pid, "flags": len(report.flags)}

        return jobs.submit("audit", work).to_json()

    @app.get("/api/v1/projects/{pid}/audit")
    def get_audit(pid: str, format: str = Query("json")) -> Response:
        project = load_project(store.dir_for(pid))
        if project.audit_state is None:
            raise ValidationError(f"project {pid!r} has no audit report yet")
        if format == "csv":  # reviewer-facing export for offline review
            return PlainTextResponse(
                content=audit_mod.audit_csv(project, project.audit_state),
                media_type="text/csv",
            )
        return canonical(audit_mod.report_json(project.audit_state))

    @app.get("/api/v1/projects/{pid}/audit/summary")
    def get_audit_summary(pid: str) -> dict:
        project = load_project(store.dir_for(pid))
        if project.audit_state is None:
            raise ValidationError(f"project {pid!r} has no audit report yet")
        summary = audit_mod.audit_summary(project, project.audit_state, project.resolutions)
        return {"project": pid, "revision": project.revision, **summary.to_json()}

    @app.post("/api/v1/projects/{pid}/audit/resolutions")
    def post_resolutions(
        pid: str,
        body: ResolutionsBody,
        if_match: str | None = Header(None, alias="If-Match"),
    ) -> dict:
        if if_match is None:
            raise ValidationError(
                "If-Match header (current project revision) is required for resolutions"
            )
        try:
            expected = int(if_match.strip('"'))
        except ValueError:
            raise ValidationError(f"If-Match must be an integer revision, got {if_match!r}")
        path = store.dir_for(pid)
        with store.lock(pid):
            project = load_project(path)
            index = project.response_index()
            stray = [r.response_id for r in body.resolutions if r.response_id not in index]
            if stray:
                raise ValidationError(f"resolutions reference unknown responses: {stray[:10]}")
            resolutions = [
                audit_mod.Resolution(
                    response_id=r.response_id,
                    old_code=index[r.response_id].human_code,
                    new_code=r.new_code,
                    resolver=r.resolver,
                    note=r.note,
                )
                for r in body.resolutions
            ]
            return flows.do_resolutions(path, resolutions, expected_revision=expected)

    @app.post("/api/v1/projects/{pid}/adapter/train", status_code=202)
    def start_adapter_train(pid: str, body: AdapterTrainBody | None = None) -> dict:
        path = store.dir_for(pid)
        opts = body or AdapterTrainBody()
        hp = (
            adapter_mod.AdapterHyperparams.from_json(opts.hyperparams)
            if opts.hyperparams
            else None
        )

        def work() -> dict:
            with store.lock(pid):
                result = flows.do_adapter_train(path, hp)
                if opts.apply:
                    result["applied"] = flows.do_adapter_apply(path)
            return result

        return jobs.submit("adapter_train", work).to_json()

    @app.post("/api/v1/projects/{pid}/projection", status_code=202)
    def start_projection(pid: str, body: ProjectionBody | None = None) -> dict:
        path = store.dir_for(pid)
        opts = body or ProjectionBody()
        params = opts.params

        def work() -> dict:
            with store.lock(pid):
                return flows.do_projection(
                    path,
                    method=opts.method,
                    perplexity=float(params.get("perplexity", 30.0)),
                    iterations=int(params.get("iterations", 1000)),
                    seed=int(params.get("seed", 42)),
                )

        return jobs.submit("projection", work).to_json()

    @app.get("/api/v1/projects/{pid}/projection")
    def get_projection(pid: str) -> Response:
        doc = flows.load_projection_doc(store.dir_for(pid))
        if doc is None:
            raise ValidationError(f"project {pid!r} has no projection yet")
        return canonical(json.dumps(doc, sort_keys=True, indent=2) + "\n")

    @app.get("/api/v1/jobs/{job_id}")
    def get_job(job_id: str) -> dict:
        return jobs.get(job_id).to_json()

    @app.get("/api/v1/projects/{pid}/export")
    def export(pid: str, format: str = Query("csv")) -> PlainTextResponse:
        project = load_project(store.dir_for(pid))
        text = export_responses(project, fmt=format)
        media = "text/csv" if format == "csv" else "application/x-ndjson"
        return PlainTextResponse(content=text, media_type=media)

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def serve(
    addr: str,
    store_dir: str | Path,
    provider_config: ProviderConfig | None = None,
    ui_dir: str | Path | None = None,
) -> None:
    import uvicorn

    host, _, port = addr.partition(":")
    app = create_app(store_dir, provider_config=provider_config, ui_dir=ui_dir)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8765), log_level="warning")
