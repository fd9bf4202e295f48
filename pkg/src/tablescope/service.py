"""HTTP service: ingestion, parsing, retrieval, and the annotation workflow.

Projects hold one document and at least two annotators. Labels flow through
an append-only event log with optimistic concurrency; conflicts are derived
from current labels, resolved jointly, and a finalized project exports
byte-stable consensus triplets. Parsing and retrieval are stateless wrappers
around the engine modules.
"""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from fastapi import FastAPI, Request, Response

from .association import (
    HeuristicScorer,
    RemoteScorer,
    ScorerConfig,
    ScorerError,
    ScorerKind,
)
from .dataset import AnnotationTriplet, CONSENSUS_ANNOTATOR, completeness_check, triplets_to_jsonl
from .model import (
    Block,
    BlockType,
    Document,
    IngestError,
    TEXTUAL_KINDS,
    canonical_json_bytes,
    document_from_dict,
    select_blocks,
)
from .parsing import parse_semantics, parsed_to_dict
from .retrieval import EmptyQueryError, InvalidK, Query, ranking_to_dict, retrieve
from .store import EventStore


class ApiError(Exception):
    def __init__(self, code: str, detail: str, status: int):
        super().__init__(detail)
        self.code = code
        self.detail = detail
        self.status = status


def _error(code: str, detail: str, status: int) -> ApiError:
    return ApiError(code, detail, status)


@dataclass
class LabelSlot:
    label: str = ""
    revision: int = 0
    history: dict[int, str] = field(default_factory=dict)


@dataclass
class ProjectState:
    project_id: str
    doc: Document
    annotators: list[str]
    status: str = "Open"  # Open | Reconciling | Finalized
    labels: dict[tuple[str, str, str], LabelSlot] = field(default_factory=dict)
    resolutions: dict[tuple[str, str], tuple[str, str]] = field(default_factory=dict)

    def tables(self) -> list[Block]:
        return select_blocks(self.doc, {BlockType.TABLE})

    def candidates(self) -> list[Block]:
        return select_blocks(self.doc, TEXTUAL_KINDS)

    def pair_labels(self, table_id: str, text_id: str) -> dict[str, str]:
        out = {}
        for annotator in self.annotators:
            slot = self.labels.get((annotator, table_id, text_id))
            if slot is not None and slot.revision > 0:
                out[annotator] = slot.label
        return out

    def conflicts(self, include_resolved: bool = False) -> list[dict]:
        """Pairs labeled by every annotator with non-unanimous current labels."""
        out = []
        for table in self.tables():
            for text in self.candidates():
                labels = self.pair_labels(table.block_id, text.block_id)
                if len(labels) < len(self.annotators):
                    continue
                if len(set(labels.values())) <= 1:
                    continue
                resolution = self.resolutions.get((table.block_id, text.block_id))
                if resolution is not None and not include_resolved:
                    continue
                out.append(
                    {
                        "table_id": table.block_id,
                        "text_block_id": text.block_id,
                        "labels": labels,
                        "resolution": resolution[0] if resolution else None,
                        "note": resolution[1] if resolution else None,
                    }
                )
        return out

    def consensus_triplets(self) -> list[AnnotationTriplet]:
        """Unanimous related labels plus conflict resolutions, one per table."""
        triplets = []
        for table in self.tables():
            related = set()
            for text in self.candidates():
                pair = (table.block_id, text.block_id)
                resolution = self.resolutions.get(pair)
                if resolution is not None:
                    if resolution[0] == "related":
                        related.add(text.block_id)
                    continue
                labels = self.pair_labels(*pair)
                if labels and len(labels) == len(self.annotators) and set(labels.values()) == {"related"}:
                    related.add(text.block_id)
            triplets.append(
                AnnotationTriplet(
                    doc_id=self.doc.doc_id,
                    table_id=table.block_id,
                    page_id=table.page_id,
                    related_paragraphs=frozenset(related),
                    annotator_id=CONSENSUS_ANNOTATOR,
                )
            )
        return triplets

    def incomplete_pairs(self) -> int:
        count = 0
        for table in self.tables():
            for text in self.candidates():
                if len(self.pair_labels(table.block_id, text.block_id)) < len(self.annotators):
                    count += 1
        return count


class AnnotationService:
    """Event-sourced project state behind a lock; reads are snapshot-consistent."""

    def __init__(self, store: EventStore):
        self.store = store
        self.projects: dict[str, ProjectState] = {}
        self.lock = threading.RLock()
        for event in store.events():
            self._apply(event)

    # -- event application -------------------------------------------------

    def _apply(self, event: dict) -> None:
        kind = event["type"]
        if kind == "project_created":
            doc = document_from_dict(event["doc"])
            self.projects[event["project_id"]] = ProjectState(
                project_id=event["project_id"], doc=doc, annotators=list(event["annotators"])
            )
        elif kind == "label_submitted":
            project = self.projects[event["project_id"]]
            key = (event["annotator_id"], event["table_id"], event["text_block_id"])
            slot = project.labels.setdefault(key, LabelSlot())
            slot.label = event["label"]
            slot.revision = event["revision"]
            slot.history[event["revision"]] = event["label"]
        elif kind == "conflict_resolved":
            project = self.projects[event["project_id"]]
            project.resolutions[(event["table_id"], event["text_block_id"])] = (
                event["final_label"],
                event["note"],
            )
            project.status = "Reconciling"
        elif kind == "project_finalized":
            self.projects[event["project_id"]].status = "Finalized"
        else:
            raise ValueError(f"unknown event type {kind!r}")

    def _commit(self, event: dict) -> None:
        self.store.append(event)
        self._apply(event)

    # -- operations ---------------------------------------------------------

    def _project(self, project_id: str) -> ProjectState:
        project = self.projects.get(project_id)
        if project is None:
            raise _error("UnknownProject", f"no project {project_id!r}", 404)
        return project

    def create_project(self, doc_dict: dict, annotators: list[str]) -> ProjectState:
        if len(annotators) < 2:
            raise _error("TooFewAnnotators", "a project needs at least two annotators", 400)
        if len(set(annotators)) != len(annotators):
            raise _error("ValidationError", "annotator ids must be unique", 400)
        doc = document_from_dict(doc_dict)
        project_id = uuid.uuid4().hex[:12]
        with self.lock:
            self._commit(
                {
                    "type": "project_created",
                    "project_id": project_id,
                    "doc": doc_dict,
                    "annotators": list(annotators),
                    "ts": time.time(),
                }
            )
            return self.projects[project_id]

    def submit_label(
        self,
        project_id: str,
        annotator_id: str,
        table_id: str,
        text_block_id: str,
        label: str,
        revision: int | None,
    ) -> dict:
        with self.lock:
            project = self._project(project_id)
            if project.status != "Open":
                raise _error("ProjectClosed", f"project is {project.status}; labels need an Open project", 409)
            if annotator_id not in project.annotators:
                raise _error("UnknownAnnotator", f"{annotator_id!r} is not on this project", 403)
            if label not in ("related", "unrelated"):
                raise _error("ValidationError", "label must be 'related' or 'unrelated'", 400)
            table_ids = {b.block_id for b in project.tables()}
            text_ids = {b.block_id for b in project.candidates()}
            if table_id not in table_ids:
                raise _error("UnknownBlock", f"no Table block {table_id!r}", 404)
            if text_block_id not in text_ids:
                raise _error("UnknownBlock", f"no Text/List block {text_block_id!r}", 404)

            slot = project.labels.get((annotator_id, table_id, text_block_id), LabelSlot())
            current = slot.revision
            if revision is None:
                revision = current + 1
            elif revision == current and slot.history.get(revision) == label:
                # exact retry of the latest write
                return {"revision": revision, "idempotent": True}
            elif revision <= current:
                raise _error(
                    "StaleRevision",
                    f"revision {revision} is stale (current is {current})",
                    409,
                )
            elif revision != current + 1:
                raise _error(
                    "StaleRevision",
                    f"revision {revision} skips ahead (current is {current})",
                    409,
                )
            self._commit(
                {
                    "type": "label_submitted",
                    "project_id": project_id,
                    "annotator_id": annotator_id,
                    "table_id": table_id,
                    "text_block_id": text_block_id,
                    "label": label,
                    "revision": revision,
                    "ts": time.time(),
                }
            )
            return {"revision": revision, "idempotent": False}

    def resolve_conflict(
        self, project_id: str, table_id: str, text_block_id: str, final_label: str, note: str
    ) -> dict:
        with self.lock:
            project = self._project(project_id)
            if project.status == "Finalized":
                raise _error("ProjectClosed", "project is Finalized", 409)
            if final_label not in ("related", "unrelated"):
                raise _error("ValidationError", "final_label must be 'related' or 'unrelated'", 400)
            if not note.strip():
                raise _error("ValidationError", "a resolution requires a non-empty note", 400)
            open_pairs = {(c["table_id"], c["text_block_id"]) for c in project.conflicts()}
            if (table_id, text_block_id) not in open_pairs:
                raise _error(
                    "NotInConflict",
                    f"pair ({table_id}, {text_block_id}) is not in conflict",
                    409,
                )
            self._commit(
                {
                    "type": "conflict_resolved",
                    "project_id": project_id,
                    "table_id": table_id,
                    "text_block_id": text_block_id,
                    "final_label": final_label,
                    "note": note,
                    "ts": time.time(),
                }
            )
            return {
                "table_id": table_id,
                "text_block_id": text_block_id,
                "final_label": final_label,
                "note": note,
            }

    def finalize(self, project_id: str, acknowledge_warnings: bool) -> dict:
        with self.lock:
            project = self._project(project_id)
            if project.status == "Finalized":
                raise _error("ProjectClosed", "project is already Finalized", 409)
            pending = project.conflicts()
            if pending:
                raise _error("ConflictsPending", f"{len(pending)} unresolved conflicts", 409)
            warnings = completeness_check(project.doc, project.consensus_triplets())
            incomplete = project.incomplete_pairs()
            if (warnings or incomplete) and not acknowledge_warnings:
                raise _error(
                    "WarningsUnacknowledged",
                    f"{len(warnings)} completeness warnings, {incomplete} unlabeled pairs",
                    409,
                )
            self._commit({"type": "project_finalized", "project_id": project_id, "ts": time.time()})
            return {"status": "Finalized", "warnings": [w.message for w in warnings]}

    def export(self, project_id: str) -> str:
        with self.lock:
            project = self._project(project_id)
            if project.status != "Finalized":
                raise _error("NotFinalized", "export requires a Finalized project", 409)
            return triplets_to_jsonl(project.consensus_triplets())


# ---------------------------------------------------------------------------
# HTTP layer
# ---------------------------------------------------------------------------


def _respond(payload: Any, status: int = 200) -> Response:
    return Response(content=canonical_json_bytes(payload), status_code=status, media_type="application/json")


def _project_payload(project: ProjectState) -> dict:
    warnings = completeness_check(project.doc, project.consensus_triplets())
    return {
        "project_id": project.project_id,
        "doc_id": project.doc.doc_id,
        "annotators": list(project.annotators),
        "status": project.status,
        "n_tasks": len(project.tables()),
        "n_unresolved_conflicts": len(project.conflicts()),
        "n_unlabeled_pairs": project.incomplete_pairs(),
        "completeness_warnings": [w.message for w in warnings],
    }


def _scorer_config_from(body: dict) -> ScorerConfig:
    try:
        return ScorerConfig(
            theta=float(body.get("theta", 0.5)),
            scorer_kind=ScorerKind(body.get("scorer", "heuristic")),
            lexical_weight=float(body.get("lexical_weight", 0.9)),
            remote_endpoint=body.get("endpoint"),
        )
    except ValueError as exc:
        raise _error("ValidationError", str(exc), 400) from None


def _make_scorer(cfg: ScorerConfig):
    if cfg.scorer_kind is ScorerKind.REMOTE:
        return RemoteScorer(cfg)
    if cfg.scorer_kind is ScorerKind.HEURISTIC:
        return HeuristicScorer(cfg)
    raise _error("ValidationError", "service scoring supports 'heuristic' and 'remote'", 400)


def create_app(
    store_path: str | Path | None = None,
    pages_dir: str | Path | None = None,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="tablescope", docs_url=None, redoc_url=None)
    service = AnnotationService(EventStore(store_path))
    app.state.service = service
    pages_root = Path(pages_dir) if pages_dir else None

    @app.exception_handler(ApiError)
    async def _api_error(_request, exc: ApiError):
        return _respond({"error": exc.code, "detail": exc.detail}, status=exc.status)

    @app.exception_handler(IngestError)
    async def _ingest_error(_request, exc: IngestError):
        return _respond({"error": type(exc).__name__, "detail": str(exc)}, status=400)

    async def _body(request: Request) -> dict:
        try:
            data = await request.json()
        except Exception:
            raise _error("ValidationError", "request body must be JSON", 400) from None
        if not isinstance(data, dict):
            raise _error("ValidationError", "request body must be a JSON object", 400)
        return data

    @app.post("/projects")
    async def create_project(request: Request):
        body = await _body(request)
        if "doc" not in body or "annotators" not in body:
            raise _error("ValidationError", "body needs 'doc' and 'annotators'", 400)
        project = service.create_project(body["doc"], list(body["annotators"]))
        return _respond(_project_payload(project), status=201)

    @app.get("/projects/{project_id}")
    async def get_project(project_id: str):
        with service.lock:
            return _respond(_project_payload(service._project(project_id)))

    @app.get("/projects/{project_id}/tasks")
    async def get_tasks(project_id: str, request: Request):
        annotator = request.query_params.get("annotator_id") or request.headers.get("x-annotator-id")
        with service.lock:
            project = service._project(project_id)
            tasks = []
            for table in project.tables():
                candidates = []
                for text in project.candidates():
                    labels = project.pair_labels(table.block_id, text.block_id)
                    if annotator:
                        labels = {a: l for a, l in labels.items() if a == annotator}
                    slot_rev = {
                        a: project.labels[(a, table.block_id, text.block_id)].revision
                        for a in labels
                    }
                    candidates.append(
                        {
                            "text_block_id": text.block_id,
                            "page_id": text.page_id,
                            "text": text.text,
                            "labels": labels,
                            "revisions": slot_rev,
                        }
                    )
                has_image = bool(
                    pages_root
                    and (pages_root / project.doc.doc_id / f"{table.page_id}.png").exists()
                )
                tasks.append(
                    {
                        "task_id": table.block_id,
                        "table_block_id": table.block_id,
                        "page_id": table.page_id,
                        "table_text": table.text,
                        "has_image": has_image,
                        "candidates": candidates,
                    }
                )
            return _respond({"project_id": project_id, "tasks": tasks})

    @app.post("/projects/{project_id}/labels")
    async def post_label(project_id: str, request: Request):
        body = await _body(request)
        annotator = body.get("annotator_id") or request.headers.get("x-annotator-id")
        if not annotator:
            raise _error("ValidationError", "annotator_id required (body or X-Annotator-Id)", 400)
        for key in ("table_id", "text_block_id", "label"):
            if key not in body:
                raise _error("ValidationError", f"body needs {key!r}", 400)
        revision = body.get("revision")
        if revision is not None and (not isinstance(revision, int) or isinstance(revision, bool) or revision < 1):
            raise _error("ValidationError", "revision must be a positive integer", 400)
        result = service.submit_label(
            project_id, annotator, body["table_id"], body["text_block_id"], body["label"], revision
        )
        return _respond(result)

    @app.get("/projects/{project_id}/conflicts")
    async def get_conflicts(project_id: str, request: Request):
        include_resolved = request.query_params.get("include_resolved") in ("1", "true")
        with service.lock:
            project = service._project(project_id)
            return _respond({"project_id": project_id, "conflicts": project.conflicts(include_resolved)})

    @app.post("/projects/{project_id}/conflicts/resolve")
    async def post_resolve(project_id: str, request: Request):
        body = await _body(request)
        for key in ("table_id", "text_block_id", "final_label", "note"):
            if key not in body:
                raise _error("ValidationError", f"body needs {key!r}", 400)
        result = service.resolve_conflict(
            project_id, body["table_id"], body["text_block_id"], body["final_label"], str(body["note"])
        )
        return _respond(result)

    @app.post("/projects/{project_id}/finalize")
    async def post_finalize(project_id: str, request: Request):
        try:
            body = await request.json()
        except Exception:
            body = {}
        if not isinstance(body, dict):
            body = {}
        result = service.finalize(project_id, bool(body.get("acknowledge_warnings", False)))
        return _respond(result)

    @app.get("/projects/{project_id}/export")
    async def get_export(project_id: str):
        payload = service.export(project_id)
        return Response(content=payload.encode("utf-8"), media_type="application/x-ndjson")

    @app.get("/projects/{project_id}/pages/{page_id}/image")
    async def get_page_image(project_id: str, page_id: int):
        with service.lock:
            project = service._project(project_id)
        if pages_root is None:
            raise _error("NoPageImages", "service is running without a page image directory", 404)
        path = pages_root / project.doc.doc_id / f"{page_id}.png"
        if not path.exists():
            raise _error("NoPageImages", f"no image for page {page_id}", 404)
        return Response(content=path.read_bytes(), media_type="image/png")

    @app.post("/parse")
    async def post_parse(request: Request):
        body = await _body(request)
        if "doc" not in body:
            raise _error("ValidationError", "body needs 'doc'", 400)
        doc = document_from_dict(body["doc"])
        cfg = _scorer_config_from(body)
        window = body.get("page_window")
        try:
            parsed = parse_semantics(doc, _make_scorer(cfg), cfg, page_window=window)
        except ScorerError as exc:
            raise _error("ScorerError", str(exc), 502) from None
        return _respond(parsed_to_dict(parsed))

    @app.post("/retrieve")
    async def post_retrieve(request: Request):
        body = await _body(request)
        for key in ("doc", "query"):
            if key not in body:
                raise _error("ValidationError", f"body needs {key!r}", 400)
        doc = document_from_dict(body["doc"])
        cfg = _scorer_config_from(body)
        k = body.get("k", 3)
        scorer = _make_scorer(cfg)
        try:
            query = Query(query_id=str(body.get("query_id", "q")), text=str(body["query"]))
            parsed = parse_semantics(doc, scorer, cfg)
            ranking = retrieve(parsed, doc, query, k, scorer, cfg)
        except (EmptyQueryError, InvalidK) as exc:
            raise _error("ValidationError", str(exc), 400) from None
        except ScorerError as exc:
            raise _error("ScorerError", str(exc), 502) from None
        return _respond(ranking_to_dict(ranking))

    if ui_dir and Path(ui_dir).exists():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    return app
