"""HTTP service exposing the edit engine to interactive clients.

State lives in an on-disk store of JSON and PGM files keyed by session and
edit ids, so a restarted process answers identical GET requests for anything
already persisted. Edit jobs run on a bounded thread pool; a per-session lock
serializes writers so concurrent edits on one session queue up instead of
interleaving.
"""

from __future__ import annotations

import base64
import hashlib
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from fastapi import Body, FastAPI, Header, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from .core import (
    DensityField,
    ParseError,
    ProblemSpec,
    field_from_pgm,
    field_to_pgm,
    load_json,
    pgm_to_base64,
    save_bytes,
    save_json,
)
from .corpus import load_item
from .engine import EditEngine, EditRequest, select_best
from .fem import refine
from .metrics import compliance, joint_locations
from .morphology import binarize, medial_axis

SCHEMA = 1


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _new_id(prefix: str) -> str:
    return f"{prefix}_{uuid.uuid4().hex[:12]}"


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


def _not_found(code: str, message: str) -> ApiError:
    return ApiError(404, code, message)


def _invalid(message: str) -> ApiError:
    return ApiError(422, "invalid_request", message)


class SessionStore:
    """Directory of sessions and edit jobs. Every mutation lands on disk
    before the response is sent."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        (self.root / "sessions").mkdir(parents=True, exist_ok=True)
        (self.root / "edits").mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()
        self._idempotency_guard = threading.Lock()

    # -- locking ----------------------------------------------------------
    def session_lock(self, session_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(session_id, threading.Lock())

    # -- sessions ---------------------------------------------------------
    def _session_dir(self, session_id: str) -> Path:
        return self.root / "sessions" / session_id

    def create_session(self, field: DensityField, spec: ProblemSpec) -> str:
        session_id = _new_id("s")
        d = self._session_dir(session_id)
        d.mkdir(parents=True)
        save_bytes(field_to_pgm(field), d / "working.pgm")
        save_json(
            {
                "schema": SCHEMA,
                "id": session_id,
                "created_at": _now(),
                "spec": spec.to_doc(),
                "history": [],
            },
            d / "session.json",
        )
        return session_id

    def session_doc(self, session_id: str) -> dict:
        path = self._session_dir(session_id) / "session.json"
        if not path.exists():
            raise _not_found("unknown_session", f"no session {session_id}")
        return load_json(path)

    def working_field(self, session_id: str) -> DensityField:
        path = self._session_dir(session_id) / "working.pgm"
        if not path.exists():
            raise _not_found("unknown_session", f"no session {session_id}")
        return field_from_pgm(path.read_bytes(), path="working.pgm")

    def session_state(self, session_id: str) -> tuple[DensityField, ProblemSpec]:
        doc = self.session_doc(session_id)
        spec = ProblemSpec.from_doc(doc["spec"], path="session.spec")
        return self.working_field(session_id), spec

    def commit_working(self, session_id: str, field: DensityField, entry: dict) -> None:
        d = self._session_dir(session_id)
        doc = self.session_doc(session_id)
        save_bytes(field_to_pgm(field), d / "working.pgm")
        doc["history"].append({**entry, "at": _now()})
        save_json(doc, d / "session.json")

    # -- edits ------------------------------------------------------------
    def _edit_dir(self, edit_id: str) -> Path:
        return self.root / "edits" / edit_id

    def create_edit(self, session_id: str, request_doc: dict) -> str:
        edit_id = _new_id("e")
        d = self._edit_dir(edit_id)
        d.mkdir(parents=True)
        save_json(
            {
                "schema": SCHEMA,
                "id": edit_id,
                "session_id": session_id,
                "status": "queued",
                "request": request_doc,
                "error": "",
                "created_at": _now(),
            },
            d / "edit.json",
        )
        return edit_id

    def edit_doc(self, edit_id: str) -> dict:
        path = self._edit_dir(edit_id) / "edit.json"
        if not path.exists():
            raise _not_found("unknown_edit", f"no edit {edit_id}")
        return load_json(path)

    def update_edit(self, edit_id: str, **fields: Any) -> None:
        path = self._edit_dir(edit_id) / "edit.json"
        doc = load_json(path)
        doc.update(fields)
        save_json(doc, path)

    def save_result(self, edit_id: str, cs, best_index: int) -> None:
        d = self._edit_dir(edit_id)
        for i, cand in enumerate(cs.candidates):
            save_bytes(field_to_pgm(cand), d / f"candidate_{i:02d}.pgm")
        save_bytes(field_to_pgm(cs.reference), d / "reference.pgm")
        self.update_edit(
            edit_id,
            status="done",
            kind=cs.kind,
            best_index=best_index,
            updated_spec=cs.updated_spec.to_doc(),
            records=[r.to_doc() for r in cs.records],
            finished_at=_now(),
        )

    def candidate_field(self, edit_id: str, index: int) -> DensityField:
        path = self._edit_dir(edit_id) / f"candidate_{index:02d}.pgm"
        if not path.exists():
            raise _invalid(f"candidate_index {index} out of range")
        return field_from_pgm(path.read_bytes(), path=path.name)

    def reference_b64(self, edit_id: str) -> str:
        data = (self._edit_dir(edit_id) / "reference.pgm").read_bytes()
        return base64.b64encode(data).decode("ascii")

    def candidate_b64(self, edit_id: str, index: int) -> str:
        data = (self._edit_dir(edit_id) / f"candidate_{index:02d}.pgm").read_bytes()
        return base64.b64encode(data).decode("ascii")

    def mark_interrupted(self) -> None:
        """Queued or running jobs from a previous process cannot finish."""
        for path in (self.root / "edits").glob("*/edit.json"):
            doc = load_json(path)
            if doc.get("status") in ("queued", "running"):
                doc["status"] = "failed"
                doc["error"] = "interrupted by service restart"
                save_json(doc, path)

    # -- idempotency ------------------------------------------------------
    def idempotent(self, scope: str, key: str | None):
        """Returns (cached_response | None, save_fn). Keys are scoped per
        endpoint so the same key on different routes cannot collide."""
        if not key:
            return None, lambda body: None
        path = self.root / "idempotency.json"
        with self._idempotency_guard:
            table = load_json(path) if path.exists() else {}
        full = f"{scope}:{key}"
        if full in table:
            return table[full], lambda body: None

        def save(body: dict) -> None:
            with self._idempotency_guard:
                current = load_json(path) if path.exists() else {}
                current[full] = body
                save_json(current, path)

        return None, save


def _decode_field(doc: Any, path: str) -> DensityField:
    if isinstance(doc, str):
        try:
            raw = base64.b64decode(doc.encode("ascii"), validate=True)
        except Exception as e:
            raise ParseError(path, f"invalid base64 PGM: {e}") from e
        return field_from_pgm(raw, path=path)
    return DensityField.from_doc(doc, path=path)


def create_app(
    model,
    store_dir: str | Path,
    corpus_dir: str | Path | None = None,
    schedule=None,
    checkpoint_hash: str = "",
    max_workers: int = 2,
) -> FastAPI:
    app = FastAPI(title="topoforge", version="0.1.0")
    store = SessionStore(store_dir)
    store.mark_interrupted()
    engine = EditEngine(model)
    executor = ThreadPoolExecutor(max_workers=max_workers)
    app.state.store = store
    app.state.engine = engine
    app.state.executor = executor

    @app.exception_handler(ApiError)
    async def _api_error(_req: Request, exc: ApiError):
        return JSONResponse(
            status_code=exc.status,
            content={"schema": SCHEMA, "code": exc.code, "message": exc.message},
        )

    @app.exception_handler(RequestValidationError)
    async def _validation_error(_req: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=422,
            content={"schema": SCHEMA, "code": "invalid_request", "message": str(exc.errors())},
        )

    def _ok(body: dict) -> dict:
        return {"schema": SCHEMA, **body}

    # -- meta --------------------------------------------------------------
    @app.get("/healthz")
    def healthz():
        return _ok({"status": "ok"})

    @app.get("/model")
    def model_info():
        body = {
            "architecture": model.architecture(),
            "arch_hash": model.arch_hash(),
            "parameter_count": model.parameter_count(),
            "checkpoint_hash": checkpoint_hash,
        }
        if schedule is not None:
            body["schedule"] = {
                "total_steps": schedule.total_steps,
                "alpha_bar": [float(v) for v in schedule.alpha_bar],
            }
        return _ok(body)

    # -- sessions ----------------------------------------------------------
    @app.post("/sessions", status_code=201)
    def create_session(
        payload: dict = Body(...),
        idempotency_key: str | None = Header(default=None, alias="Idempotency-Key"),
    ):
        cached, save = store.idempotent("POST/sessions", idempotency_key)
        if cached is not None:
            return cached
        try:
            if "corpus_item" in payload:
                if corpus_dir is None:
                    raise _invalid("this server has no corpus configured")
                name = payload["corpus_item"]
                if not isinstance(name, str) or "/" in name or "\\" in name or ".." in name:
                    raise _invalid("corpus_item must be a plain design name")
                field, spec = load_item(corpus_dir, name)
            else:
                if "field" not in payload or "spec" not in payload:
                    raise _invalid("payload needs field+spec or corpus_item")
                field = _decode_field(payload["field"], "field")
                spec = ProblemSpec.from_doc(payload["spec"], path="spec")
        except ParseError as e:
            raise _invalid(str(e)) from e
        session_id = store.create_session(field, spec)
        body = _ok({"session_id": session_id})
        save(body)
        return body

    @app.get("/sessions/{session_id}/topology")
    def topology(session_id: str):
        field, spec = store.session_state(session_id)
        sk = medial_axis(binarize(field))
        try:
            c = compliance(field, spec)
        except Exception:
            c = None
        return _ok(
            {
                "session_id": session_id,
                "width": field.width,
                "height": field.height,
                "field": pgm_to_base64(field),
                "skeleton": base64.b64encode(
                    field_to_pgm(DensityField.from_array(sk.mask.astype(float)))
                ).decode("ascii"),
                "joints": [list(j) for j in joint_locations(field)],
                "compliance": c,
                "volume_fraction": float(field.values.mean()),
                "spec": spec.to_doc(),
                "history": store.session_doc(session_id)["history"],
            }
        )

    # -- edits ---------------------------------------------------------------
    def _run_edit_job(edit_id: str, session_id: str, request_doc: dict) -> None:
        with store.session_lock(session_id):
            store.update_edit(edit_id, status="running", started_at=_now())
            try:
                field, spec = store.session_state(session_id)
                request = EditRequest.from_doc(request_doc)
                cs = engine.run(field, spec, request)
                store.save_result(edit_id, cs, select_best(cs))
            except Exception as exc:
                store.update_edit(
                    edit_id,
                    status="failed",
                    error=f"{type(exc).__name__}: {exc}",
                    finished_at=_now(),
                )

    @app.post("/sessions/{session_id}/edits", status_code=202)
    def submit_edit(
        session_id: str,
        payload: dict = Body(...),
        idempotency_key: str | None = Header(default=None, alias="Idempotency-Key"),
    ):
        store.session_doc(session_id)
        cached, save = store.idempotent(f"POST/sessions/{session_id}/edits", idempotency_key)
        if cached is not None:
            return cached
        try:
            EditRequest.from_doc(payload)
        except ParseError as e:
            raise _invalid(str(e)) from e
        edit_id = store.create_edit(session_id, payload)
        executor.submit(_run_edit_job, edit_id, session_id, payload)
        body = _ok({"edit_id": edit_id})
        save(body)
        return body

    @app.get("/edits/{edit_id}")
    def edit_status(edit_id: str):
        doc = store.edit_doc(edit_id)
        body = {
            "edit_id": edit_id,
            "session_id": doc["session_id"],
            "status": doc["status"],
            "request": doc["request"],
            "error": doc.get("error", ""),
        }
        if doc["status"] == "done":
            records = doc["records"]
            body.update(
                {
                    "kind": doc["kind"],
                    "best_index": doc["best_index"],
                    "updated_spec": doc["updated_spec"],
                    "reference": store.reference_b64(edit_id),
                    "candidates": [
                        {
                            "index": i,
                            "field": store.candidate_b64(edit_id, i),
                            "metrics": rec["metrics"],
                            "failed": rec["failed"],
                            "failure_reason": rec["failure_reason"],
                            "record": rec,
                        }
                        for i, rec in enumerate(records)
                    ],
                }
            )
        return _ok(body)

    @app.post("/edits/{edit_id}/select")
    def select_candidate(
        edit_id: str,
        payload: dict = Body(...),
        idempotency_key: str | None = Header(default=None, alias="Idempotency-Key"),
    ):
        doc = store.edit_doc(edit_id)
        cached, save = store.idempotent(f"POST/edits/{edit_id}/select", idempotency_key)
        if cached is not None:
            return cached
        if doc["status"] != "done":
            raise _invalid(f"edit {edit_id} is {doc['status']}, not done")
        index = payload.get("candidate_index")
        if not isinstance(index, int) or isinstance(index, bool):
            raise _invalid("candidate_index must be an integer")
        if not 0 <= index < len(doc["records"]):
            raise _invalid(f"candidate_index {index} out of range")
        session_id = doc["session_id"]
        with store.session_lock(session_id):
            field = store.candidate_field(edit_id, index)
            store.commit_working(
                session_id,
                field,
                {"edit_id": edit_id, "candidate_index": index, "kind": doc["kind"]},
            )
        body = _ok(
            {
                "session_id": session_id,
                "candidate_index": index,
                "working": pgm_to_base64(field),
                "record": doc["records"][index],
            }
        )
        save(body)
        return body

    @app.post("/sessions/{session_id}/refine")
    def refine_working(
        session_id: str,
        payload: dict = Body(...),
        idempotency_key: str | None = Header(default=None, alias="Idempotency-Key"),
    ):
        cached, save = store.idempotent(f"POST/sessions/{session_id}/refine", idempotency_key)
        if cached is not None:
            return cached
        steps = payload.get("steps")
        if not isinstance(steps, int) or isinstance(steps, bool) or steps < 1:
            raise _invalid("steps must be a positive integer")
        with store.session_lock(session_id):
            field, spec = store.session_state(session_id)
            try:
                refined = refine(field, spec, steps).field
                c = compliance(refined, spec)
            except Exception as exc:
                raise _invalid(f"refinement failed: {exc}") from exc
            store.commit_working(session_id, refined, {"refine_steps": steps})
        body = _ok(
            {
                "session_id": session_id,
                "steps": steps,
                "working": pgm_to_base64(refined),
                "compliance": c,
                "volume_fraction": float(refined.values.mean()),
            }
        )
        save(body)
        return body

    return app


def mount_ui(app: FastAPI, directory: str | Path) -> None:
    """Serve the built browser UI from the API origin. Mounted last, so API
    routes keep priority over static paths."""
    from fastapi.staticfiles import StaticFiles

    app.mount("/", StaticFiles(directory=directory, html=True), name="ui")


def checkpoint_file_hash(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]
