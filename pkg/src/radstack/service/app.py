"""The single network path in and out: every byte entering or leaving the
platform crosses this authenticated HTTP surface.

Handlers are stateless; all shared state lives in the storage module, so the
server restarts safely and scales by running more threads. Every mutating
2xx response leaves exactly one audit event carrying the request id.
"""

from __future__ import annotations

import json
import threading
import time
import uuid

from fastapi import Depends, FastAPI, Header, HTTPException, Query, Request, Response
from fastapi.responses import StreamingResponse
from pydantic import BaseModel, Field

from radstack.core.annotation import AnnotationSet, AnnotationTemplate, validate_annotation
from radstack.learning import SnapshotStore, propose_annotation
from radstack.core.mask import overlap_metrics
from radstack.service import auth
from radstack.service.persistence import (
    IncompleteAnnotationError,
    NotIngestedError,
    VersionConflictError,
    get_annotation,
    save_annotation,
    sign_off_annotation,
)
from radstack.service.runtime import Platform, evaluate_filter, validate_filter
from radstack.storage import AccessDeniedError, BlobConflictError, BlobKey, BlobNotFoundError
from radstack.storage.queues import StaleAckError
from radstack.storage.records import RecordQuery

MUTATING_METHODS = {"POST", "PUT", "PATCH", "DELETE"}


class LoginBody(BaseModel):
    user_id: str
    password: str


class UserBody(BaseModel):
    id: str
    password: str
    name: str = ""
    roles: list = Field(default_factory=lambda: ["annotator"])
    protocol_grants: list = Field(default_factory=list)


class ProtocolBody(BaseModel):
    id: str
    title: str = ""


class ProjectBody(BaseModel):
    id: str
    name: str = ""
    protocol_id: str
    template: dict
    trainer: str = "threshold-segmenter"
    maturity_threshold: float | None = None


class CohortBody(BaseModel):
    name: str = ""
    filter: list = Field(default_factory=list)
    open: bool = True


class AnnotationBody(BaseModel):
    project_id: str
    annotation: dict
    ann_id: str | None = None
    base_version: int = 0
    synthetic: bool = False


class NoteBody(BaseModel):
    text: str


class QueueSendBody(BaseModel):
    payload: dict
    job_type: str | None = None


class QueueReceiveBody(BaseModel):
    visibility_timeout: float = 30.0


class QueueAckBody(BaseModel):
    job_id: str


class RecordUpsertBody(BaseModel):
    record: dict
    phi: dict | None = None


class RecordQueryBody(BaseModel):
    predicates: list = Field(default_factory=list)
    order_by: str | None = None
    limit: int | None = None


def deny(reason):
    return HTTPException(status_code=403, detail={"error": "denied", "reason": reason})


class _TtlCache:
    """Tiny read-through cache for hot, effectively-immutable records.

    Entries expire quickly (seconds), so revocations and updates win almost
    immediately while the steady-state request path avoids repeated point
    lookups. Size-capped so memory stays flat in the user count.
    """

    def __init__(self, ttl=2.0, max_size=20000):
        self.ttl = ttl
        self.max_size = max_size
        self._data = {}

    def get(self, key, loader):
        now = time.monotonic()
        hit = self._data.get(key)
        if hit is not None and hit[0] > now:
            return hit[1]
        value = loader()
        if len(self._data) >= self.max_size:
            self._data.clear()
        self._data[key] = (now + self.ttl, value)
        return value

    def invalidate(self, key=None):
        if key is None:
            self._data.clear()
        else:
            self._data.pop(key, None)


def create_app(platform: Platform) -> FastAPI:
    app = FastAPI(title="radstack", docs_url=None, redoc_url=None)
    storage = platform.storage
    principal_cache = _TtlCache(ttl=2.0)
    series_cache = _TtlCache(ttl=2.0)
    project_cache = _TtlCache(ttl=2.0)

    @app.on_event("startup")
    async def _bound_threadpool():
        # a modest worker pool: more threads only add GIL thrash and
        # per-connection sqlite caches
        import anyio.to_thread

        anyio.to_thread.current_default_thread_limiter().total_tokens = 16

    # -- auth + audit plumbing -------------------------------------------

    def principal_dep(request: Request, authorization: str = Header(default="")) -> auth.Principal:
        if not authorization.startswith("Bearer "):
            raise HTTPException(status_code=401, detail={"error": "missing bearer token"})
        token = authorization.removeprefix("Bearer ")
        principal = principal_cache.get(token, lambda: auth.resolve_token(storage, token))
        if principal is None:
            raise HTTPException(status_code=401, detail={"error": "invalid token"})
        request.state.principal = principal
        return principal

    def require(principal, action, protocol_id=None, needs_phi=False):
        decision = auth.authorize(principal, action, protocol_id, needs_phi)
        if not decision.allowed:
            raise deny(decision.reason)

    @app.middleware("http")
    async def audit_middleware(request: Request, call_next):
        request_id = uuid.uuid4().hex
        request.state.request_id = request_id
        request.state.audit_resource = None
        response = await call_next(request)
        response.headers["X-Request-Id"] = request_id
        if request.method in MUTATING_METHODS and 200 <= response.status_code < 300:
            principal = getattr(request.state, "principal", None)
            storage.records.append(
                "audit",
                {
                    "request_id": request_id,
                    "actor": principal.user_id if principal else "anonymous",
                    "action": f"{request.method} {request.url.path}",
                    "resource": request.state.audit_resource or request.url.path,
                    "outcome": response.status_code,
                },
            )
        return response

    def project_or_404(project_id):
        project = project_cache.get(
            project_id, lambda: storage.records.get("projects", project_id)
        )
        if project is None:
            project_cache.invalidate(project_id)
            raise HTTPException(status_code=404, detail={"error": f"no project {project_id!r}"})
        return dict(project)

    def series_or_404(series_id, phi_grant=False):
        series = series_cache.get(
            (series_id, phi_grant),
            lambda: storage.records.get("series", series_id, phi_grant=phi_grant),
        )
        if series is None:
            series_cache.invalidate((series_id, phi_grant))
            raise HTTPException(
                status_code=404,
                detail={"error": f"series {series_id!r} not ingested"},
            )
        return dict(series)  # handlers trim top-level keys; keep the cache intact

    # -- health and auth ---------------------------------------------------

    @app.get("/healthz")
    def healthz():
        return {"ok": True}

    @app.post("/auth/login")
    def auth_login(body: LoginBody, request: Request):
        token = auth.login(storage, body.user_id, body.password)
        if token is None:
            raise HTTPException(status_code=401, detail={"error": "bad credentials"})
        user = storage.records.get("users", body.user_id)
        request.state.principal = auth.Principal(
            body.user_id, tuple(user["roles"]), frozenset(), False
        )
        return {"token": token, "user_id": body.user_id, "roles": user["roles"]}

    # -- users / protocols -------------------------------------------------

    @app.post("/users", status_code=201)
    def users_create(body: UserBody, principal: auth.Principal = Depends(principal_dep)):
        require(principal, "users.manage")
        record = auth.create_user(
            storage, body.id, body.password, roles=body.roles,
            protocol_grants=body.protocol_grants, name=body.name,
        )
        return {k: record[k] for k in ("id", "name", "roles", "protocol_grants", "phi_grant")}

    @app.get("/users")
    def users_list(principal: auth.Principal = Depends(principal_dep)):
        require(principal, "users.manage")
        rows = storage.records.query(RecordQuery("users", order_by="id"))
        return [
            {k: r.get(k) for k in ("id", "name", "roles", "protocol_grants", "phi_grant")}
            for r in rows
        ]

    @app.post("/users/{user_id}/phi-grant")
    def users_phi_grant(user_id: str, principal: auth.Principal = Depends(principal_dep)):
        require(principal, "users.manage")
        try:
            user = auth.grant_phi(storage, user_id, principal.user_id)
        except KeyError:
            raise HTTPException(status_code=404, detail={"error": f"no user {user_id!r}"})
        principal_cache.invalidate()
        return {"id": user_id, "phi_grant": True, "granted_by": user["phi_grant_by"],
                "granted_at": user["phi_grant_at"]}

    @app.post("/users/{user_id}/grants")
    def users_grant_protocol(user_id: str, body: ProtocolBody,
                             principal: auth.Principal = Depends(principal_dep)):
        require(principal, "users.manage")
        try:
            user = auth.grant_protocol(storage, user_id, body.id)
        except KeyError:
            raise HTTPException(status_code=404, detail={"error": f"no user {user_id!r}"})
        principal_cache.invalidate()
        return {"id": user_id, "protocol_grants": user["protocol_grants"]}

    @app.post("/protocols", status_code=201)
    def protocols_create(body: ProtocolBody, principal: auth.Principal = Depends(principal_dep)):
        require(principal, "protocol.manage")
        storage.records.upsert("protocols", {"id": body.id, "title": body.title})
        return {"id": body.id, "title": body.title}

    @app.get("/protocols")
    def protocols_list(principal: auth.Principal = Depends(principal_dep)):
        require(principal, "project.read")
        return storage.records.query(RecordQuery("protocols", order_by="id"))

    # -- projects ------------------------------------------------------------

    @app.post("/projects", status_code=201)
    def projects_create(body: ProjectBody, principal: auth.Principal = Depends(principal_dep)):
        require(principal, "project.create", body.protocol_id)
        if storage.records.get("protocols", body.protocol_id) is None:
            raise HTTPException(status_code=422,
                                detail={"error": f"unknown protocol {body.protocol_id!r}"})
        template = AnnotationTemplate.from_json_dict(body.template)
        record = {
            "id": body.id,
            "name": body.name or body.id,
            "protocol_id": body.protocol_id,
            "template": template.to_json_dict(),
            "trainer": body.trainer,
            "created_at": time.time(),
        }
        if body.maturity_threshold is not None:
            record["maturity_threshold"] = body.maturity_threshold
        storage.records.upsert("projects", record)
        project_cache.invalidate(body.id)
        platform.ensure_loop(body.id)
        return {"id": body.id, "protocol_id": body.protocol_id}

    @app.get("/projects")
    def projects_list(principal: auth.Principal = Depends(principal_dep)):
        require(principal, "project.read")
        rows = storage.records.query(RecordQuery("projects", order_by="id"))
        return [
            {k: r.get(k) for k in ("id", "name", "protocol_id", "trainer")}
            for r in rows
            if "admin" in principal.roles or r.get("protocol_id") in principal.protocol_grants
        ]

    @app.get("/projects/{project_id}")
    def projects_get(project_id: str, principal: auth.Principal = Depends(principal_dep)):
        project = project_or_404(project_id)
        require(principal, "project.read", project["protocol_id"])
        project.pop("_version", None)
        return project

    @app.post("/projects/{project_id}/validate-annotation")
    def projects_validate_annotation(project_id: str, body: dict,
                                     principal: auth.Principal = Depends(principal_dep)):
        """Dry-run completeness check so clients can gate their sign-off
        button on the server's verdict without mutating anything."""
        project = project_or_404(project_id)
        require(principal, "annotation.read", project["protocol_id"])
        template = AnnotationTemplate.from_json_dict(project["template"])
        try:
            ann = AnnotationSet.from_json_dict(body.get("annotation", {}))
        except Exception as exc:
            raise HTTPException(status_code=422, detail={"error": f"malformed annotation: {exc}"})
        n_slices = body.get("n_slices")
        series = storage.records.get("series", ann.target[1]) if ann.target[1] else None
        if n_slices is None and series is not None:
            n_slices = series["dims"][0]
        return validate_annotation(ann, template, n_slices=n_slices).to_json_dict()

    # -- cohorts -------------------------------------------------------------

    @app.post("/projects/{project_id}/cohorts", status_code=201)
    def cohorts_create(project_id: str, body: CohortBody,
                       principal: auth.Principal = Depends(principal_dep)):
        project = project_or_404(project_id)
        require(principal, "cohort.build", project["protocol_id"])
        try:
            validate_filter(body.filter)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail={"error": str(exc)})
        cohort_id = f"{project_id}:{body.name or uuid.uuid4().hex[:8]}"
        members = sorted(
            r["id"] for r in storage.records.query(RecordQuery("series"))
            if evaluate_filter(r, body.filter)
        )
        record = {
            "id": cohort_id,
            "project_id": project_id,
            "filter": body.filter,
            "open": body.open,
            "members": members,
            "created_at": time.time(),
        }
        storage.records.upsert("cohorts", record)
        storage.records.append(
            "events", {"kind": "cohort_built", "cohort_id": cohort_id, "members": len(members)}
        )
        return {"cohort_id": cohort_id, "members": members, "open": body.open}

    @app.get("/cohorts/{cohort_id}")
    def cohorts_get(cohort_id: str, principal: auth.Principal = Depends(principal_dep)):
        cohort = storage.records.get("cohorts", cohort_id)
        if cohort is None:
            raise HTTPException(status_code=404, detail={"error": f"no cohort {cohort_id!r}"})
        project = project_or_404(cohort["project_id"])
        require(principal, "cohort.read", project["protocol_id"])
        cohort.pop("_version", None)
        return cohort

    @app.post("/cohorts/{cohort_id}/close")
    def cohorts_close(cohort_id: str, principal: auth.Principal = Depends(principal_dep)):
        cohort = storage.records.get("cohorts", cohort_id)
        if cohort is None:
            raise HTTPException(status_code=404, detail={"error": f"no cohort {cohort_id!r}"})
        project = project_or_404(cohort["project_id"])
        require(principal, "cohort.build", project["protocol_id"])
        cohort.pop("_version", None)
        cohort["open"] = False
        storage.records.upsert("cohorts", cohort)
        return {"cohort_id": cohort_id, "open": False}

    # -- series ---------------------------------------------------------------

    def _series_protocol(series):
        return series.get("protocol_id", platform.config.default_protocol)

    @app.get("/series")
    def series_list(
        principal: auth.Principal = Depends(principal_dep),
        modality: str | None = Query(default=None),
        body_part: str | None = Query(default=None),
        limit: int = Query(default=500, le=5000),
    ):
        require(principal, "series.read")
        predicates = []
        if modality:
            predicates.append(("Modality", "eq", modality))
        if body_part:
            predicates.append(("BodyPartExamined", "eq", body_part))
        rows = storage.records.query(RecordQuery("series", predicates=tuple(predicates), limit=limit))
        out = []
        for r in rows:
            if "admin" not in principal.roles and _series_protocol(r) not in principal.protocol_grants:
                continue
            r.pop("_version", None)
            out.append(r)
        return out

    @app.get("/series/{series_id}")
    def series_get(
        series_id: str,
        request: Request,
        principal: auth.Principal = Depends(principal_dep),
        include_phi: bool = Query(default=False),
    ):
        series = series_or_404(series_id, phi_grant=include_phi)
        require(principal, "series.read", _series_protocol(series))
        if include_phi:
            require(principal, "phi.read", _series_protocol(series), needs_phi=True)
        phi = series.pop("_phi", None)
        series.pop("_version", None)
        if include_phi:
            series["phi"] = phi or {}
        return series

    @app.get("/series/{series_id}/stream")
    async def series_stream(series_id: str, principal: auth.Principal = Depends(principal_dep)):
        series = series_or_404(series_id)
        require(principal, "series.read", _series_protocol(series))
        nz, ny, nx = series["dims"]
        slice_bytes = ny * nx * 2
        key = BlobKey("volumes", series_id, series["volume_blob_version"])

        async def slices():
            # lazy read: the first slice is flushed before later slices are
            # even read from storage (progressive delivery); slice-sized
            # page-cache reads are cheap enough to issue inline
            for chunk in storage.blobs.stream(key, chunk_size=slice_bytes):
                yield chunk

        headers = {
            "X-Series-Id": series_id,
            "X-Dims": f"{nz},{ny},{nx}",
            "X-Spacing-Mm": ",".join(str(s) for s in series["spacing_mm"]),
            "X-Slice-Bytes": str(slice_bytes),
            "X-Rescale": ",".join(str(v) for v in series.get("rescale", [1.0, 0.0])),
        }
        return StreamingResponse(slices(), media_type="application/octet-stream", headers=headers)

    @app.post("/series/{series_id}/prefetch", status_code=202)
    def series_prefetch(series_id: str, principal: auth.Principal = Depends(principal_dep)):
        series = series_or_404(series_id)
        require(principal, "series.read", _series_protocol(series))
        key = BlobKey("volumes", series_id, series["volume_blob_version"])

        def warm():
            for _chunk in storage.blobs.stream(key):
                pass

        threading.Thread(target=warm, daemon=True).start()
        return {"prefetching": series_id}

    # -- annotations ------------------------------------------------------------

    @app.post("/series/{series_id}/annotations", status_code=201)
    def annotations_upload(series_id: str, body: AnnotationBody, request: Request,
                           principal: auth.Principal = Depends(principal_dep)):
        project = project_or_404(body.project_id)
        require(principal, "series.annotate", project["protocol_id"])
        try:
            ann = AnnotationSet.from_json_dict(body.annotation)
        except Exception as exc:
            raise HTTPException(status_code=422, detail={"error": f"malformed annotation: {exc}"})
        if ann.target[1] != series_id:
            raise HTTPException(status_code=422,
                                detail={"error": "annotation target does not match series"})
        series = series_or_404(series_id)
        dims = tuple(series["dims"])
        for m in ann.masks:
            if m.dims != dims:
                raise HTTPException(
                    status_code=422,
                    detail={"error": f"mask dims {m.dims} do not match series dims {dims}"},
                )
        try:
            record = save_annotation(
                storage, body.project_id, ann, ann_id=body.ann_id,
                base_version=body.base_version, synthetic=body.synthetic,
            )
        except NotIngestedError as exc:
            raise HTTPException(status_code=404, detail={"error": str(exc)})
        except VersionConflictError as exc:
            raise HTTPException(status_code=409, detail={"error": str(exc)})
        request.state.audit_resource = f"annotation:{record['id']}"
        return {"annotation_id": record["id"], "version": record["version"]}

    @app.get("/annotations/{ann_id}")
    def annotations_get(ann_id: str, principal: auth.Principal = Depends(principal_dep)):
        record, ann = get_annotation(storage, ann_id)
        if record is None:
            raise HTTPException(status_code=404, detail={"error": f"no annotation {ann_id!r}"})
        project = project_or_404(record["project_id"])
        require(principal, "annotation.read", project["protocol_id"])
        record.pop("_version", None)
        return {"record": record, "annotation": ann.to_json_dict()}

    @app.get("/series/{series_id}/annotations")
    def annotations_list(series_id: str, project_id: str,
                         principal: auth.Principal = Depends(principal_dep)):
        project = project_or_404(project_id)
        require(principal, "annotation.read", project["protocol_id"])
        rows = storage.records.query(
            RecordQuery(
                "annotations",
                predicates=[("series_id", "eq", series_id), ("project_id", "eq", project_id)],
                order_by="updated_at",
            )
        )
        for r in rows:
            r.pop("_version", None)
        return rows

    @app.post("/annotations/{ann_id}/signoff")
    def annotations_signoff(ann_id: str, request: Request,
                            principal: auth.Principal = Depends(principal_dep)):
        record, _ann = get_annotation(storage, ann_id)
        if record is None:
            raise HTTPException(status_code=404, detail={"error": f"no annotation {ann_id!r}"})
        project = project_or_404(record["project_id"])
        require(principal, "annotation.sign_off", project["protocol_id"])
        template = AnnotationTemplate.from_json_dict(project["template"])
        try:
            receipt = sign_off_annotation(storage, ann_id, template)
        except IncompleteAnnotationError as exc:
            raise HTTPException(status_code=422, detail={
                "error": "incomplete annotation",
                "report": exc.report.to_json_dict(),
            })
        request.state.audit_resource = f"annotation:{ann_id}"
        return receipt

    @app.post("/annotations/{ann_id}/reopen")
    def annotations_reopen(ann_id: str, request: Request,
                           principal: auth.Principal = Depends(principal_dep)):
        record, _ann = get_annotation(storage, ann_id)
        if record is None:
            raise HTTPException(status_code=404, detail={"error": f"no annotation {ann_id!r}"})
        project = project_or_404(record["project_id"])
        require(principal, "annotation.reopen", project["protocol_id"])
        record.pop("_version", None)
        record["signed_off"] = False
        record["signed_off_at"] = None
        storage.records.upsert("annotations", record)
        request.state.audit_resource = f"annotation:{ann_id}"
        return {"annotation_id": ann_id, "signed_off": False}

    # -- proposals and models ---------------------------------------------------

    @app.get("/projects/{project_id}/series/{series_id}/proposal")
    def proposal_get(project_id: str, series_id: str,
                     principal: auth.Principal = Depends(principal_dep)):
        project = project_or_404(project_id)
        require(principal, "proposal.read", project["protocol_id"])
        series_or_404(series_id)
        trainer = platform.trainer_for(project)
        result = propose_annotation(
            storage, project_id, series_id, trainer, platform.maturity_policy(project)
        )
        if result.status != "ready":
            return {"status": result.status}
        return {
            "status": "ready",
            "model_version": result.model_version,
            "metric_value": result.metric_value,
            "annotation": result.annotation.to_json_dict(),
        }

    @app.get("/projects/{project_id}/snapshots")
    def snapshots_list(project_id: str, principal: auth.Principal = Depends(principal_dep)):
        project = project_or_404(project_id)
        require(principal, "model.read", project["protocol_id"])
        rows = SnapshotStore(storage, project_id).list()
        return [
            {k: r.get(k) for k in ("version", "metric_name", "metric_value", "frozen", "created_at")}
            for r in rows
        ]

    # -- reports ------------------------------------------------------------------

    @app.get("/projects/{project_id}/reports/{kind}")
    def reports_get(project_id: str, kind: str,
                    principal: auth.Principal = Depends(principal_dep)):
        project = project_or_404(project_id)
        require(principal, "report.read", project["protocol_id"])
        if kind == "progress":
            return _progress_report(project_id)
        if kind == "inter_rater":
            return _inter_rater_report(project_id)
        if kind == "audit":
            rows = storage.records.read_log("audit")
            return {"project_id": project_id, "events": rows}
        raise HTTPException(status_code=404, detail={"error": f"unknown report kind {kind!r}"})

    def _progress_report(project_id):
        rows = storage.records.query(
            RecordQuery("annotations", predicates=[("project_id", "eq", project_id)])
        )
        human = [r for r in rows if not r.get("synthetic")]
        per_user = {}
        for r in human:
            stats = per_user.setdefault(r["author"], {"annotations": 0, "signed_off": 0})
            stats["annotations"] += 1
            stats["signed_off"] += 1 if r.get("signed_off") else 0
        cohort_rows = storage.records.query(
            RecordQuery("cohorts", predicates=[("project_id", "eq", project_id)])
        )
        member_ids = sorted({m for c in cohort_rows for m in c.get("members", [])})
        annotated = {r["series_id"] for r in human if r.get("signed_off")}
        return {
            "project_id": project_id,
            "per_user": per_user,
            "cohort_size": len(member_ids),
            "series_signed_off": len(annotated & set(member_ids)) if member_ids else len(annotated),
            "completion_fraction": (
                len(annotated & set(member_ids)) / len(member_ids) if member_ids else 0.0
            ),
        }

    def _inter_rater_report(project_id):
        rows = storage.records.query(
            RecordQuery(
                "annotations",
                predicates=[("project_id", "eq", project_id), ("signed_off", "eq", 1)],
            )
        )
        by_series = {}
        for r in rows:
            if r.get("synthetic") or r.get("machine_proposed"):
                continue
            by_series.setdefault(r["series_id"], []).append(r)
        pairs = []
        for series_id, anns in sorted(by_series.items()):
            if len(anns) < 2:
                continue
            series = storage.records.get("series", series_id)
            spacing = tuple(series["spacing_mm"]) if series else (1.0, 1.0, 1.0)
            for i in range(len(anns)):
                for j in range(i + 1, len(anns)):
                    _, ann_a = get_annotation(storage, anns[i]["id"])
                    _, ann_b = get_annotation(storage, anns[j]["id"])
                    if not ann_a.masks or not ann_b.masks:
                        continue
                    m = overlap_metrics(ann_a.masks[0], ann_b.masks[0], spacing)
                    pairs.append(
                        {
                            "series_id": series_id,
                            "author_a": anns[i]["author"],
                            "author_b": anns[j]["author"],
                            "dice": m.dice,
                            "iou": m.iou,
                            "a_volume_mm3": m.a_volume_mm3,
                            "b_volume_mm3": m.b_volume_mm3,
                        }
                    )
        return {"project_id": project_id, "pairs": pairs}

    @app.get("/audit")
    def audit_export(principal: auth.Principal = Depends(principal_dep),
                     actor: str | None = Query(default=None),
                     limit: int = Query(default=1000, le=10000)):
        require(principal, "audit.read")
        rows = storage.records.read_log("audit", limit=limit)
        if actor:
            rows = [r for r in rows if r.get("actor") == actor]
        return rows

    # -- notes (communication only; never model training input) -----------------

    @app.post("/series/{series_id}/notes", status_code=201)
    def notes_create(series_id: str, body: NoteBody, request: Request,
                     principal: auth.Principal = Depends(principal_dep)):
        series = series_or_404(series_id)
        require(principal, "note.write", _series_protocol(series))
        note_id = uuid.uuid4().hex
        storage.records.upsert(
            "notes",
            {"id": note_id, "series_id": series_id, "author": principal.user_id,
             "text": body.text, "created_at": time.time()},
        )
        request.state.audit_resource = f"note:{note_id}"
        return {"note_id": note_id}

    @app.get("/series/{series_id}/notes")
    def notes_list(series_id: str, principal: auth.Principal = Depends(principal_dep)):
        series = series_or_404(series_id)
        require(principal, "note.read", _series_protocol(series))
        rows = storage.records.query(
            RecordQuery("notes", predicates=[("series_id", "eq", series_id)],
                        order_by="created_at")
        )
        for r in rows:
            r.pop("_version", None)
        return rows

    # -- pipeline status ---------------------------------------------------------

    @app.get("/status")
    def status(principal: auth.Principal = Depends(principal_dep)):
        require(principal, "status.read")
        pools = platform.fabric.pipeline_status()
        return {
            "pools": {
                jt: {
                    "desired": st.desired_count,
                    "live": st.live_count,
                    "queue_depth": st.queue_depth,
                    "processed_total": st.processed_total,
                    "failed_total": st.failed_total,
                    "dead_lettered_total": st.dead_lettered_total,
                }
                for jt, st in pools.items()
            },
        }

    @app.post("/ingest/scan")
    def ingest_scan(principal: auth.Principal = Depends(principal_dep)):
        require(principal, "ingest.trigger")
        job_ids = platform.scan_inbox_now()
        return {"jobs": job_ids}

    # -- storage passthrough for remote workers (admin-gated) --------------------

    # version precedes the id so ids may contain path separators
    @app.put("/storage/blobs/{namespace}/{version}/{blob_id:path}", status_code=201)
    async def storage_blob_put(namespace: str, version: int, blob_id: str, request: Request,
                               principal: auth.Principal = Depends(principal_dep)):
        require(principal, "storage.raw")
        data = await request.body()
        try:
            platform.storage.blobs.put(BlobKey(namespace, blob_id, version), data)
        except BlobConflictError as exc:
            raise HTTPException(status_code=409, detail={"error": str(exc)})
        return {"stored": f"{namespace}/{blob_id}@v{version}", "bytes": len(data)}

    @app.get("/storage/blobs/{namespace}/{version}/{blob_id:path}")
    def storage_blob_get(namespace: str, version: int, blob_id: str,
                         principal: auth.Principal = Depends(principal_dep)):
        require(principal, "storage.raw")
        try:
            gen = platform.storage.blobs.stream(BlobKey(namespace, blob_id, version))
        except BlobNotFoundError as exc:
            raise HTTPException(status_code=404, detail={"error": str(exc)})
        return StreamingResponse(gen, media_type="application/octet-stream")

    @app.post("/storage/queues/{queue}/messages", status_code=201)
    def storage_queue_send(queue: str, body: QueueSendBody,
                           principal: auth.Principal = Depends(principal_dep)):
        require(principal, "storage.raw")
        job_id = platform.storage.queue.send(queue, body.payload, job_type=body.job_type)
        return {"job_id": job_id}

    @app.post("/storage/queues/{queue}/receive")
    def storage_queue_receive(queue: str, body: QueueReceiveBody,
                              principal: auth.Principal = Depends(principal_dep)):
        require(principal, "storage.raw")
        msg = platform.storage.queue.receive(queue, visibility_timeout=body.visibility_timeout)
        if msg is None:
            return {"message": None}
        return {"message": {"job_id": msg.job_id, "job_type": msg.job_type,
                            "payload": msg.payload, "attempt": msg.attempt}}

    @app.post("/storage/queues/{queue}/ack")
    def storage_queue_ack(queue: str, body: QueueAckBody,
                          principal: auth.Principal = Depends(principal_dep)):
        require(principal, "storage.raw")
        try:
            platform.storage.queue.ack(queue, body.job_id)
        except StaleAckError as exc:
            raise HTTPException(status_code=409, detail={"error": str(exc)})
        return {"acked": body.job_id}

    @app.post("/storage/records/{table}/query")
    def storage_record_query(table: str, body: RecordQueryBody,
                             principal: auth.Principal = Depends(principal_dep)):
        require(principal, "storage.raw")
        needs_phi = any(str(p[0] if isinstance(p, (list, tuple)) else p.get("field", "")).startswith("phi.")
                        for p in body.predicates)
        if needs_phi:
            require(principal, "phi.read", needs_phi=True)
        preds = tuple(
            tuple(p) if isinstance(p, (list, tuple)) else (p["field"], p["op"], p["value"])
            for p in body.predicates
        )
        try:
            rows = platform.storage.records.query(
                RecordQuery(table, predicates=preds, order_by=body.order_by, limit=body.limit),
                phi_grant=needs_phi and principal.phi_grant,
            )
        except AccessDeniedError as exc:
            raise deny(str(exc))
        return rows

    @app.put("/storage/records/{table}")
    def storage_record_upsert(table: str, body: RecordUpsertBody,
                              principal: auth.Principal = Depends(principal_dep)):
        require(principal, "storage.raw")
        version = platform.storage.records.upsert(table, body.record, phi=body.phi)
        return {"id": body.record.get("id"), "version": version}

    return app
