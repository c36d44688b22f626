"""HTTP surface over ControlPlane.

Handlers are deliberately thin: parse the request, hand the dict to
the facade in a worker thread, serialize the result canonically. No
governance semantics live here, which is what keeps API calls and
--local CLI calls byte-identical on disk. Error bodies always carry
the module error code; the status is looked up from that code.
"""

from __future__ import annotations

import json
import socket

from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from starlette.concurrency import run_in_threadpool

from .canonical import canonical_dumps
from .config import ServiceConfig
from .errors import StackdError
from .service import ControlPlane

_NOT_FOUND = {
    "not-found",
    "unknown-bundle",
    "unknown-control",
    "unknown-decision",
    "unknown-hook",
    "unknown-incident",
    "unknown-request",
    "unknown-stream",
}
_CONFLICT = {
    "duplicate-approver",
    "duplicate-id",
    "duplicate-kind-name",
    "env-skip",
    "gates-not-passed",
    "illegal-transition",
    "incident-not-open",
    "invalid-state",
    "never-deployed-there",
    "non-monotonic-version",
}
_UNPROCESSABLE = {
    "dangling-digest",
    "irreproducible",
    "kind-mismatch",
    "missing-required-kind",
    "set-mismatch",
}
_SERVER = {"integrity-violation", "integrity-failure", "storage-io"}


def status_for(code: str) -> int:
    if code in _NOT_FOUND:
        return 404
    if code in _CONFLICT:
        return 409
    if code in _UNPROCESSABLE:
        return 422
    if code in _SERVER:
        return 500
    return 400


def canonical_response(doc, status: int = 200) -> Response:
    return Response(
        content=canonical_dumps(doc), status_code=status, media_type="application/json"
    )


async def _json_body(request: Request) -> dict:
    raw = await request.body()
    if not raw:
        return {}
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as err:
        raise StackdError("invalid-json", f"request body is not valid JSON: {err}")
    if not isinstance(doc, dict):
        raise StackdError("invalid-json", "request body must be a JSON object")
    return doc


def create_app(plane: ControlPlane) -> FastAPI:
    app = FastAPI(title="stackd", docs_url=None, redoc_url=None, openapi_url=None)
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.exception_handler(StackdError)
    async def on_domain_error(request: Request, exc: StackdError):
        return canonical_response(exc.to_doc(), status_for(exc.code))

    # -- health ------------------------------------------------------------

    @app.get("/healthz")
    async def healthz():
        return canonical_response(await run_in_threadpool(plane.healthz))

    # -- blobs -------------------------------------------------------------

    @app.post("/blobs")
    async def put_blob(request: Request):
        data = await request.body()
        return canonical_response(await run_in_threadpool(plane.put_blob, data), 201)

    @app.get("/blobs/{digest}")
    async def get_blob(digest: str):
        data = await run_in_threadpool(plane.get_blob, digest)
        return Response(content=data, media_type="application/octet-stream")

    # -- bundles -----------------------------------------------------------

    @app.post("/bundles")
    async def create_bundle(request: Request):
        body = await _json_body(request)
        return canonical_response(await run_in_threadpool(plane.create_bundle, body), 201)

    @app.get("/bundles")
    async def list_bundles():
        return canonical_response(await run_in_threadpool(plane.list_bundles))

    @app.post("/bundles/diff")
    async def diff_bundles(request: Request):
        body = await _json_body(request)
        doc = await run_in_threadpool(plane.diff_bundles, body.get("a"), body.get("b"))
        return canonical_response(doc)

    @app.get("/bundles/{selector}")
    async def get_bundle(selector: str):
        return canonical_response(await run_in_threadpool(plane.get_bundle, selector))

    @app.get("/bundles/{selector}/integrity")
    async def bundle_integrity(selector: str):
        return canonical_response(await run_in_threadpool(plane.verify_bundle, selector))

    # -- controls ----------------------------------------------------------

    @app.post("/controls")
    async def register_control(request: Request):
        body = await _json_body(request)
        return canonical_response(await run_in_threadpool(plane.register_control, body), 201)

    @app.get("/controls")
    async def list_controls():
        return canonical_response(await run_in_threadpool(plane.list_controls))

    @app.get("/controls/due")
    async def due_controls():
        return canonical_response(await run_in_threadpool(plane.due_controls))

    @app.post("/controls/{control_id}/evidence")
    async def attach_evidence(control_id: str, request: Request):
        body = await _json_body(request)
        doc = await run_in_threadpool(plane.attach_evidence, control_id, body)
        return canonical_response(doc, 201)

    @app.post("/controls/{control_id}/verify")
    async def verify_control(control_id: str, request: Request):
        body = await _json_body(request)
        doc = await run_in_threadpool(plane.verify_control, control_id, body.get("bundle"))
        return canonical_response(doc)

    @app.get("/controls/{control_id}/verifications")
    async def control_verifications(control_id: str, request: Request):
        doc = await run_in_threadpool(
            plane.verifications, control_id, request.query_params.get("bundle_id")
        )
        return canonical_response(doc)

    # -- decisions -----------------------------------------------------------

    @app.post("/decisions")
    async def append_decision(request: Request):
        body = await _json_body(request)
        return canonical_response(await run_in_threadpool(plane.append_decision, body), 201)

    @app.get("/decisions")
    async def query_decisions(request: Request):
        params = request.query_params
        doc = await run_in_threadpool(
            plane.query_decisions,
            params.get("bundle_id"),
            params.get("model_version"),
            params.get("start"),
            params.get("end"),
        )
        return canonical_response(doc)

    @app.get("/decisions/chain")
    async def verify_chain():
        return canonical_response(await run_in_threadpool(plane.verify_decision_chain))

    @app.get("/decisions/{decision_id}")
    async def get_decision(decision_id: str):
        return canonical_response(await run_in_threadpool(plane.get_decision, decision_id))

    @app.get("/decisions/{decision_id}/context")
    async def decision_context(decision_id: str):
        return canonical_response(await run_in_threadpool(plane.decision_context, decision_id))

    @app.post("/explanations/delta")
    async def explanation_delta(request: Request):
        body = await _json_body(request)
        doc = await run_in_threadpool(
            plane.delta, body.get("a"), body.get("b"), body.get("k", 5)
        )
        return canonical_response(doc)

    # -- drift ----------------------------------------------------------------

    @app.post("/golden-sets")
    async def create_golden_set(request: Request):
        body = await _json_body(request)
        return canonical_response(await run_in_threadpool(plane.create_golden_set, body), 201)

    @app.get("/golden-sets/{set_id}")
    async def get_golden_set(set_id: str):
        return canonical_response(await run_in_threadpool(plane.get_golden_set, set_id))

    @app.post("/stress-runs")
    async def run_stress(request: Request):
        body = await _json_body(request)
        doc = await run_in_threadpool(
            plane.run_stress,
            body.get("bundle"),
            body.get("set_id"),
            body.get("adapter", {}),
            body.get("seed"),
        )
        return canonical_response(doc, 201)

    @app.get("/stress-runs/{run_id}")
    async def get_run(run_id: str):
        return canonical_response(await run_in_threadpool(plane.get_run, run_id))

    @app.post("/drift/score")
    async def score_drift(request: Request):
        body = await _json_body(request)
        doc = await run_in_threadpool(
            plane.score_drift, body.get("baseline_run"), body.get("current_run")
        )
        return canonical_response(doc)

    @app.post("/drift/evaluate")
    async def evaluate_drift(request: Request):
        body = await _json_body(request)
        doc = await run_in_threadpool(
            plane.evaluate_drift,
            body.get("baseline_run"),
            body.get("current_run"),
            body.get("thresholds"),
        )
        return canonical_response(doc)

    @app.get("/drift/verdicts")
    async def drift_verdicts(request: Request):
        doc = await run_in_threadpool(plane.drift_verdicts, request.query_params.get("bundle_id"))
        return canonical_response(doc)

    # -- telemetry ---------------------------------------------------------------

    @app.post("/telemetry")
    async def ingest_signal(request: Request):
        body = await _json_body(request)
        return canonical_response(await run_in_threadpool(plane.ingest_signal, body), 201)

    @app.get("/telemetry/{kind}/aggregate")
    async def aggregate(kind: str, request: Request):
        params = request.query_params
        start, end = params.get("start"), params.get("end")
        if not start or not end:
            raise StackdError("invalid-window", "start and end query parameters are required")
        return canonical_response(await run_in_threadpool(plane.aggregate, kind, start, end))

    @app.post("/telemetry/{kind}/detect")
    async def detect(kind: str, request: Request):
        body = await _json_body(request)
        doc = await run_in_threadpool(plane.detect_and_route, kind, body.get("detector"))
        return canonical_response(doc)

    @app.get("/alerts")
    async def alerts():
        return canonical_response(await run_in_threadpool(plane.alerts))

    # -- promotions -----------------------------------------------------------------

    @app.post("/promotions")
    async def request_promotion(request: Request):
        body = await _json_body(request)
        doc = await run_in_threadpool(
            plane.request_promotion, body.get("bundle"), body.get("target_env")
        )
        return canonical_response(doc, 201)

    @app.get("/promotions")
    async def list_promotions(request: Request):
        params = request.query_params
        doc = await run_in_threadpool(
            plane.list_promotions, params.get("state"), params.get("bundle_id")
        )
        return canonical_response(doc)

    @app.get("/promotions/{request_id}")
    async def get_promotion(request_id: str):
        return canonical_response(await run_in_threadpool(plane.get_promotion, request_id))

    @app.get("/promotions/{request_id}/gates")
    async def gate_report(request_id: str):
        return canonical_response(await run_in_threadpool(plane.gate_report, request_id))

    @app.post("/promotions/{request_id}/approvals")
    async def record_approval(request_id: str, request: Request):
        body = await _json_body(request)
        doc = await run_in_threadpool(
            plane.record_approval, request_id, body.get("approver"), body.get("decision")
        )
        return canonical_response(doc)

    @app.post("/promotions/{request_id}/promote")
    async def promote(request_id: str):
        return canonical_response(await run_in_threadpool(plane.promote, request_id))

    @app.post("/rollbacks")
    async def rollback(request: Request):
        body = await _json_body(request)
        doc = await run_in_threadpool(
            plane.rollback, body.get("env"), body.get("bundle"), body.get("incident_id")
        )
        return canonical_response(doc, 201)

    @app.get("/deployments")
    async def list_deployments(request: Request):
        params = request.query_params
        doc = await run_in_threadpool(
            plane.list_deployments, params.get("env"), params.get("bundle_id")
        )
        return canonical_response(doc)

    @app.get("/deployments/audit")
    async def replay_audit():
        return canonical_response(await run_in_threadpool(plane.replay_audit))

    # -- incidents -----------------------------------------------------------------

    @app.get("/incidents")
    async def list_incidents(request: Request):
        params = request.query_params
        doc = await run_in_threadpool(
            plane.list_incidents, params.get("state"), params.get("bundle_id")
        )
        return canonical_response(doc)

    @app.get("/incidents/{incident_id}")
    async def get_incident(incident_id: str):
        return canonical_response(await run_in_threadpool(plane.get_incident, incident_id))

    @app.post("/incidents/{incident_id}/transition")
    async def transition_incident(incident_id: str, request: Request):
        body = await _json_body(request)
        doc = await run_in_threadpool(
            lambda: plane.transition_incident(
                incident_id,
                body.get("event"),
                actor=body.get("actor"),
                resolution=body.get("resolution"),
                rollback_ref=body.get("rollback_ref"),
            )
        )
        return canonical_response(doc)

    @app.get("/retrain-obligations")
    async def retrain_obligations():
        return canonical_response(await run_in_threadpool(plane.retrain_obligations))

    return app


def serve(config: ServiceConfig) -> None:
    """Bind, then run until signalled; in-flight writes finish before exit."""
    import uvicorn

    plane = ControlPlane(config)
    app = create_app(plane)
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        sock.bind((config.host, config.port))
    except OSError as err:
        sock.close()
        raise StackdError(
            "bind-failure", f"cannot bind {config.listen_address}: {err}",
            {"listen_address": config.listen_address},
        )
    server = uvicorn.Server(
        uvicorn.Config(app, log_level="warning", access_log=False)
    )
    server.run(sockets=[sock])
