"""Operator command line: every governance operation, scripted.

Commands dispatch either to a running service (--server, the default)
or to an embedded control plane over a data directory (--local DIR).
Both paths call the same facade methods with the same arguments, so
the persisted streams come out identical either way.

Exit codes: 0 success, 1 domain error (machine code printed), 2 usage.
--json emits exactly one canonical-JSON document on stdout.
"""

from __future__ import annotations

import json
import sys

import click
import httpx

from .canonical import canonical_dumps
from .config import DEFAULT_LISTEN, load_config
from .errors import StackdError
from .service import ControlPlane


class HttpBackend:
    """Maps facade method calls onto the HTTP API one-to-one."""

    def __init__(self, base_url: str):
        self._client = httpx.Client(base_url=base_url, timeout=60.0)

    def _unwrap(self, response: httpx.Response):
        if response.status_code >= 400:
            try:
                doc = response.json()
            except ValueError:
                raise StackdError(
                    "http-error", f"HTTP {response.status_code}: {response.text[:200]}"
                )
            raise StackdError(
                doc.get("code", "http-error"), doc.get("message", ""), doc.get("details")
            )
        if response.headers.get("content-type", "").startswith("application/json"):
            return response.json()
        return response.content

    def _get(self, path, params=None):
        return self._unwrap(self._client.get(path, params=params))

    def _post(self, path, doc=None):
        return self._unwrap(self._client.post(path, content=canonical_dumps(doc or {})))

    def put_blob(self, data: bytes):
        return self._unwrap(self._client.post("/blobs", content=data))

    def get_blob(self, digest):
        return self._unwrap(self._client.get(f"/blobs/{digest}"))

    def create_bundle(self, manifest):
        return self._post("/bundles", manifest)

    def list_bundles(self):
        return self._get("/bundles")

    def get_bundle(self, selector):
        return self._get(f"/bundles/{selector}")

    def diff_bundles(self, a, b):
        return self._post("/bundles/diff", {"a": a, "b": b})

    def verify_bundle(self, selector):
        return self._get(f"/bundles/{selector}/integrity")

    def register_control(self, doc):
        return self._post("/controls", doc)

    def list_controls(self):
        return self._get("/controls")

    def attach_evidence(self, control_id, doc):
        return self._post(f"/controls/{control_id}/evidence", doc)

    def verify_control(self, control_id, bundle=None):
        return self._post(f"/controls/{control_id}/verify", {"bundle": bundle})

    def due_controls(self):
        return self._get("/controls/due")

    def append_decision(self, doc):
        return self._post("/decisions", doc)

    def get_decision(self, decision_id):
        return self._get(f"/decisions/{decision_id}")

    def query_decisions(self, bundle_id=None, model_version=None, start=None, end=None):
        params = {
            k: v
            for k, v in (
                ("bundle_id", bundle_id),
                ("model_version", model_version),
                ("start", start),
                ("end", end),
            )
            if v is not None
        }
        return self._get("/decisions", params)

    def verify_decision_chain(self):
        return self._get("/decisions/chain")

    def decision_context(self, decision_id):
        return self._get(f"/decisions/{decision_id}/context")

    def delta(self, a, b, k=5):
        return self._post("/explanations/delta", {"a": a, "b": b, "k": k})

    def create_golden_set(self, doc):
        return self._post("/golden-sets", doc)

    def get_golden_set(self, set_id):
        return self._get(f"/golden-sets/{set_id}")

    def run_stress(self, bundle, set_id, adapter, seed):
        return self._post(
            "/stress-runs", {"bundle": bundle, "set_id": set_id, "adapter": adapter, "seed": seed}
        )

    def get_run(self, run_id):
        return self._get(f"/stress-runs/{run_id}")

    def score_drift(self, baseline_run, current_run):
        return self._post("/drift/score", {"baseline_run": baseline_run, "current_run": current_run})

    def evaluate_drift(self, baseline_run, current_run, thresholds=None):
        body = {"baseline_run": baseline_run, "current_run": current_run}
        if thresholds is not None:
            body["thresholds"] = thresholds
        return self._post("/drift/evaluate", body)

    def drift_verdicts(self, bundle_id=None):
        return self._get("/drift/verdicts", {"bundle_id": bundle_id} if bundle_id else None)

    def ingest_signal(self, doc):
        return self._post("/telemetry", doc)

    def aggregate(self, kind, start, end):
        return self._get(f"/telemetry/{kind}/aggregate", {"start": start, "end": end})

    def detect_and_route(self, kind, detector=None):
        return self._post(f"/telemetry/{kind}/detect", {"detector": detector} if detector else {})

    def alerts(self):
        return self._get("/alerts")

    def request_promotion(self, bundle, target_env):
        return self._post("/promotions", {"bundle": bundle, "target_env": target_env})

    def list_promotions(self, state=None, bundle_id=None):
        params = {k: v for k, v in (("state", state), ("bundle_id", bundle_id)) if v}
        return self._get("/promotions", params or None)

    def get_promotion(self, request_id):
        return self._get(f"/promotions/{request_id}")

    def record_approval(self, request_id, approver, decision):
        return self._post(
            f"/promotions/{request_id}/approvals", {"approver": approver, "decision": decision}
        )

    def gate_report(self, request_id):
        return self._get(f"/promotions/{request_id}/gates")

    def promote(self, request_id):
        return self._post(f"/promotions/{request_id}/promote")

    def rollback(self, env, bundle, incident_id):
        return self._post("/rollbacks", {"env": env, "bundle": bundle, "incident_id": incident_id})

    def list_deployments(self, env=None, bundle_id=None):
        params = {k: v for k, v in (("env", env), ("bundle_id", bundle_id)) if v}
        return self._get("/deployments", params or None)

    def replay_audit(self):
        return self._get("/deployments/audit")

    def list_incidents(self, state=None, bundle_id=None):
        params = {k: v for k, v in (("state", state), ("bundle_id", bundle_id)) if v}
        return self._get("/incidents", params or None)

    def get_incident(self, incident_id):
        return self._get(f"/incidents/{incident_id}")

    def transition_incident(self, incident_id, event, actor=None, resolution=None, rollback_ref=None):
        body = {"event": event}
        if actor is not None:
            body["actor"] = actor
        if resolution is not None:
            body["resolution"] = resolution
        if rollback_ref is not None:
            body["rollback_ref"] = rollback_ref
        return self._post(f"/incidents/{incident_id}/transition", body)

    def retrain_obligations(self):
        return self._get("/retrain-obligations")

    def healthz(self):
        return self._get("/healthz")


def _backend(ctx):
    opts = ctx.obj
    if opts.get("backend") is None:
        if opts["local"]:
            doc = {}
            if opts["config"]:
                with open(opts["config"], encoding="utf-8") as fh:
                    doc = json.load(fh)
            doc["data_dir"] = opts["local"]
            config = load_config(doc)
            config.data_dir = opts["local"]
            opts["backend"] = ControlPlane(config)
        else:
            opts["backend"] = HttpBackend(opts["server"])
    return opts["backend"]


def _scalar(value):
    if value is None:
        return "null"
    if value is True:
        return "true"
    if value is False:
        return "false"
    return value


def _human(doc, indent=0):
    pad = "  " * indent
    if isinstance(doc, dict):
        if not doc:
            return f"{pad}{{}}"
        lines = []
        for key, value in doc.items():
            if isinstance(value, (dict, list)) and value:
                lines.append(f"{pad}{key}:")
                lines.append(_human(value, indent + 1))
            else:
                lines.append(f"{pad}{key}: {_scalar(value)}")
        return "\n".join(lines)
    if isinstance(doc, list):
        if not doc:
            return f"{pad}(none)"
        blocks = []
        for item in doc:
            if isinstance(item, (dict, list)):
                rendered = _human(item, indent + 1)
                blocks.append(f"{pad}-\n{rendered}")
            else:
                blocks.append(f"{pad}- {_scalar(item)}")
        return "\n".join(blocks)
    return f"{pad}{_scalar(doc)}"


def _run(ctx, call):
    """Execute against the backend, emit the result, map errors to exit 1."""
    try:
        result = call(_backend(ctx))
    except StackdError as err:
        if ctx.obj["json"]:
            click.echo(canonical_dumps(err.to_doc()))
        else:
            report = (err.details or {}).get("report")
            if report:
                click.echo(_human(report))
        click.echo(f"error {err.code}: {err.message}", err=True)
        ctx.exit(1)
    if isinstance(result, bytes):
        sys.stdout.buffer.write(result)
        return
    if ctx.obj["json"]:
        click.echo(canonical_dumps(result))
    else:
        click.echo(_human(result))


def _load_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


@click.group()
@click.option("--server", default=f"http://{DEFAULT_LISTEN}", show_default=True,
              help="Base URL of a running service.")
@click.option("--local", "local_dir", default=None, metavar="DIR",
              help="Run against a data directory directly, no service needed.")
@click.option("--config", "config_path", default=None, metavar="PATH",
              help="Config file (serve; also honored with --local).")
@click.option("--json", "as_json", is_flag=True, help="Emit one canonical-JSON document.")
@click.pass_context
def main(ctx, server, local_dir, config_path, as_json):
    """Governance control plane for model deployments."""
    ctx.obj = {
        "server": server,
        "local": local_dir,
        "config": config_path,
        "json": as_json,
        "backend": None,
    }


# -- blob ---------------------------------------------------------------------


@main.group()
def blob():
    """Store and fetch content-addressed blobs."""


@blob.command("put")
@click.argument("source", type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def blob_put(ctx, source):
    with open(source, "rb") as fh:
        data = fh.read()
    _run(ctx, lambda b: b.put_blob(data))


@blob.command("get")
@click.argument("digest")
@click.pass_context
def blob_get(ctx, digest):
    _run(ctx, lambda b: b.get_blob(digest))


# -- bundle -------------------------------------------------------------------


@main.group()
def bundle():
    """Create, inspect, and compare governance bundles."""


@bundle.command("create")
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def bundle_create(ctx, manifest):
    doc = _load_json(manifest)
    _run(ctx, lambda b: b.create_bundle(doc))


@bundle.command("list")
@click.pass_context
def bundle_list(ctx):
    _run(ctx, lambda b: b.list_bundles())


@bundle.command("resolve")
@click.argument("selector")
@click.pass_context
def bundle_resolve(ctx, selector):
    _run(ctx, lambda b: b.get_bundle(selector))


@bundle.command("diff")
@click.argument("a")
@click.argument("b")
@click.pass_context
def bundle_diff(ctx, a, b):
    _run(ctx, lambda be: be.diff_bundles(a, b))


@bundle.command("verify")
@click.argument("selector")
@click.pass_context
def bundle_verify(ctx, selector):
    _run(ctx, lambda b: b.verify_bundle(selector))


# -- control ------------------------------------------------------------------


@main.group()
def control():
    """Governance controls and their evidence hooks."""


@control.command("register")
@click.option("--spec", required=True, type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def control_register(ctx, spec):
    doc = _load_json(spec)
    _run(ctx, lambda b: b.register_control(doc))


@control.command("list")
@click.pass_context
def control_list(ctx):
    _run(ctx, lambda b: b.list_controls())


@control.command("evidence")
@click.argument("control_id")
@click.option("--hook", "hook_id", required=True)
@click.option("--digest", required=True)
@click.option("--observed-at", required=True)
@click.pass_context
def control_evidence(ctx, control_id, hook_id, digest, observed_at):
    doc = {"hook_id": hook_id, "digest": digest, "observed_at": observed_at}
    _run(ctx, lambda b: b.attach_evidence(control_id, doc))


@control.command("verify")
@click.argument("control_id")
@click.option("--bundle", default=None)
@click.pass_context
def control_verify(ctx, control_id, bundle):
    _run(ctx, lambda b: b.verify_control(control_id, bundle))


@control.command("due")
@click.pass_context
def control_due(ctx):
    _run(ctx, lambda b: b.due_controls())


# -- decision -----------------------------------------------------------------


@main.group()
def decision():
    """Append-only, hash-chained decision log."""


@decision.command("append")
@click.option("--spec", required=True, type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def decision_append(ctx, spec):
    doc = _load_json(spec)
    _run(ctx, lambda b: b.append_decision(doc))


@decision.command("list")
@click.option("--bundle-id", default=None)
@click.option("--model-version", default=None)
@click.option("--start", default=None)
@click.option("--end", default=None)
@click.pass_context
def decision_list(ctx, bundle_id, model_version, start, end):
    _run(ctx, lambda b: b.query_decisions(bundle_id, model_version, start, end))


@decision.command("context")
@click.argument("decision_id")
@click.pass_context
def decision_context(ctx, decision_id):
    _run(ctx, lambda b: b.decision_context(decision_id))


@decision.command("delta")
@click.argument("a")
@click.argument("b")
@click.option("--k", default=5, show_default=True)
@click.pass_context
def decision_delta(ctx, a, b, k):
    _run(ctx, lambda be: be.delta(a, b, k))


@decision.command("chain")
@click.pass_context
def decision_chain(ctx):
    _run(ctx, lambda b: b.verify_decision_chain())


# -- drift --------------------------------------------------------------------


@main.group()
def drift():
    """Golden sets, stress runs, and drift verdicts."""


@drift.command("golden")
@click.option("--spec", required=True, type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def drift_golden(ctx, spec):
    doc = _load_json(spec)
    _run(ctx, lambda b: b.create_golden_set(doc))


@drift.command("run")
@click.option("--bundle", required=True)
@click.option("--set", "set_id", required=True)
@click.option("--adapter", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", required=True, type=int)
@click.pass_context
def drift_run(ctx, bundle, set_id, adapter, seed):
    adapter_doc = _load_json(adapter)
    _run(ctx, lambda b: b.run_stress(bundle, set_id, adapter_doc, seed))


@drift.command("score")
@click.argument("baseline_run")
@click.argument("current_run")
@click.pass_context
def drift_score(ctx, baseline_run, current_run):
    _run(ctx, lambda b: b.score_drift(baseline_run, current_run))


@drift.command("evaluate")
@click.argument("baseline_run")
@click.argument("current_run")
@click.option("--thresholds", default=None, type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def drift_evaluate(ctx, baseline_run, current_run, thresholds):
    doc = _load_json(thresholds) if thresholds else None
    _run(ctx, lambda b: b.evaluate_drift(baseline_run, current_run, doc))


@drift.command("verdicts")
@click.option("--bundle-id", default=None)
@click.pass_context
def drift_verdicts(ctx, bundle_id):
    _run(ctx, lambda b: b.drift_verdicts(bundle_id))


# -- telemetry ------------------------------------------------------------------


@main.group()
def telemetry():
    """Operational signals, aggregation, and anomaly alerts."""


@telemetry.command("ingest")
@click.option("--kind", required=True)
@click.option("--bundle-id", required=True)
@click.option("--value", required=True, type=float)
@click.option("--observed-at", required=True)
@click.pass_context
def telemetry_ingest(ctx, kind, bundle_id, value, observed_at):
    doc = {"kind": kind, "bundle_id": bundle_id, "value": value, "observed_at": observed_at}
    _run(ctx, lambda b: b.ingest_signal(doc))


@telemetry.command("aggregate")
@click.argument("kind")
@click.argument("start")
@click.argument("end")
@click.pass_context
def telemetry_aggregate(ctx, kind, start, end):
    _run(ctx, lambda b: b.aggregate(kind, start, end))


@telemetry.command("alerts")
@click.option("--detect", "detect_kind", default=None, metavar="KIND",
              help="Run the detector over KIND's stream and route new alerts first.")
@click.pass_context
def telemetry_alerts(ctx, detect_kind):
    if detect_kind:
        _run(ctx, lambda b: b.detect_and_route(detect_kind))
    else:
        _run(ctx, lambda b: b.alerts())


# -- gate -----------------------------------------------------------------------


@main.group()
def gate():
    """Promotion requests, approvals, and gated deployment."""


@gate.command("request")
@click.option("--bundle", required=True)
@click.option("--env", "target_env", required=True)
@click.pass_context
def gate_request(ctx, bundle, target_env):
    _run(ctx, lambda b: b.request_promotion(bundle, target_env))


@gate.command("list")
@click.option("--state", default=None)
@click.option("--bundle-id", default=None)
@click.pass_context
def gate_list(ctx, state, bundle_id):
    _run(ctx, lambda b: b.list_promotions(state, bundle_id))


@gate.command("approve")
@click.argument("request_id")
@click.option("--approver", required=True)
@click.option("--reject", is_flag=True, help="Record a rejection instead of an approval.")
@click.pass_context
def gate_approve(ctx, request_id, approver, reject):
    decision = "reject" if reject else "approve"
    _run(ctx, lambda b: b.record_approval(request_id, approver, decision))


@gate.command("report")
@click.argument("request_id")
@click.pass_context
def gate_report(ctx, request_id):
    _run(ctx, lambda b: b.gate_report(request_id))


@gate.command("promote")
@click.argument("request_id")
@click.pass_context
def gate_promote(ctx, request_id):
    _run(ctx, lambda b: b.promote(request_id))


@gate.command("rollback")
@click.option("--env", required=True)
@click.option("--bundle", required=True)
@click.option("--incident", "incident_id", required=True)
@click.pass_context
def gate_rollback(ctx, env, bundle, incident_id):
    _run(ctx, lambda b: b.rollback(env, bundle, incident_id))


@gate.command("deployments")
@click.option("--env", default=None)
@click.option("--bundle-id", default=None)
@click.pass_context
def gate_deployments(ctx, env, bundle_id):
    _run(ctx, lambda b: b.list_deployments(env, bundle_id))


@gate.command("audit")
@click.pass_context
def gate_audit(ctx):
    _run(ctx, lambda b: b.replay_audit())


# -- incident ---------------------------------------------------------------------


@main.group()
def incident():
    """Escalation incidents and their lifecycle."""


@incident.command("list")
@click.option("--state", default=None)
@click.option("--bundle-id", default=None)
@click.pass_context
def incident_list(ctx, state, bundle_id):
    _run(ctx, lambda b: b.list_incidents(state, bundle_id))


@incident.command("show")
@click.argument("incident_id")
@click.pass_context
def incident_show(ctx, incident_id):
    _run(ctx, lambda b: b.get_incident(incident_id))


@incident.command("transition")
@click.argument("incident_id")
@click.option("--event", required=True)
@click.option("--actor", default=None)
@click.option("--resolution", default=None)
@click.option("--rollback-ref", default=None)
@click.pass_context
def incident_transition(ctx, incident_id, event, actor, resolution, rollback_ref):
    _run(
        ctx,
        lambda b: b.transition_incident(
            incident_id, event, actor=actor, resolution=resolution, rollback_ref=rollback_ref
        ),
    )


@incident.command("obligations")
@click.pass_context
def incident_obligations(ctx):
    _run(ctx, lambda b: b.retrain_obligations())


# -- service ----------------------------------------------------------------------


@main.command("health")
@click.pass_context
def health(ctx):
    _run(ctx, lambda b: b.healthz())


@main.command("serve")
@click.pass_context
def serve(ctx):
    """Run the HTTP service over the configured data directory."""
    from . import api

    try:
        config = load_config(path=ctx.obj["config"]) if ctx.obj["config"] else load_config({})
        api.serve(config)
    except StackdError as err:
        click.echo(f"error {err.code}: {err.message}", err=True)
        ctx.exit(1)
