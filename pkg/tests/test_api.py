"""HTTP layer: routing, status mapping, canonical bodies, thin-adapter behavior."""

import json

import pytest
from fastapi.testclient import TestClient

from conftest import manifest_for, seed_blob
from stackd.api import create_app, status_for
from stackd.canonical import canonical_bytes, canonical_dumps, sha256_hex
from stackd.service import ControlPlane
from test_service import (
    CLEAN_ADAPTER,
    DRIFTED_ADAPTER,
    START,
    attach_fresh_evidence,
    make_bundle,
    make_golden,
    plane_config,
    register_eval_control,
)


@pytest.fixture
def plane(tmp_path):
    return ControlPlane(plane_config(tmp_path / "data"))


@pytest.fixture
def client(plane):
    return TestClient(create_app(plane))


def post(client, path, doc=None):
    return client.post(path, content=canonical_dumps(doc or {}))


# -- transport basics -----------------------------------------------------------


def test_healthz_round_trip(client):
    response = client.get("/healthz")
    assert response.status_code == 200
    doc = response.json()
    assert doc["status"] == "ok"
    # Responses are canonical JSON, byte for byte.
    assert response.content == canonical_bytes(doc)


def test_blob_round_trip(client):
    payload = b"raw artifact bytes \xf0\x9f"
    created = client.post("/blobs", content=payload)
    assert created.status_code == 201
    digest = created.json()["digest"]
    assert digest == sha256_hex(payload)
    fetched = client.get(f"/blobs/{digest}")
    assert fetched.status_code == 200
    assert fetched.content == payload
    assert fetched.headers["content-type"] == "application/octet-stream"


def test_error_body_carries_code(client):
    response = client.get("/bundles/deadbeefdeadbeef")
    assert response.status_code == 404
    doc = response.json()
    assert doc["code"] == "not-found"
    assert "message" in doc


def test_invalid_json_rejected(client):
    response = client.post("/bundles", content=b"{not json")
    assert response.status_code == 400
    assert response.json()["code"] == "invalid-json"
    response = client.post("/bundles", content=b"[1,2]")
    assert response.json()["code"] == "invalid-json"


def test_status_mapping_spot_checks():
    assert status_for("unknown-incident") == 404
    assert status_for("gates-not-passed") == 409
    assert status_for("dangling-digest") == 422
    assert status_for("integrity-violation") == 500
    assert status_for("invalid-manifest") == 400


# -- bundles over HTTP -------------------------------------------------------------


def test_bundle_endpoints(client, plane):
    manifest = manifest_for(plane.store, "1.0.0")
    created = post(client, "/bundles", manifest)
    assert created.status_code == 201
    bundle = created.json()

    assert client.get("/bundles").json() == [bundle]
    assert client.get(f"/bundles/{bundle['bundle_id'][:12]}").json() == bundle
    assert client.get("/bundles/1.0.0").json() == bundle

    integrity = client.get(f"/bundles/{bundle['bundle_id']}/integrity").json()
    assert integrity["ok"] is True

    child = manifest_for(plane.store, "1.1.0", parent=bundle["bundle_id"], model=b"weights-v2")
    child_doc = post(client, "/bundles", child).json()
    diff = post(client, "/bundles/diff", {"a": bundle["bundle_id"], "b": child_doc["bundle_id"]})
    assert diff.json()["bump"] == "major"


def test_env_skip_maps_to_conflict(client, plane):
    bundle = make_bundle(plane)
    response = post(client, "/promotions", {"bundle": bundle["bundle_id"], "target_env": "prod"})
    assert response.status_code == 409
    assert response.json()["code"] == "env-skip"


# -- decisions over HTTP -------------------------------------------------------------


def decision_doc(plane, bundle, text=b"loan application 771"):
    return {
        "bundle_id": bundle["bundle_id"],
        "model_version": bundle["artifacts"][0]["digest"],
        "input_context": seed_blob(plane.store, text),
        "explanation": {
            "kind": "feature_attribution",
            "attribution": {"income": 0.6, "debt": -0.4},
        },
    }


def test_decision_endpoints(client, plane):
    bundle = make_bundle(plane)
    first = post(client, "/decisions", decision_doc(plane, bundle))
    assert first.status_code == 201
    chained = first.json()
    assert chained["prev_hash"] == "0" * 64

    second = post(client, "/decisions", decision_doc(plane, bundle, b"loan application 772")).json()
    assert second["prev_hash"] == chained["record_hash"]

    listed = client.get("/decisions", params={"bundle_id": bundle["bundle_id"]}).json()
    assert len(listed) == 2

    chain = client.get("/decisions/chain").json()
    assert chain == {"ok": True, "first_corrupt_offset": None, "length": 2}

    decision_id = chained["record"]["decision_id"]
    assert client.get(f"/decisions/{decision_id}").json() == chained

    context = client.get(f"/decisions/{decision_id}/context").json()
    assert context["record_hash"] == chained["record_hash"]
    assert context["input_text"] == "loan application 771"

    delta = post(
        client,
        "/explanations/delta",
        {"a": decision_id, "b": second["record"]["decision_id"], "k": 2},
    ).json()
    assert delta["delta_score"] == 0.0


# -- drift over HTTP -----------------------------------------------------------------


def test_stress_and_drift_endpoints(client, plane):
    bundle = make_bundle(plane)
    golden = make_golden(plane)

    baseline = post(
        client,
        "/stress-runs",
        {"bundle": bundle["bundle_id"], "set_id": golden["set_id"], "adapter": CLEAN_ADAPTER, "seed": 1},
    )
    assert baseline.status_code == 201
    base_run = baseline.json()["run"]
    stored = client.get(f"/stress-runs/{base_run['run_id']}").json()
    assert stored == {k: v for k, v in base_run.items() if k != "ran_at"}

    drifted = post(
        client,
        "/stress-runs",
        {"bundle": bundle["bundle_id"], "set_id": golden["set_id"], "adapter": DRIFTED_ADAPTER, "seed": 1},
    ).json()["run"]

    score = post(
        client, "/drift/score", {"baseline_run": base_run["run_id"], "current_run": drifted["run_id"]}
    ).json()
    assert score["overall"] == "breach"

    outcome = post(
        client,
        "/drift/evaluate",
        {"baseline_run": base_run["run_id"], "current_run": drifted["run_id"]},
    ).json()
    assert outcome["verdict"]["overall"] == "breach"
    assert len(outcome["incidents"]) == 1

    verdicts = client.get("/drift/verdicts", params={"bundle_id": bundle["bundle_id"]}).json()
    assert len(verdicts) == 1

    incidents = client.get("/incidents", params={"state": "Open"}).json()
    assert [i["incident_id"] for i in incidents] == [outcome["incidents"][0]["incident_id"]]


def test_golden_set_endpoints(client, plane):
    golden = make_golden(plane)
    fetched = client.get(f"/golden-sets/{golden['set_id']}").json()
    assert fetched == golden
    bad = post(client, "/golden-sets", {"prompts": [], "rubric": "f" * 64})
    assert bad.status_code == 400
    assert bad.json()["code"] == "invalid-golden-set"


# -- telemetry over HTTP ----------------------------------------------------------------


def test_telemetry_endpoints(client, plane):
    bundle = make_bundle(plane)
    for idx in range(15):
        response = post(
            client,
            "/telemetry",
            {
                "kind": "latency_ms",
                "bundle_id": bundle["bundle_id"],
                "value": 100.0 + (idx % 4),
                "observed_at": f"2026-08-15T09:{idx:02d}:00.000Z",
            },
        )
        assert response.status_code == 201

    aggregate = client.get(
        "/telemetry/latency_ms/aggregate",
        params={"start": "2026-08-15T09:00:00.000Z", "end": "2026-08-15T09:05:00.000Z"},
    ).json()
    assert aggregate["count"] == 5

    missing = client.get("/telemetry/latency_ms/aggregate")
    assert missing.status_code == 400
    assert missing.json()["code"] == "invalid-window"

    detect = post(client, "/telemetry/latency_ms/detect").json()
    assert detect == {"alerts": [], "incidents": []}
    assert client.get("/alerts").json() == []

    bad = post(
        client,
        "/telemetry",
        {"kind": "latency_ms", "bundle_id": bundle["bundle_id"], "value": -1.0,
         "observed_at": "2026-08-15T10:00:00.000Z"},
    )
    assert bad.status_code == 400
    assert bad.json()["code"] == "invalid-signal"


# -- promotion and incidents over HTTP ------------------------------------------------------


def test_promotion_flow_over_http(client, plane):
    bundle = make_bundle(plane)
    golden = make_golden(plane)
    register_eval_control(plane)
    attach_fresh_evidence(plane, "eval-report")
    a = post(
        client,
        "/stress-runs",
        {"bundle": bundle["bundle_id"], "set_id": golden["set_id"], "adapter": CLEAN_ADAPTER, "seed": 1},
    ).json()["run"]
    b = post(
        client,
        "/stress-runs",
        {"bundle": bundle["bundle_id"], "set_id": golden["set_id"], "adapter": CLEAN_ADAPTER, "seed": 2},
    ).json()["run"]
    post(client, "/drift/evaluate", {"baseline_run": a["run_id"], "current_run": b["run_id"]})

    request = post(
        client, "/promotions", {"bundle": bundle["bundle_id"], "target_env": "staging"}
    ).json()
    rid = request["request_id"]

    report = client.get(f"/promotions/{rid}/gates").json()
    assert report["all_pass"] is True

    deployment = client.post(f"/promotions/{rid}/promote").json()
    assert deployment["env"] == "staging"
    assert client.get("/promotions", params={"state": "promoted"}).json()[0]["request_id"] == rid

    prod = post(client, "/promotions", {"bundle": bundle["bundle_id"], "target_env": "prod"}).json()
    blocked = client.post(f"/promotions/{prod['request_id']}/promote")
    assert blocked.status_code == 409
    assert blocked.json()["code"] == "gates-not-passed"
    assert blocked.json()["details"]["report"]["checks"]["approvals_met"]["passed"] is False

    approval = post(
        client,
        f"/promotions/{prod['request_id']}/approvals",
        {"approver": "ana", "decision": "approve"},
    ).json()
    assert approval["state"] == "approved_pending"
    assert client.post(f"/promotions/{prod['request_id']}/promote").json()["env"] == "prod"

    deployments = client.get("/deployments", params={"env": "prod"}).json()
    assert len(deployments) == 1
    assert client.get("/deployments/audit").json() == []


def test_incident_lifecycle_over_http(client, plane):
    old = make_bundle(plane, "1.0.0")
    new = make_bundle(plane, "1.1.0", parent=old["bundle_id"])
    golden = make_golden(plane)
    register_eval_control(plane)
    attach_fresh_evidence(plane, "eval-report")

    for b in (old, new):
        x = post(client, "/stress-runs", {"bundle": b["bundle_id"], "set_id": golden["set_id"],
                                          "adapter": CLEAN_ADAPTER, "seed": 1}).json()["run"]
        y = post(client, "/stress-runs", {"bundle": b["bundle_id"], "set_id": golden["set_id"],
                                          "adapter": CLEAN_ADAPTER, "seed": 2}).json()["run"]
        post(client, "/drift/evaluate", {"baseline_run": x["run_id"], "current_run": y["run_id"]})
        request = post(client, "/promotions", {"bundle": b["bundle_id"], "target_env": "staging"}).json()
        client.post(f"/promotions/{request['request_id']}/promote")

    base = post(client, "/stress-runs", {"bundle": new["bundle_id"], "set_id": golden["set_id"],
                                         "adapter": CLEAN_ADAPTER, "seed": 5}).json()["run"]
    bad = post(client, "/stress-runs", {"bundle": new["bundle_id"], "set_id": golden["set_id"],
                                        "adapter": DRIFTED_ADAPTER, "seed": 5}).json()["run"]
    outcome = post(
        client, "/drift/evaluate", {"baseline_run": base["run_id"], "current_run": bad["run_id"]}
    ).json()
    incident_id = outcome["incidents"][0]["incident_id"]
    assert client.get(f"/incidents/{incident_id}").json()["state"] == "Open"

    # Resolving with Rollback before any rollback deployment exists must fail.
    post(client, f"/incidents/{incident_id}/transition", {"event": "start_investigation"})
    premature = post(
        client,
        f"/incidents/{incident_id}/transition",
        {"event": "resolve", "actor": "omar", "resolution": "Rollback", "rollback_ref": "nope"},
    )
    assert premature.status_code == 400
    assert premature.json()["code"] == "missing-rollback-ref"

    rollback = post(
        client,
        "/rollbacks",
        {"env": "staging", "bundle": old["bundle_id"], "incident_id": incident_id},
    )
    assert rollback.status_code == 201
    ref = rollback.json()["deployment_id"]

    no_actor = post(
        client,
        f"/incidents/{incident_id}/transition",
        {"event": "resolve", "resolution": "Rollback", "rollback_ref": ref},
    )
    assert no_actor.status_code == 400
    assert no_actor.json()["code"] == "missing-actor"

    resolved = post(
        client,
        f"/incidents/{incident_id}/transition",
        {"event": "resolve", "actor": "omar", "resolution": "Rollback", "rollback_ref": ref},
    ).json()
    assert resolved["state"] == "Resolved"

    retrain = client.get("/retrain-obligations").json()
    assert retrain == []
