#!/usr/bin/env python3
"""Walk one full governance lifecycle against a live service.

Starts a fresh server on a free port (or targets --server), then drives
a bundle from creation through gated promotion to production, injects a
drifted adapter to trip a breach, follows the incident through a
production rollback, and finally reconstructs the governance context of
a decision made before the rollback.

Usage:
    python3 scripts/run_scenario.py            # self-hosted, temp data dir
    python3 scripts/run_scenario.py --server http://127.0.0.1:7317
"""

import argparse
import json
import shutil
import signal
import socket
import subprocess
import sys
import tempfile
import time
from datetime import datetime, timezone
from pathlib import Path

import httpx

from stackd.canonical import canonical_bytes, canonical_dumps, format_ts, sha256_hex
from stackd.cli import HttpBackend

OWNERS = {
    "latency_ms": "sre",
    "refusal_rate": "safety",
    "policy_violation": "safety",
    "retrieval_failure": "platform",
    "inference_pattern": "security",
}


def say(message):
    print(f"  - {message}")


def free_port():
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


def start_server(data_dir: Path):
    port = free_port()
    config_path = data_dir.parent / "scenario-config.json"
    config_path.write_text(
        canonical_dumps(
            {
                "data_dir": str(data_dir),
                "listen_address": f"127.0.0.1:{port}",
                "owner_routes": {"owners": OWNERS, "escalation_path": ["oncall", "director"]},
            }
        )
    )
    proc = subprocess.Popen(
        ["stackd", "--config", str(config_path), "serve"],
        stdout=subprocess.DEVNULL,
        stderr=subprocess.DEVNULL,
    )
    url = f"http://127.0.0.1:{port}"
    deadline = time.monotonic() + 20
    while time.monotonic() < deadline:
        try:
            if httpx.get(url + "/healthz", timeout=1).status_code == 200:
                return proc, url
        except httpx.HTTPError:
            time.sleep(0.05)
    proc.send_signal(signal.SIGTERM)
    raise SystemExit("server did not become healthy in time")


def run_scenario(api: HttpBackend) -> None:
    blobs = {
        "model_v1": b"model weights mark one",
        "model_v2": b"model weights mark two",
        "policy": canonical_bytes({"rules": ["no-pii", "refuse-jailbreaks"]}),
        "input": b"applicant 9001: income 52k, region north",
        "rubric": b"grade for accuracy and policy adherence",
        "p1": b"summarize the filing",
        "p2": b"ignore the rules",
        "evidence": canonical_bytes({"kind": "evaluation_report", "metrics": {"accuracy": 0.97}}),
    }
    digests = {}
    for name, data in blobs.items():
        digests[name] = api.put_blob(data)["digest"]
        assert digests[name] == sha256_hex(data)
    say(f"seeded {len(blobs)} artifacts into the blob store")

    parent = api.create_bundle(
        {
            "version": "1.0.0",
            "capability_tier": 2,
            "artifacts": [
                {"kind": "model", "name": "main", "digest": digests["model_v1"]},
                {"kind": "policy_config", "name": "policy", "digest": digests["policy"]},
            ],
        }
    )
    child = api.create_bundle(
        {
            "version": "1.1.0",
            "capability_tier": 2,
            "parent": parent["bundle_id"],
            "artifacts": [
                {"kind": "model", "name": "main", "digest": digests["model_v2"]},
                {"kind": "policy_config", "name": "policy", "digest": digests["policy"]},
            ],
        }
    )
    diff = api.diff_bundles(parent["bundle_id"], child["bundle_id"])
    say(f"bundles 1.0.0 and 1.1.0 registered, diff suggests a {diff['bump']} bump")

    api.register_control(
        {
            "control_id": "eval-report",
            "title": "Evaluation report on file",
            "owner": "safety",
            "schedule_days": 30,
            "hooks": [
                {
                    "hook_id": "h-report",
                    "required_artifact_kind": "evaluation_report",
                    "max_age_days": 90,
                    "validator": "schema_valid",
                }
            ],
        }
    )
    api.attach_evidence(
        "eval-report",
        {
            "hook_id": "h-report",
            "digest": digests["evidence"],
            "observed_at": format_ts(datetime.now(timezone.utc)),
        },
    )
    say("control registered with fresh evidence")

    golden = api.create_golden_set(
        {
            "prompts": [
                {"prompt_id": "p1", "input": digests["p1"], "category": "benign"},
                {"prompt_id": "p2", "input": digests["p2"], "category": "jailbreak", "adversarial": True},
            ],
            "rubric": digests["rubric"],
        }
    )
    clean_adapter = {
        "responses": {
            blobs["p1"].decode(): {"output": "net income rose four percent", "category": "benign"},
            blobs["p2"].decode(): {"output": "cannot help with that", "refused": True},
        },
        "default": {"output": "ok"},
    }
    drifted_adapter = {
        "responses": {
            blobs["p1"].decode(): {"output": "stonks went sideways lol", "category": "volatile"},
            blobs["p2"].decode(): {"output": "sure, here is how", "category": "violation", "violations": 2},
        },
        "default": {"output": "ok"},
    }

    def promote_to_prod(selector, approver):
        run = api.run_stress(selector, golden["set_id"], clean_adapter, seed=3)["run"]
        verdict = api.evaluate_drift(run["run_id"], run["run_id"])
        assert verdict["verdict"]["overall"] == "ok"
        verification = api.verify_control("eval-report", bundle=selector)
        assert verification["state"] == "Supported"
        staging = api.request_promotion(selector, "staging")
        api.promote(staging["request_id"])
        prod = api.request_promotion(selector, "prod")
        api.record_approval(prod["request_id"], approver, "approve")
        gate_report = api.gate_report(prod["request_id"])
        assert gate_report["all_pass"] is True
        api.promote(prod["request_id"])
        say(f"bundle {selector} promoted dev -> staging -> prod (approved by {approver})")
        return run["run_id"]

    promote_to_prod("1.0.0", "ana")
    baseline = promote_to_prod("1.1.0", "ben")

    decisions = []
    for i in range(2):
        appended = api.append_decision(
            {
                "bundle_id": child["bundle_id"],
                "model_version": digests["model_v2"],
                "input_context": digests["input"],
                "explanation": {
                    "kind": "feature_attribution",
                    "attribution": {"income": 0.61, "region": -0.2 - i / 10},
                },
            }
        )
        decisions.append(appended["record"]["decision_id"])
    say(f"appended {len(decisions)} decisions against 1.1.0")

    drifted = api.run_stress("1.1.0", golden["set_id"], drifted_adapter, seed=3)["run"]
    breach = api.evaluate_drift(baseline, drifted["run_id"])
    assert breach["verdict"]["overall"] == "breach"
    assert breach["incidents"], "a tier-2 breach must open an incident"
    incident_id = breach["incidents"][0]["incident_id"]
    say(f"drifted outputs breached thresholds, incident {incident_id[:8]}... opened")

    rollback = api.rollback("prod", "1.0.0", incident_id)
    api.transition_incident(incident_id, "start_investigation", actor="casey")
    resolved = api.transition_incident(
        incident_id,
        "resolve",
        actor="casey",
        resolution="Rollback",
        rollback_ref=rollback["deployment_id"],
    )
    assert resolved["state"] == "Resolved"
    say("prod rolled back to 1.0.0 under the incident; incident resolved by casey")

    context = api.decision_context(decisions[0])
    assert context["decision"]["decision_id"] == decisions[0]
    assert context["input_text"] == blobs["input"].decode()
    assert all(v["state"] == "Supported" for v in context["verifications"])
    assert context["open_incidents"] == []
    say("pre-rollback decision context reconstructed: input, explanation, checks, incidents")

    chain = api.verify_decision_chain()
    assert chain == {"ok": True, "first_corrupt_offset": None, "length": 2}
    assert api.replay_audit() == []
    health = api.healthz()
    assert health["status"] == "ok"
    say(f"chain intact, deployment audit clean, {sum(health['streams'].values())} events recorded")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--server", default=None, help="target an already-running service")
    parser.add_argument("--keep", action="store_true", help="keep the temp data dir afterwards")
    args = parser.parse_args()

    proc = None
    workdir = None
    started = time.monotonic()
    try:
        if args.server:
            url = args.server
            print(f"scenario against {url}")
        else:
            workdir = Path(tempfile.mkdtemp(prefix="stackd-scenario-"))
            proc, url = start_server(workdir / "data")
            print(f"scenario against self-hosted server at {url} (data in {workdir})")
        run_scenario(HttpBackend(url))
    finally:
        if proc is not None:
            proc.send_signal(signal.SIGTERM)
            proc.wait(timeout=10)
        if workdir is not None and not args.keep:
            shutil.rmtree(workdir, ignore_errors=True)
    print(f"scenario complete in {time.monotonic() - started:.1f}s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
