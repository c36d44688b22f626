"""Gated promotion through dev -> staging -> prod, and incident-gated rollback.

A promotion request targets exactly one environment above the
bundle's current highest deployment (every bundle starts implicitly in
dev). Promotion requires every applicable gate check to pass:

    evaluation_pass   the bundle's latest stress run exists and the
                      drift verdict evaluated against it is not breach
    evidence_rollup   Supported; for prod it must also be non-vacuous
    monitoring_ready  owner routes exist for all five signal kinds
    approvals_met     enough distinct approvals for (tier, env), no rejects
    stress_pass       tier 4 bundles entering prod only: the latest run
                      exercised adversarial prompts and none failed

Rollback re-points an environment at a previously deployed bundle and
must cite an open or investigating incident; the deployment event is
tagged with it. Every prod deployment event therefore carries either
an all_pass gate report or an incident reference, which the replay
audit checks.
"""

from __future__ import annotations

from .canonical import format_ts, new_sortable_id
from .errors import StackdError
from .store import Store

PROMOTION_STREAM = "promotions"
DEPLOYMENT_STREAM = "deployments"

ENVIRONMENTS = ("dev", "staging", "prod")

SIGNAL_KINDS_REQUIRED = (
    "latency_ms",
    "refusal_rate",
    "policy_violation",
    "retrieval_failure",
    "inference_pattern",
)

# Distinct approvals required per environment and capability tier.
DEFAULT_APPROVALS = {
    "staging": {1: 0, 2: 0, 3: 1, 4: 1},
    "prod": {1: 1, 2: 1, 3: 2, 4: 2},
}


def next_environment(current: str) -> str | None:
    idx = ENVIRONMENTS.index(current)
    if idx + 1 >= len(ENVIRONMENTS):
        return None
    return ENVIRONMENTS[idx + 1]


def validate_approval_table(table: dict) -> dict:
    merged = {}
    for env in ("staging", "prod"):
        merged[env] = {}
        source = table.get(env, {})
        for tier in (1, 2, 3, 4):
            count = source.get(tier, source.get(str(tier), DEFAULT_APPROVALS[env][tier]))
            if not isinstance(count, int) or isinstance(count, bool) or count < 0:
                raise StackdError(
                    "invalid-config", f"approval count for {env} tier {tier} must be an integer >= 0"
                )
            merged[env][tier] = count
    return merged


class PromotionGate:
    def __init__(self, store: Store, bundles, clock, rng, approval_table: dict | None = None):
        self._store = store
        self._bundles = bundles
        self._clock = clock
        self._rng = rng
        self._approvals = validate_approval_table(approval_table or {})

    # -- request folding --------------------------------------------------

    def _fold(self) -> dict[str, dict]:
        requests: dict[str, dict] = {}
        if not self._store.stream_exists(PROMOTION_STREAM):
            return requests
        for event in self._store.read_events(PROMOTION_STREAM):
            doc = event.payload
            if doc["type"] == "requested":
                requests[doc["request_id"]] = {
                    "request_id": doc["request_id"],
                    "bundle_id": doc["bundle_id"],
                    "target_env": doc["target_env"],
                    "state": "open",
                    "approvals": [],
                    "created_at": doc["created_at"],
                }
            elif doc["type"] == "approval":
                request = requests[doc["request_id"]]
                request["approvals"].append(
                    {"approver": doc["approver"], "decision": doc["decision"], "at": doc["at"]}
                )
                if doc["decision"] == "reject":
                    request["state"] = "rejected"
                elif request["state"] == "open":
                    request["state"] = "approved_pending"
            elif doc["type"] == "promoted":
                requests[doc["request_id"]]["state"] = "promoted"
        return requests

    def requests(self, state=None, bundle_id=None) -> list[dict]:
        found = [
            r
            for r in self._fold().values()
            if (state is None or r["state"] == state)
            and (bundle_id is None or r["bundle_id"] == bundle_id)
        ]
        return sorted(found, key=lambda r: r["request_id"])

    def get(self, request_id: str) -> dict:
        request = self._fold().get(request_id)
        if request is None:
            raise StackdError(
                "unknown-request", f"no promotion request {request_id}", {"request_id": request_id}
            )
        return request

    # -- deployments -------------------------------------------------------

    def deployments(self, env=None, bundle_id=None) -> list[dict]:
        if not self._store.stream_exists(DEPLOYMENT_STREAM):
            return []
        found = []
        for event in self._store.read_events(DEPLOYMENT_STREAM):
            doc = event.payload
            if env is not None and doc["env"] != env:
                continue
            if bundle_id is not None and doc["bundle_id"] != bundle_id:
                continue
            found.append(doc)
        return found

    def highest_env(self, bundle_id: str) -> str:
        """Highest environment this bundle has ever been deployed to; dev is implicit."""
        highest = 0
        for doc in self.deployments(bundle_id=bundle_id):
            highest = max(highest, ENVIRONMENTS.index(doc["env"]))
        return ENVIRONMENTS[highest]

    def current_bundle(self, env: str) -> str | None:
        """Bundle an environment currently points at (last deployment wins)."""
        docs = self.deployments(env=env)
        return docs[-1]["bundle_id"] if docs else None

    # -- operations ----------------------------------------------------------

    def request(self, bundle_id: str, target_env: str) -> dict:
        bundle = self._bundles.get(bundle_id)
        if target_env not in ENVIRONMENTS:
            raise StackdError("env-skip", f"unknown environment {target_env!r}")
        expected = next_environment(self.highest_env(bundle.bundle_id))
        if expected is None:
            raise StackdError(
                "env-skip",
                f"bundle is already at {ENVIRONMENTS[-1]}, nothing above it",
                {"target_env": target_env},
            )
        if target_env != expected:
            raise StackdError(
                "env-skip",
                f"next environment for this bundle is {expected}, not {target_env}",
                {"expected": expected, "target_env": target_env},
            )
        at = self._clock.now()
        request = {
            "request_id": new_sortable_id(self._rng, at),
            "bundle_id": bundle.bundle_id,
            "target_env": target_env,
            "state": "open",
            "approvals": [],
            "created_at": format_ts(at),
        }
        self._store.append_event(
            PROMOTION_STREAM,
            {
                "type": "requested",
                "request_id": request["request_id"],
                "bundle_id": bundle.bundle_id,
                "target_env": target_env,
                "created_at": request["created_at"],
            },
        )
        return request

    def record_approval(self, request_id: str, approver: str, decision: str) -> dict:
        request = self.get(request_id)
        if request["state"] not in ("open", "approved_pending"):
            raise StackdError(
                "invalid-state",
                f"request is {request['state']}, approvals are closed",
                {"state": request["state"]},
            )
        if not approver or not isinstance(approver, str) or not approver.strip():
            raise StackdError("missing-actor", "approvals require a named approver")
        if decision not in ("approve", "reject"):
            raise StackdError("invalid-state", f"decision must be approve or reject, got {decision!r}")
        if any(a["approver"] == approver for a in request["approvals"]):
            raise StackdError(
                "duplicate-approver", f"{approver} already voted on this request",
                {"approver": approver},
            )
        self._store.append_event(
            PROMOTION_STREAM,
            {
                "type": "approval",
                "request_id": request_id,
                "approver": approver,
                "decision": decision,
                "at": format_ts(self._clock.now()),
            },
        )
        return self.get(request_id)

    # -- gate evaluation --------------------------------------------------------

    def evaluate(self, request: dict, context: dict) -> dict:
        """Pure gate check against an assembled context.

        context carries: latest_run (stress run doc or None), latest_verdict
        (verdict doc for that run or None), rollup ({state, vacuous}),
        monitoring_ready (bool), golden_set (doc for latest_run or None).
        """
        bundle = self._bundles.get(request["bundle_id"])
        env = request["target_env"]
        tier = bundle.capability_tier

        latest_run = context.get("latest_run")
        latest_verdict = context.get("latest_verdict")
        evaluation_pass = (
            latest_run is not None
            and latest_verdict is not None
            and latest_verdict.get("overall") != "breach"
        )

        rollup = context.get("rollup") or {"state": "Unsupported", "vacuous": False}
        if env == "prod":
            rollup_pass = rollup["state"] == "Supported" and not rollup["vacuous"]
        else:
            rollup_pass = rollup["state"] == "Supported"

        monitoring_ready = bool(context.get("monitoring_ready"))

        required = self._approvals[env][tier] if env in self._approvals else 0
        approvals = request["approvals"]
        approve_count = sum(1 for a in approvals if a["decision"] == "approve")
        rejects = sum(1 for a in approvals if a["decision"] == "reject")
        approvals_met = approve_count >= required and rejects == 0

        stress_applicable = tier == 4 and env == "prod"
        if stress_applicable:
            golden_set = context.get("golden_set")
            if latest_run is None or golden_set is None:
                stress_pass = False
            else:
                adversarial_ids = {
                    p["prompt_id"] for p in golden_set["prompts"] if p.get("adversarial")
                }
                if not adversarial_ids:
                    stress_pass = False
                else:
                    stress_pass = all(
                        not o["failed"]
                        for o in latest_run["outputs"]
                        if o["prompt_id"] in adversarial_ids
                    )
        else:
            stress_pass = "n/a"

        checks = {
            "evaluation_pass": evaluation_pass,
            "evidence_rollup": {
                "state": rollup["state"],
                "vacuous": rollup["vacuous"],
                "passed": rollup_pass,
            },
            "monitoring_ready": monitoring_ready,
            "approvals_met": {
                "passed": approvals_met,
                "required": required,
                "approvals": approve_count,
                "rejects": rejects,
            },
            "stress_pass": stress_pass,
        }
        all_pass = (
            evaluation_pass
            and rollup_pass
            and monitoring_ready
            and approvals_met
            and (stress_pass is True or stress_pass == "n/a")
        )
        return {
            "request_id": request["request_id"],
            "bundle_id": bundle.bundle_id,
            "target_env": env,
            "capability_tier": tier,
            "checks": checks,
            "all_pass": all_pass,
        }

    def promote(self, request_id: str, context: dict) -> dict:
        """Deploy the bundle to the request's target once every gate passes."""
        request = self.get(request_id)
        if request["state"] not in ("open", "approved_pending"):
            raise StackdError(
                "invalid-state",
                f"request is {request['state']}, cannot promote",
                {"state": request["state"]},
            )
        report = self.evaluate(request, context)
        if not report["all_pass"]:
            raise StackdError(
                "gates-not-passed",
                f"gate checks failed for {request['target_env']}",
                {"report": report},
            )
        at = self._clock.now()
        deployment = {
            "deployment_id": new_sortable_id(self._rng, at),
            "type": "promotion",
            "request_id": request_id,
            "bundle_id": request["bundle_id"],
            "env": request["target_env"],
            "at": format_ts(at),
            "gate_report": report,
        }
        self._store.append_event(DEPLOYMENT_STREAM, dict(deployment))
        self._store.append_event(
            PROMOTION_STREAM,
            {
                "type": "promoted",
                "request_id": request_id,
                "deployment_id": deployment["deployment_id"],
                "at": deployment["at"],
                "gate_report": report,
            },
        )
        return deployment

    def rollback(self, env: str, to_bundle_id: str, incident: dict) -> dict:
        """Re-point env at a previously deployed bundle under an open incident."""
        if env not in ENVIRONMENTS:
            raise StackdError("env-skip", f"unknown environment {env!r}")
        if not any(d["bundle_id"] == to_bundle_id for d in self.deployments(env=env)):
            raise StackdError(
                "never-deployed-there",
                f"bundle was never deployed to {env}",
                {"env": env, "bundle_id": to_bundle_id},
            )
        if incident is None:
            raise StackdError("unknown-incident", "rollbacks require a governance incident")
        if incident["state"] not in ("Open", "Investigating"):
            raise StackdError(
                "incident-not-open",
                f"incident is {incident['state']}, rollbacks need an active incident",
                {"state": incident["state"]},
            )
        at = self._clock.now()
        deployment = {
            "deployment_id": new_sortable_id(self._rng, at),
            "type": "rollback",
            "bundle_id": to_bundle_id,
            "env": env,
            "at": format_ts(at),
            "incident_id": incident["incident_id"],
        }
        self._store.append_event(DEPLOYMENT_STREAM, dict(deployment))
        return deployment

    def replay_audit(self) -> list[dict]:
        """Scan deployments for prod entries lacking a justification."""
        violations = []
        for doc in self.deployments(env="prod"):
            if doc["type"] == "promotion":
                report = doc.get("gate_report")
                if not report or report.get("all_pass") is not True:
                    violations.append(doc)
            elif doc["type"] == "rollback":
                if not doc.get("incident_id"):
                    violations.append(doc)
            else:
                violations.append(doc)
        return violations
