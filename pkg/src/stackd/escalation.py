"""Capability-tiered escalation rules and the incident state machine.

Governance intensity scales with the bundle's capability tier; the
mechanism profile is cumulative, so every tier carries everything the
tiers below it require. Trigger rules decide when a drift verdict, a
routed anomaly alert, or an adversarial stress failure must open an
incident, and they are monotone in tier: anything that escalates at
tier t also escalates at every tier above t.

Incidents move Open -> Investigating -> Resolved{Rollback | Retrain |
Accept}. Resolution always requires a named human actor; Rollback
additionally requires a reference to the rollback deployment that was
performed under this incident.
"""

from __future__ import annotations

from .canonical import digest_of, format_ts, new_sortable_id, parse_ts
from .errors import StackdError
from .store import Store

STREAM = "incidents"

MECHANISMS_BY_TIER = {
    1: frozenset({"documentation", "basic_monitoring"}),
    2: frozenset({"explainability_logging", "drift_monitoring", "evidence_verification"}),
    3: frozenset({"gated_propagation", "escalation_thresholds", "human_authority"}),
    4: frozenset({"stress_testing", "institutional_oversight"}),
}

STATES = ("Open", "Investigating", "Resolved")
RESOLUTIONS = ("Rollback", "Retrain", "Accept")

_VERDICT_RANK = {"ok": 0, "warn": 1, "breach": 2}
_ALERT_RANK = {"warn": 1, "critical": 2}

# Per-tier trigger rule: the minimum verdict level and alert severity
# that escalate, plus whether adversarial stress failures always do.
DEFAULT_POLICY = {
    1: {"verdict": "breach", "alert": None, "adversarial_failure": False},
    2: {"verdict": "breach", "alert": "critical", "adversarial_failure": False},
    3: {"verdict": "warn", "alert": "warn", "adversarial_failure": False},
    4: {"verdict": "warn", "alert": "warn", "adversarial_failure": True},
}


def required_intensity(tier: int) -> frozenset:
    """Cumulative mechanism profile for a capability tier."""
    if not isinstance(tier, int) or isinstance(tier, bool) or tier not in MECHANISMS_BY_TIER:
        raise StackdError("out-of-range", f"capability tier must be 1..4, got {tier!r}")
    profile: set[str] = set()
    for level in range(1, tier + 1):
        profile |= MECHANISMS_BY_TIER[level]
    return frozenset(profile)


def validate_policy(policy: dict) -> dict:
    """Check a trigger policy covers tiers 1..4 and stays monotone in tier."""
    merged = {}
    for tier in (1, 2, 3, 4):
        rule = policy.get(tier, policy.get(str(tier), DEFAULT_POLICY[tier]))
        verdict = rule.get("verdict")
        alert = rule.get("alert")
        if verdict not in ("warn", "breach"):
            raise StackdError("invalid-config", f"tier {tier}: verdict trigger must be warn or breach")
        if alert not in (None, "warn", "critical"):
            raise StackdError("invalid-config", f"tier {tier}: alert trigger must be warn, critical, or null")
        merged[tier] = {
            "verdict": verdict,
            "alert": alert,
            "adversarial_failure": bool(rule.get("adversarial_failure", False)),
        }
    def strength(rule):
        alert = rule["alert"]
        return (
            -_VERDICT_RANK[rule["verdict"]],
            0 if alert is None else (3 - _ALERT_RANK[alert]),
            int(rule["adversarial_failure"]),
        )
    # Componentwise, not lexicographic: every trigger must fire at least
    # as readily at tier t as at tier t-1.
    for tier in (2, 3, 4):
        if any(c < p for c, p in zip(strength(merged[tier]), strength(merged[tier - 1]))):
            raise StackdError(
                "invalid-config", f"trigger rules must be monotone in tier (tier {tier} is weaker)"
            )
    return merged


def _verdict_fires(rule, verdict) -> bool:
    if verdict is None:
        return False
    return _VERDICT_RANK[verdict["overall"]] >= _VERDICT_RANK[rule["verdict"]]


def _alert_fires(rule, alert) -> bool:
    if rule["alert"] is None:
        return False
    return _ALERT_RANK[alert["severity"]] >= _ALERT_RANK[rule["alert"]]


class EscalationEngine:
    def __init__(self, store: Store, clock, rng):
        self._store = store
        self._clock = clock
        self._rng = rng

    # -- incident folding -----------------------------------------------

    def _fold(self) -> dict[str, dict]:
        incidents: dict[str, dict] = {}
        if not self._store.stream_exists(STREAM):
            return incidents
        for event in self._store.read_events(STREAM):
            doc = event.payload
            if doc["type"] == "opened":
                incident = dict(doc["incident"])
                incidents[incident["incident_id"]] = incident
            elif doc["type"] == "transition":
                incident = incidents[doc["incident_id"]]
                incident["state"] = doc["to_state"]
                if doc.get("resolution"):
                    incident["resolution"] = doc["resolution"]
                if doc.get("obligation"):
                    incident["obligation"] = doc["obligation"]
                incident["history"] = incident.get("history", []) + [
                    {
                        k: doc[k]
                        for k in ("event", "at", "actor", "resolution", "rollback_ref")
                        if doc.get(k) is not None
                    }
                ]
        return incidents

    def incidents(self, state=None, bundle_id=None) -> list[dict]:
        """Incidents newest-first, optionally filtered."""
        found = [
            i
            for i in self._fold().values()
            if (state is None or i["state"] == state)
            and (bundle_id is None or i["bundle_id"] == bundle_id)
        ]
        return sorted(found, key=lambda i: i["incident_id"], reverse=True)

    def get(self, incident_id: str) -> dict:
        incident = self._fold().get(incident_id)
        if incident is None:
            raise StackdError(
                "unknown-incident", f"no incident {incident_id}", {"incident_id": incident_id}
            )
        return incident

    def open_at(self, at, bundle_id=None) -> list[dict]:
        """Incidents that were open or under investigation at a past instant."""
        result = []
        for incident in self._fold().values():
            if bundle_id is not None and incident["bundle_id"] != bundle_id:
                continue
            if parse_ts(incident["opened_at"]) > at:
                continue
            resolved_at = None
            for entry in incident.get("history", []):
                if entry["event"] == "resolve":
                    resolved_at = parse_ts(entry["at"])
            if resolved_at is not None and resolved_at <= at:
                continue
            result.append(incident)
        return sorted(result, key=lambda i: i["incident_id"])

    # -- escalation -----------------------------------------------------

    def _dedup_keys(self) -> set[tuple[str, str]]:
        return {(i["bundle_id"], i["cause"]["digest"]) for i in self._fold().values()}

    def _open_incident(self, bundle_id: str, cause: dict) -> dict:
        at = self._clock.now()
        incident = {
            "incident_id": new_sortable_id(self._rng, at),
            "bundle_id": bundle_id,
            "cause": {**cause, "digest": digest_of(cause)},
            "state": "Open",
            "resolution": None,
            "opened_at": format_ts(at),
            "history": [{"event": "opened", "at": format_ts(at)}],
        }
        self._store.append_event(STREAM, {"type": "opened", "incident": incident})
        return incident

    def evaluate(
        self,
        bundle,
        verdict: dict | None = None,
        alerts: list | None = None,
        stress_run: dict | None = None,
        golden_set: dict | None = None,
        policy: dict | None = None,
    ) -> list[dict]:
        """Apply the tier's trigger rule; open one incident per new cause.

        Re-evaluating the same inputs is idempotent: causes are deduped
        by (bundle, cause digest), so retries never open duplicates.
        """
        rules = validate_policy(policy or {})
        rule = rules[bundle.capability_tier]
        causes = []
        if _verdict_fires(rule, verdict):
            causes.append(
                {
                    "type": "drift_verdict",
                    "baseline_run": verdict.get("baseline_run"),
                    "current_run": verdict.get("current_run"),
                    "overall": verdict["overall"],
                }
            )
        for alert in alerts or []:
            if _alert_fires(rule, alert):
                causes.append({"type": "anomaly_alert", "alert_id": alert["alert_id"]})
        if rule["adversarial_failure"] and stress_run is not None and golden_set is not None:
            adversarial_ids = {
                p["prompt_id"] for p in golden_set["prompts"] if p.get("adversarial")
            }
            failed = [
                o["prompt_id"]
                for o in stress_run["outputs"]
                if o["failed"] and o["prompt_id"] in adversarial_ids
            ]
            if failed:
                causes.append(
                    {"type": "adversarial_stress_failure", "run_id": stress_run["run_id"]}
                )
        existing = self._dedup_keys()
        opened = []
        for cause in causes:
            key = (bundle.bundle_id, digest_of(cause))
            if key in existing:
                continue
            existing.add(key)
            opened.append(self._open_incident(bundle.bundle_id, cause))
        return opened

    # -- transitions ------------------------------------------------------

    def transition(
        self,
        incident_id: str,
        event: str,
        actor: str | None = None,
        resolution: str | None = None,
        rollback_ref: str | None = None,
        deployments=None,
    ) -> dict:
        """Advance an incident. events: start_investigation | resolve."""
        incident = self.get(incident_id)
        at = format_ts(self._clock.now())
        if event == "start_investigation":
            if incident["state"] != "Open":
                raise StackdError(
                    "illegal-transition",
                    f"cannot start investigating from {incident['state']}",
                    {"state": incident["state"]},
                )
            record = {
                "type": "transition",
                "incident_id": incident_id,
                "event": "start_investigation",
                "to_state": "Investigating",
                "at": at,
            }
            if actor:
                record["actor"] = actor
            self._store.append_event(STREAM, record)
            return self.get(incident_id)

        if event == "resolve":
            if incident["state"] != "Investigating":
                raise StackdError(
                    "illegal-transition",
                    f"cannot resolve from {incident['state']}",
                    {"state": incident["state"]},
                )
            if not actor or not isinstance(actor, str) or not actor.strip():
                raise StackdError("missing-actor", "resolution requires a named human actor")
            if resolution not in RESOLUTIONS:
                raise StackdError(
                    "invalid-resolution",
                    f"resolution must be one of {', '.join(RESOLUTIONS)}, got {resolution!r}",
                )
            record = {
                "type": "transition",
                "incident_id": incident_id,
                "event": "resolve",
                "to_state": "Resolved",
                "at": at,
                "actor": actor,
                "resolution": resolution,
            }
            if resolution == "Rollback":
                if not rollback_ref:
                    raise StackdError(
                        "missing-rollback-ref",
                        "Rollback resolution needs the rollback deployment reference",
                    )
                if deployments is not None:
                    match = [
                        d
                        for d in deployments
                        if d.get("deployment_id") == rollback_ref
                        and d.get("type") == "rollback"
                        and d.get("incident_id") == incident_id
                    ]
                    if not match:
                        raise StackdError(
                            "missing-rollback-ref",
                            f"no rollback deployment {rollback_ref} performed under this incident",
                            {"rollback_ref": rollback_ref},
                        )
                record["rollback_ref"] = rollback_ref
            if resolution == "Retrain":
                record["obligation"] = {"retrain_successor_of": incident["bundle_id"]}
            self._store.append_event(STREAM, record)
            return self.get(incident_id)

        raise StackdError(
            "illegal-transition", f"unknown transition event {event!r}", {"event": event}
        )

    def retrain_obligations(self) -> list[dict]:
        """Open retrain obligations recorded by Resolved(Retrain) incidents."""
        return [
            {"incident_id": i["incident_id"], "bundle_id": i["bundle_id"], **i["obligation"]}
            for i in self._fold().values()
            if i.get("obligation")
        ]
