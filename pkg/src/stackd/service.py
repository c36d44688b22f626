"""One facade over every registry, shared by the HTTP API and the CLI.

ControlPlane methods speak plain JSON-compatible dicts on both sides,
so a request body can be handed straight through and the response can
be serialized canonically without translation. All orchestration that
spans modules lives here: drift verdicts feeding escalation, alert
routing feeding escalation, and gate-context assembly for promotions.
Keeping it out of the transport layers means an HTTP call and a
--local CLI call append byte-identical events.
"""

from __future__ import annotations

from .adapters import StubAdapter
from .bundles import BundleRegistry
from .canonical import format_ts, new_sortable_id, normalize_ts
from .config import ServiceConfig
from .decisions import DecisionLog, DecisionRecord, ExplanationArtifact, explanation_delta
from .drift import DriftMonitor, drift_report, evaluate_drift as classify_drift, validate_thresholds
from .errors import StackdError
from .escalation import EscalationEngine
from .evidence import EvidenceRegistry
from .gates import PromotionGate
from .store import Store
from .telemetry import SIGNAL_KINDS, DetectorConfig, TelemetryHub

VERDICT_STREAM = "drift_verdicts"


def _require(doc: dict, *keys: str) -> None:
    missing = [key for key in keys if doc.get(key) is None]
    if missing:
        raise StackdError(
            "missing-field", f"required field(s): {', '.join(missing)}", {"missing": missing}
        )


class ControlPlane:
    def __init__(self, config: ServiceConfig):
        self.config = config
        self.clock = config.make_clock()
        self.rng = config.make_rng()
        self.store = Store(config.data_dir, clock=self.clock)
        self.bundles = BundleRegistry(self.store, self.clock)
        self.evidence = EvidenceRegistry(self.store, self.clock)
        self.decisions = DecisionLog(self.store, self.bundles)
        self.drift = DriftMonitor(self.store, self.bundles, self.clock)
        self.telemetry = TelemetryHub(self.store)
        self.escalation = EscalationEngine(self.store, self.clock, self.rng)
        self.gate = PromotionGate(
            self.store, self.bundles, self.clock, self.rng, config.approval_table
        )
        self._thresholds = validate_thresholds(config.drift_thresholds)
        self._policy = config.escalation_policy

    # -- blobs -------------------------------------------------------------

    def put_blob(self, data: bytes) -> dict:
        return {"digest": self.store.put_blob(data)}

    def get_blob(self, digest: str) -> bytes:
        return self.store.get_blob(digest)

    # -- bundles -----------------------------------------------------------

    def create_bundle(self, manifest: dict) -> dict:
        return self.bundles.create(manifest).to_doc()

    def get_bundle(self, selector: str) -> dict:
        return self.bundles.resolve(selector).to_doc()

    def list_bundles(self) -> list[dict]:
        return [b.to_doc() for b in self.bundles.all()]

    def diff_bundles(self, selector_a: str, selector_b: str) -> dict:
        return self.bundles.diff(self.bundles.resolve(selector_a), self.bundles.resolve(selector_b))

    def verify_bundle(self, selector: str) -> dict:
        return self.bundles.verify_integrity(self.bundles.resolve(selector).bundle_id)

    # -- controls and evidence ----------------------------------------------

    def register_control(self, doc: dict) -> dict:
        return self.evidence.register(doc).to_doc()

    def list_controls(self) -> list[dict]:
        return [c.to_doc() for c in self.evidence.controls()]

    def attach_evidence(self, control_id: str, doc: dict) -> dict:
        _require(doc, "hook_id", "digest", "observed_at")
        return self.evidence.attach(control_id, doc["hook_id"], doc["digest"], doc["observed_at"])

    def verify_control(self, control_id: str, bundle_selector: str | None = None) -> dict:
        bundle = self.bundles.resolve(bundle_selector) if bundle_selector else None
        return self.evidence.verify(control_id, self.clock.now(), bundle)

    def rollup(self, bundle_selector: str | None = None, control_ids=None) -> dict:
        bundle = self.bundles.resolve(bundle_selector) if bundle_selector else None
        return self.evidence.rollup(self.clock.now(), bundle, control_ids)

    def verifications(self, control_id=None, bundle_id=None) -> list[dict]:
        return self.evidence.verifications(control_id=control_id, bundle_id=bundle_id)

    def due_controls(self) -> list[dict]:
        return self.evidence.due(self.clock.now())

    # -- decisions ----------------------------------------------------------

    def append_decision(self, doc: dict) -> dict:
        _require(doc, "bundle_id", "model_version", "input_context", "explanation")
        bundle = self.bundles.resolve(doc["bundle_id"])
        at = self.clock.now()
        record = DecisionRecord(
            decision_id=doc.get("decision_id") or new_sortable_id(self.rng, at),
            model_version=doc["model_version"],
            bundle_id=bundle.bundle_id,
            input_context=doc["input_context"],
            explanation=ExplanationArtifact.from_doc(doc["explanation"]),
            decided_at=normalize_ts(doc["decided_at"]) if doc.get("decided_at") else format_ts(at),
        )
        return self.decisions.append(record)

    def get_decision(self, decision_id: str) -> dict:
        return self.decisions.get(decision_id)

    def query_decisions(self, bundle_id=None, model_version=None, start=None, end=None) -> list[dict]:
        return self.decisions.query(
            bundle_id=bundle_id, model_version=model_version, start=start, end=end
        )

    def verify_decision_chain(self) -> dict:
        return self.decisions.verify_chain()

    def decision_context(self, decision_id: str) -> dict:
        return self.decisions.reproduce_context(decision_id, self.evidence, self.escalation)

    def delta(self, a, b, k: int = 5) -> dict:
        """Explanation delta between two decisions (by id) or inline artifacts."""

        def artifact(ref):
            if isinstance(ref, str):
                chained = self.decisions.get(ref)
                return ExplanationArtifact.from_doc(chained["record"]["explanation"])
            return ExplanationArtifact.from_doc(ref)

        return explanation_delta(artifact(a), artifact(b), k=k, store=self.store)

    # -- drift --------------------------------------------------------------

    def create_golden_set(self, doc: dict) -> dict:
        _require(doc, "prompts", "rubric")
        return self.drift.create_golden_set(doc["prompts"], doc["rubric"])

    def get_golden_set(self, set_id: str) -> dict:
        return self.drift.get_golden_set(set_id)

    def run_stress(self, bundle_selector: str, set_id: str, adapter_doc: dict, seed: int) -> dict:
        bundle = self.bundles.resolve(bundle_selector)
        golden = self.drift.get_golden_set(set_id)
        adapter = StubAdapter.from_doc(adapter_doc)
        run = self.drift.run_stress_suite(bundle, golden, adapter, seed)
        incidents = self.escalation.evaluate(
            bundle, stress_run=run, golden_set=golden, policy=self._policy
        )
        return {"run": run, "incidents": incidents}

    def get_run(self, run_id: str) -> dict:
        return self.drift.get_run(run_id)

    def score_drift(self, baseline_run_id: str, current_run_id: str) -> dict:
        report = drift_report(
            self.drift.get_run(baseline_run_id), self.drift.get_run(current_run_id), self.store
        )
        outcome = classify_drift(report, self._thresholds)
        return {"report": report, **outcome}

    def evaluate_drift(self, baseline_run_id: str, current_run_id: str, thresholds=None) -> dict:
        """Score, persist the verdict, and escalate if the tier's rule fires."""
        baseline = self.drift.get_run(baseline_run_id)
        current = self.drift.get_run(current_run_id)
        report = drift_report(baseline, current, self.store)
        merged = validate_thresholds(thresholds) if thresholds else self._thresholds
        outcome = classify_drift(report, merged)
        verdict = {
            "baseline_run": baseline_run_id,
            "current_run": current_run_id,
            "bundle_id": current["bundle_id"],
            "report": report,
            "per_dimension": outcome["per_dimension"],
            "overall": outcome["overall"],
            "thresholds": merged,
            "evaluated_at": format_ts(self.clock.now()),
        }
        self.store.append_event(VERDICT_STREAM, dict(verdict))
        bundle = self.bundles.get(current["bundle_id"])
        incidents = self.escalation.evaluate(bundle, verdict=verdict, policy=self._policy)
        return {"verdict": verdict, "incidents": incidents}

    def drift_verdicts(self, bundle_id=None) -> list[dict]:
        if not self.store.stream_exists(VERDICT_STREAM):
            return []
        docs = [event.payload for event in self.store.read_events(VERDICT_STREAM)]
        if bundle_id is not None:
            docs = [d for d in docs if d["bundle_id"] == bundle_id]
        return docs

    # -- telemetry -----------------------------------------------------------

    def ingest_signal(self, doc: dict) -> dict:
        return self.telemetry.ingest(doc)

    def signals(self, kind: str) -> list[dict]:
        return self.telemetry.signals(kind)

    def aggregate(self, kind: str, start: str, end: str) -> dict:
        return self.telemetry.aggregate(kind, start, end)

    def detect_and_route(self, kind: str, config_doc: dict | None = None) -> dict:
        """Run the detector, route new alerts to owners, escalate per tier."""
        if config_doc:
            detector = DetectorConfig.from_doc({**self.config.detector, **config_doc})
            detector.validate()
        else:
            detector = self.config.detector_config()
        routed = [
            self.telemetry.route(alert, self.config.owner_routes)
            for alert in self.telemetry.detect(kind, detector)
        ]
        by_bundle: dict[str, list] = {}
        for alert in routed:
            by_bundle.setdefault(alert["bundle_id"], []).append(alert)
        incidents = []
        for bundle_id in sorted(by_bundle):
            if not self.bundles.exists(bundle_id):
                continue
            bundle = self.bundles.get(bundle_id)
            incidents.extend(
                self.escalation.evaluate(bundle, alerts=by_bundle[bundle_id], policy=self._policy)
            )
        return {"alerts": routed, "incidents": incidents}

    def alerts(self) -> list[dict]:
        return self.telemetry.alerts()

    # -- promotion and rollback ------------------------------------------------

    def _gate_context(self, bundle) -> dict:
        latest_run = latest_verdict = golden = None
        event = self.drift.latest_run_event(bundle.bundle_id)
        if event is not None:
            latest_run = self.drift.get_run(event["run_id"])
            golden = self.drift.get_golden_set(event["set_id"])
            for verdict in reversed(self.drift_verdicts()):
                if verdict["current_run"] == event["run_id"]:
                    latest_verdict = verdict
                    break
        owners = self.config.owner_routes.get("owners", {})
        return {
            "latest_run": latest_run,
            "latest_verdict": latest_verdict,
            "rollup": self.evidence.rollup(self.clock.now(), bundle),
            "monitoring_ready": all(owners.get(kind) for kind in SIGNAL_KINDS),
            "golden_set": golden,
        }

    def request_promotion(self, bundle_selector: str, target_env: str) -> dict:
        return self.gate.request(self.bundles.resolve(bundle_selector).bundle_id, target_env)

    def list_promotions(self, state=None, bundle_id=None) -> list[dict]:
        return self.gate.requests(state=state, bundle_id=bundle_id)

    def get_promotion(self, request_id: str) -> dict:
        return self.gate.get(request_id)

    def record_approval(self, request_id: str, approver: str, decision: str) -> dict:
        return self.gate.record_approval(request_id, approver, decision)

    def gate_report(self, request_id: str) -> dict:
        request = self.gate.get(request_id)
        bundle = self.bundles.get(request["bundle_id"])
        return self.gate.evaluate(request, self._gate_context(bundle))

    def promote(self, request_id: str) -> dict:
        request = self.gate.get(request_id)
        bundle = self.bundles.get(request["bundle_id"])
        return self.gate.promote(request_id, self._gate_context(bundle))

    def rollback(self, env: str, bundle_selector: str, incident_id: str) -> dict:
        bundle = self.bundles.resolve(bundle_selector)
        incident = self.escalation.get(incident_id)
        return self.gate.rollback(env, bundle.bundle_id, incident)

    def list_deployments(self, env=None, bundle_id=None) -> list[dict]:
        return self.gate.deployments(env=env, bundle_id=bundle_id)

    def replay_audit(self) -> list[dict]:
        return self.gate.replay_audit()

    # -- incidents ----------------------------------------------------------

    def list_incidents(self, state=None, bundle_id=None) -> list[dict]:
        return self.escalation.incidents(state=state, bundle_id=bundle_id)

    def get_incident(self, incident_id: str) -> dict:
        return self.escalation.get(incident_id)

    def transition_incident(
        self, incident_id: str, event: str, actor=None, resolution=None, rollback_ref=None
    ) -> dict:
        return self.escalation.transition(
            incident_id,
            event,
            actor=actor,
            resolution=resolution,
            rollback_ref=rollback_ref,
            deployments=self.gate.deployments(),
        )

    def retrain_obligations(self) -> list[dict]:
        return self.escalation.retrain_obligations()

    # -- health -----------------------------------------------------------------

    def healthz(self) -> dict:
        chain = self.decisions.verify_chain()
        streams = {name: self.store.stream_length(name) for name in self.store.list_streams()}
        return {
            "status": "ok" if chain["ok"] else "degraded",
            "streams": streams,
            "decision_chain": chain,
        }
