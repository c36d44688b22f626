"""Governance controls, evidence hooks, and three-valued verification.

A control states an obligation (who owns it, how often it must be
re-verified) and carries hooks that each demand a kind of evidence
artifact, a freshness window, and a validator. Verification evaluates
every hook against the latest attached evidence and collapses the
results into one of three states:

    Supported            every hook passed
    Unsupported          every hook failed
    PartiallySupported   anything in between

Rollups over several controls take the worst state; an empty control
set rolls up Supported but flagged vacuous, and downstream gates treat
vacuous rollups as not good enough for production.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .canonical import format_ts, is_canonical, is_digest, normalize_ts, parse_ts
from .errors import StackdError
from .store import Store

SUPPORTED = "Supported"
PARTIALLY = "PartiallySupported"
UNSUPPORTED = "Unsupported"
_STATE_RANK = {SUPPORTED: 0, PARTIALLY: 1, UNSUPPORTED: 2}

EVIDENCE_KINDS = (
    "log",
    "configuration_record",
    "model_documentation",
    "evaluation_report",
    "audit_trail",
)
VALIDATORS = ("exists", "schema_valid", "digest_listed_in_bundle")

# Top-level fields a schema_valid evidence document must carry, by kind.
_REQUIRED_FIELDS = {
    "log": ("kind", "entries"),
    "configuration_record": ("kind", "config"),
    "model_documentation": ("kind", "model_name", "description"),
    "evaluation_report": ("kind", "metrics"),
    "audit_trail": ("kind", "events"),
}

CONTROL_STREAM = "controls"
EVIDENCE_STREAM = "evidence"
VERIFICATION_STREAM = "verifications"

_DAY_SECONDS = 86400.0


def state_from_hook_results(passes) -> str:
    """all -> Supported, none -> Unsupported, some -> PartiallySupported."""
    total = len(passes)
    if total == 0:
        raise StackdError("empty-hooks", "cannot derive a state from zero hook results")
    passed = sum(1 for p in passes if p)
    if passed == total:
        return SUPPORTED
    if passed == 0:
        return UNSUPPORTED
    return PARTIALLY


def worst_state(states) -> str:
    return max(states, key=lambda s: _STATE_RANK[s])


@dataclass(frozen=True)
class EvidenceHook:
    hook_id: str
    required_artifact_kind: str
    max_age_days: int
    validator: str

    def to_doc(self) -> dict:
        return {
            "hook_id": self.hook_id,
            "required_artifact_kind": self.required_artifact_kind,
            "max_age_days": self.max_age_days,
            "validator": self.validator,
        }


@dataclass(frozen=True)
class Control:
    control_id: str
    title: str
    owner: str
    schedule_days: int
    hooks: tuple[EvidenceHook, ...]

    def hook(self, hook_id: str) -> EvidenceHook:
        for hook in self.hooks:
            if hook.hook_id == hook_id:
                return hook
        raise StackdError(
            "unknown-hook",
            f"control {self.control_id} has no hook {hook_id}",
            {"control_id": self.control_id, "hook_id": hook_id},
        )

    def to_doc(self) -> dict:
        return {
            "control_id": self.control_id,
            "title": self.title,
            "owner": self.owner,
            "schedule_days": self.schedule_days,
            "hooks": [h.to_doc() for h in self.hooks],
        }


def _parse_hook(doc) -> EvidenceHook:
    if not isinstance(doc, dict):
        raise StackdError("invalid-control", "hooks must be objects")
    hook_id = doc.get("hook_id")
    kind = doc.get("required_artifact_kind")
    max_age = doc.get("max_age_days")
    validator = doc.get("validator")
    if not isinstance(hook_id, str) or not hook_id:
        raise StackdError("invalid-control", "hook_id must be a non-empty string")
    if kind not in EVIDENCE_KINDS:
        raise StackdError("invalid-control", f"unknown evidence kind {kind!r}")
    if not isinstance(max_age, int) or isinstance(max_age, bool) or max_age < 1:
        raise StackdError("invalid-control", f"max_age_days must be an integer >= 1, got {max_age!r}")
    if validator not in VALIDATORS:
        raise StackdError("invalid-control", f"unknown validator {validator!r}")
    return EvidenceHook(hook_id, kind, max_age, validator)


class EvidenceRegistry:
    def __init__(self, store: Store, clock):
        self._store = store
        self._clock = clock
        self._controls: dict[str, Control] = {}
        self._control_cursor = 0
        # evidence per (control_id, hook_id), kept in attach order
        self._evidence: dict[tuple[str, str], list[dict]] = {}
        self._evidence_cursor = 0

    # -- index ---------------------------------------------------------

    def _refresh(self) -> None:
        if self._store.stream_exists(CONTROL_STREAM):
            for event in self._store.read_events(CONTROL_STREAM, start=self._control_cursor):
                self._control_cursor = event.offset + 1
                doc = event.payload["control"]
                self._controls[doc["control_id"]] = Control(
                    control_id=doc["control_id"],
                    title=doc["title"],
                    owner=doc["owner"],
                    schedule_days=doc["schedule_days"],
                    hooks=tuple(_parse_hook(h) for h in doc["hooks"]),
                )
        if self._store.stream_exists(EVIDENCE_STREAM):
            for event in self._store.read_events(EVIDENCE_STREAM, start=self._evidence_cursor):
                self._evidence_cursor = event.offset + 1
                doc = event.payload
                key = (doc["control_id"], doc["hook_id"])
                self._evidence.setdefault(key, []).append(doc)

    def controls(self) -> list[Control]:
        self._refresh()
        return sorted(self._controls.values(), key=lambda c: c.control_id)

    def get(self, control_id: str) -> Control:
        self._refresh()
        control = self._controls.get(control_id)
        if control is None:
            raise StackdError(
                "unknown-control", f"no control {control_id}", {"control_id": control_id}
            )
        return control

    # -- operations ----------------------------------------------------

    def register(self, doc: dict) -> Control:
        if not isinstance(doc, dict):
            raise StackdError("invalid-control", "control must be an object")
        control_id = doc.get("control_id")
        title = doc.get("title")
        owner = doc.get("owner")
        schedule = doc.get("schedule_days")
        if not isinstance(control_id, str) or not control_id:
            raise StackdError("invalid-control", "control_id must be a non-empty string")
        if not isinstance(title, str) or not title:
            raise StackdError("invalid-control", "title must be a non-empty string")
        if not isinstance(owner, str) or not owner:
            raise StackdError("invalid-control", "owner must be a named human or team")
        if not isinstance(schedule, int) or isinstance(schedule, bool) or schedule < 1:
            raise StackdError(
                "invalid-control", f"schedule_days must be an integer >= 1, got {schedule!r}"
            )
        hooks_raw = doc.get("hooks")
        if not isinstance(hooks_raw, list) or not hooks_raw:
            raise StackdError("empty-hooks", "a control must carry at least one evidence hook")
        hooks = tuple(_parse_hook(h) for h in hooks_raw)
        ids = [h.hook_id for h in hooks]
        if len(set(ids)) != len(ids):
            raise StackdError("duplicate-id", "hook ids must be unique within a control")
        self._refresh()
        if control_id in self._controls:
            raise StackdError(
                "duplicate-id", f"control {control_id} already registered", {"control_id": control_id}
            )
        control = Control(control_id, title, owner, schedule, hooks)
        self._store.append_event(CONTROL_STREAM, {"type": "registered", "control": control.to_doc()})
        self._controls[control_id] = control
        self._control_cursor += 1
        return control

    def attach(self, control_id: str, hook_id: str, digest: str, observed_at: str) -> dict:
        """Attach an evidence artifact to a hook. Latest evidence wins at verify time."""
        control = self.get(control_id)
        hook = control.hook(hook_id)
        if not is_digest(digest) or not self._store.has_blob(digest):
            raise StackdError(
                "dangling-digest",
                f"evidence digest does not resolve: {digest!r}",
                {"digest": digest},
            )
        record = {
            "control_id": control_id,
            "hook_id": hook.hook_id,
            "digest": digest,
            "observed_at": normalize_ts(observed_at),
        }
        self._store.append_event(EVIDENCE_STREAM, dict(record))
        self._evidence.setdefault((control_id, hook_id), []).append(record)
        self._evidence_cursor += 1
        return record

    def _latest_evidence(self, control_id: str, hook_id: str) -> dict | None:
        records = self._evidence.get((control_id, hook_id), [])
        if not records:
            return None
        # ties on observed_at fall to the most recently attached
        return max(enumerate(records), key=lambda pair: (pair[1]["observed_at"], pair[0]))[1]

    def _run_validator(self, hook: EvidenceHook, digest: str, bundle) -> tuple[bool, str]:
        if hook.validator == "exists":
            return True, "evidence present"
        if hook.validator == "digest_listed_in_bundle":
            if bundle is None:
                return False, "no bundle supplied for digest_listed_in_bundle"
            if digest in bundle.digests():
                return True, "digest listed in bundle"
            return False, "digest not among the bundle's artifacts"
        # schema_valid
        try:
            data = self._store.get_blob(digest)
        except StackdError as err:
            return False, f"evidence blob unreadable ({err.code})"
        if not is_canonical(data):
            return False, "evidence is not canonical JSON"
        doc = json.loads(data)
        if not isinstance(doc, dict):
            return False, "evidence document must be an object"
        missing = [f for f in _REQUIRED_FIELDS[hook.required_artifact_kind] if f not in doc]
        if missing:
            return False, f"missing required fields: {', '.join(missing)}"
        if doc.get("kind") != hook.required_artifact_kind:
            return False, (
                f"document kind {doc.get('kind')!r} does not match hook kind "
                f"{hook.required_artifact_kind!r}"
            )
        return True, "schema valid"

    def verify(self, control_id: str, now, bundle=None) -> dict:
        """Evaluate every hook at `now` and persist a VerificationRecord.

        A hook passes iff its latest evidence exists, is younger than
        max_age_days at `now`, and its validator accepts it.
        """
        control = self.get(control_id)
        hook_results = []
        for hook in control.hooks:
            latest = self._latest_evidence(control_id, hook.hook_id)
            if latest is None:
                hook_results.append(
                    {"hook_id": hook.hook_id, "passed": False, "reason": "no evidence attached",
                     "evidence": None}
                )
                continue
            age_days = (now - parse_ts(latest["observed_at"])).total_seconds() / _DAY_SECONDS
            if age_days >= hook.max_age_days:
                hook_results.append(
                    {
                        "hook_id": hook.hook_id,
                        "passed": False,
                        "reason": f"evidence is {age_days:.1f} days old, max_age is {hook.max_age_days}",
                        "evidence": latest["digest"],
                    }
                )
                continue
            passed, reason = self._run_validator(hook, latest["digest"], bundle)
            hook_results.append(
                {"hook_id": hook.hook_id, "passed": passed, "reason": reason,
                 "evidence": latest["digest"]}
            )
        record = {
            "control_id": control_id,
            "bundle_id": bundle.bundle_id if bundle is not None else None,
            "verified_at": format_ts(now),
            "state": state_from_hook_results([r["passed"] for r in hook_results]),
            "hook_results": hook_results,
        }
        self._store.append_event(VERIFICATION_STREAM, dict(record))
        return record

    def rollup(self, now, bundle=None, control_ids=None) -> dict:
        """Worst-state rollup across controls; empty set is Supported but vacuous.

        Computes fresh hook evaluations (without persisting records) so
        the rollup reflects `now`, not stale verifications.
        """
        self._refresh()
        ids = sorted(self._controls) if control_ids is None else list(control_ids)
        if not ids:
            return {"state": SUPPORTED, "vacuous": True, "controls": {}}
        states = {}
        for control_id in ids:
            control = self.get(control_id)
            passes = []
            for hook in control.hooks:
                latest = self._latest_evidence(control_id, hook.hook_id)
                if latest is None:
                    passes.append(False)
                    continue
                age_days = (now - parse_ts(latest["observed_at"])).total_seconds() / _DAY_SECONDS
                if age_days >= hook.max_age_days:
                    passes.append(False)
                    continue
                passed, _ = self._run_validator(hook, latest["digest"], bundle)
                passes.append(passed)
            states[control_id] = state_from_hook_results(passes)
        return {"state": worst_state(states.values()), "vacuous": False, "controls": states}

    def verifications(self, control_id=None, bundle_id=None, before=None) -> list[dict]:
        """Stored verification records, oldest first, with optional filters."""
        if not self._store.stream_exists(VERIFICATION_STREAM):
            return []
        records = []
        for event in self._store.read_events(VERIFICATION_STREAM):
            doc = event.payload
            if control_id is not None and doc["control_id"] != control_id:
                continue
            if bundle_id is not None and doc["bundle_id"] != bundle_id:
                continue
            if before is not None and parse_ts(doc["verified_at"]) > before:
                continue
            records.append(doc)
        return records

    def due(self, now) -> list[dict]:
        """Controls never verified, or last verified longer than schedule_days ago."""
        self._refresh()
        last_by_control: dict[str, str] = {}
        for record in self.verifications():
            last_by_control[record["control_id"]] = record["verified_at"]
        due = []
        for control in self.controls():
            last = last_by_control.get(control.control_id)
            if last is None:
                due.append(
                    {"control_id": control.control_id, "last_verified_at": None, "owner": control.owner}
                )
                continue
            age_days = (now - parse_ts(last)).total_seconds() / _DAY_SECONDS
            if age_days > control.schedule_days:
                due.append(
                    {"control_id": control.control_id, "last_verified_at": last, "owner": control.owner}
                )
        return due
