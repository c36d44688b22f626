"""Control registration, evidence hooks, verification states, rollups, due checks."""

from __future__ import annotations

from datetime import timedelta

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stackd.evidence import (
    PARTIALLY,
    SUPPORTED,
    UNSUPPORTED,
    EvidenceRegistry,
    state_from_hook_results,
    worst_state,
)
from stackd.canonical import canonical_bytes, format_ts
from stackd.errors import StackdError

from conftest import T0, manifest_for, seed_blob


@pytest.fixture
def evidence(store, clock):
    return EvidenceRegistry(store, clock)


def control_doc(control_id="ctl-logging", hooks=None):
    return {
        "control_id": control_id,
        "title": "Decision logging stays on",
        "owner": "ml-governance",
        "schedule_days": 7,
        "hooks": hooks
        or [
            {
                "hook_id": "hk-log",
                "required_artifact_kind": "log",
                "max_age_days": 30,
                "validator": "exists",
            }
        ],
    }


def log_blob(store, entries=("decision logged",)):
    return seed_blob(store, {"kind": "log", "entries": list(entries)})


def test_register_and_fetch(evidence):
    control = evidence.register(control_doc())
    assert evidence.get("ctl-logging").title == control.title


def test_register_requires_hooks(evidence):
    doc = control_doc()
    doc["hooks"] = []
    with pytest.raises(StackdError) as err:
        evidence.register(doc)
    assert err.value.code == "empty-hooks"


def test_register_duplicate_id(evidence):
    evidence.register(control_doc())
    with pytest.raises(StackdError) as err:
        evidence.register(control_doc())
    assert err.value.code == "duplicate-id"


def test_attach_requires_stored_digest(evidence):
    evidence.register(control_doc())
    with pytest.raises(StackdError) as err:
        evidence.attach("ctl-logging", "hk-log", "a" * 64, format_ts(T0))
    assert err.value.code == "dangling-digest"


def test_attach_unknown_hook(evidence, store):
    evidence.register(control_doc())
    digest = log_blob(store)
    with pytest.raises(StackdError) as err:
        evidence.attach("ctl-logging", "hk-nope", digest, format_ts(T0))
    assert err.value.code == "unknown-hook"


def test_verify_fresh_evidence_supported(evidence, store):
    evidence.register(control_doc())
    evidence.attach("ctl-logging", "hk-log", log_blob(store), format_ts(T0))
    record = evidence.verify("ctl-logging", T0 + timedelta(days=1))
    assert record["state"] == SUPPORTED
    assert record["hook_results"][0]["passed"] is True


def test_verify_stale_evidence_fails_hook(evidence, store):
    evidence.register(control_doc())
    evidence.attach("ctl-logging", "hk-log", log_blob(store), format_ts(T0))
    record = evidence.verify("ctl-logging", T0 + timedelta(days=31))
    assert record["state"] == UNSUPPORTED
    assert "days old" in record["hook_results"][0]["reason"]


def test_verify_no_evidence_unsupported(evidence):
    evidence.register(control_doc())
    record = evidence.verify("ctl-logging", T0)
    assert record["state"] == UNSUPPORTED
    assert record["hook_results"][0]["reason"] == "no evidence attached"


def test_one_of_two_hooks_is_partial(evidence, store):
    hooks = [
        {"hook_id": "hk-a", "required_artifact_kind": "log", "max_age_days": 30, "validator": "exists"},
        {"hook_id": "hk-b", "required_artifact_kind": "audit_trail", "max_age_days": 30, "validator": "exists"},
    ]
    evidence.register(control_doc(hooks=hooks))
    evidence.attach("ctl-logging", "hk-a", log_blob(store), format_ts(T0))
    record = evidence.verify("ctl-logging", T0 + timedelta(hours=1))
    assert record["state"] == PARTIALLY


def test_latest_evidence_wins(evidence, store):
    evidence.register(control_doc())
    old = log_blob(store, entries=("old",))
    new = log_blob(store, entries=("new",))
    evidence.attach("ctl-logging", "hk-log", old, format_ts(T0 - timedelta(days=60)))
    evidence.attach("ctl-logging", "hk-log", new, format_ts(T0))
    record = evidence.verify("ctl-logging", T0 + timedelta(days=1))
    assert record["state"] == SUPPORTED
    assert record["hook_results"][0]["evidence"] == new


def test_schema_valid_accepts_canonical_document(evidence, store):
    hooks = [
        {
            "hook_id": "hk-report",
            "required_artifact_kind": "evaluation_report",
            "max_age_days": 30,
            "validator": "schema_valid",
        }
    ]
    evidence.register(control_doc(hooks=hooks))
    good = seed_blob(store, {"kind": "evaluation_report", "metrics": {"accuracy": 0.91}})
    evidence.attach("ctl-logging", "hk-report", good, format_ts(T0))
    record = evidence.verify("ctl-logging", T0 + timedelta(hours=1))
    assert record["state"] == SUPPORTED


def test_schema_valid_rejects_noncanonical_and_wrong_kind(evidence, store):
    hooks = [
        {
            "hook_id": "hk-report",
            "required_artifact_kind": "evaluation_report",
            "max_age_days": 30,
            "validator": "schema_valid",
        }
    ]
    evidence.register(control_doc(hooks=hooks))
    # valid JSON but spaced, so not canonical form
    sloppy = store.put_blob(b'{ "kind": "evaluation_report", "metrics": {} }')
    evidence.attach("ctl-logging", "hk-report", sloppy, format_ts(T0))
    record = evidence.verify("ctl-logging", T0 + timedelta(hours=1))
    assert record["state"] == UNSUPPORTED
    assert "canonical" in record["hook_results"][0]["reason"]

    wrong_kind = seed_blob(store, {"kind": "log", "entries": [], "metrics": {}})
    evidence.attach("ctl-logging", "hk-report", wrong_kind, format_ts(T0 + timedelta(hours=2)))
    record = evidence.verify("ctl-logging", T0 + timedelta(hours=3))
    assert record["state"] == UNSUPPORTED


def test_digest_listed_in_bundle(evidence, store, registry):
    rubric = canonical_bytes({"kind": "rubric", "criteria": ["safe"]})
    manifest = manifest_for(store, extras=[("eval_rubric", "rubric", rubric)])
    bundle = registry.create(manifest)
    hooks = [
        {
            "hook_id": "hk-bound",
            "required_artifact_kind": "evaluation_report",
            "max_age_days": 30,
            "validator": "digest_listed_in_bundle",
        }
    ]
    evidence.register(control_doc(hooks=hooks))
    listed = store.put_blob(rubric)
    evidence.attach("ctl-logging", "hk-bound", listed, format_ts(T0))
    assert evidence.verify("ctl-logging", T0, bundle=bundle)["state"] == SUPPORTED

    unlisted = seed_blob(store, {"kind": "evaluation_report", "metrics": {}})
    evidence.attach("ctl-logging", "hk-bound", unlisted, format_ts(T0 + timedelta(hours=1)))
    assert evidence.verify("ctl-logging", T0 + timedelta(hours=2), bundle=bundle)["state"] == UNSUPPORTED


def test_rollup_worst_wins_and_vacuous_flag(evidence, store):
    assert evidence.rollup(T0) == {"state": SUPPORTED, "vacuous": True, "controls": {}}
    evidence.register(control_doc("ctl-a"))
    evidence.register(control_doc("ctl-b"))
    evidence.attach("ctl-a", "hk-log", log_blob(store), format_ts(T0))
    rollup = evidence.rollup(T0 + timedelta(hours=1))
    assert rollup["vacuous"] is False
    assert rollup["state"] == UNSUPPORTED
    assert rollup["controls"] == {"ctl-a": SUPPORTED, "ctl-b": UNSUPPORTED}


def test_due_schedule_boundaries(evidence, store):
    evidence.register(control_doc())  # schedule 7 days
    assert [d["control_id"] for d in evidence.due(T0)] == ["ctl-logging"]
    evidence.attach("ctl-logging", "hk-log", log_blob(store), format_ts(T0))
    evidence.verify("ctl-logging", T0)
    assert evidence.due(T0 + timedelta(days=1)) == []
    assert [d["control_id"] for d in evidence.due(T0 + timedelta(days=8))] == ["ctl-logging"]


def test_verification_records_persist_across_instances(evidence, store, clock):
    evidence.register(control_doc())
    evidence.attach("ctl-logging", "hk-log", log_blob(store), format_ts(T0))
    evidence.verify("ctl-logging", T0)
    fresh = EvidenceRegistry(store, clock)
    assert len(fresh.verifications(control_id="ctl-logging")) == 1
    assert fresh.due(T0 + timedelta(days=1)) == []


def test_state_rule_spot_checks():
    assert state_from_hook_results([True, True]) == SUPPORTED
    assert state_from_hook_results([True, False]) == PARTIALLY
    assert state_from_hook_results([False, False]) == UNSUPPORTED
    assert worst_state([SUPPORTED, PARTIALLY, SUPPORTED]) == PARTIALLY


@settings(max_examples=200, deadline=None)
@given(st.lists(st.booleans(), min_size=1, max_size=12))
def test_state_rule_matches_all_none_some(passes):
    state = state_from_hook_results(passes)
    if all(passes):
        assert state == SUPPORTED
    elif not any(passes):
        assert state == UNSUPPORTED
    else:
        assert state == PARTIALLY


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.sampled_from([SUPPORTED, PARTIALLY, UNSUPPORTED]), min_size=1, max_size=8)
)
def test_worst_state_is_commutative_monoid(states):
    import random as _random

    shuffled = list(states)
    _random.Random(7).shuffle(shuffled)
    assert worst_state(states) == worst_state(shuffled)
    assert worst_state(states + [SUPPORTED]) == worst_state(states)
