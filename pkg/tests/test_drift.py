"""Drift scores against independent oracles, stress run mechanics, thresholds."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.distance import jensenshannon

from stackd.adapters import StubAdapter, default_attribution
from stackd.canonical import canonical_bytes
from stackd.drift import (
    BagOfTokensEmbedder,
    DriftMonitor,
    behavioral_drift,
    category_histogram,
    cosine_distance,
    drift_report,
    evaluate_drift,
    probabilistic_drift,
    semantic_drift,
    validate_thresholds,
)
from stackd.errors import StackdError

from conftest import manifest_for, seed_blob

# Frozen from the scipy oracle: JSD base 2 of {a:.5,b:.5} vs {a:1}.
JSD_HALF_VS_POINT = 0.3112781244591328


# -- oracles ---------------------------------------------------------------


def oracle_jsd(p_hist: dict, q_hist: dict) -> float:
    """scipy's jensenshannon returns the distance (sqrt of the divergence)."""
    labels = sorted(set(p_hist) | set(q_hist))
    p = np.array([p_hist.get(l, 0) for l in labels], dtype=float)
    q = np.array([q_hist.get(l, 0) for l in labels], dtype=float)
    return float(jensenshannon(p / p.sum(), q / q.sum(), base=2) ** 2)


def oracle_cosine_distance(u, v) -> float:
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 and nv == 0:
        return 0.0
    if nu == 0 or nv == 0:
        return 1.0
    return float(1.0 - np.dot(u, v) / (nu * nv))


# -- probabilistic ----------------------------------------------------------


def test_jsd_worked_example():
    value = probabilistic_drift({"a": 0.5, "b": 0.5}, {"a": 1.0})
    assert value == pytest.approx(JSD_HALF_VS_POINT, abs=1e-12)
    assert value == pytest.approx(0.3113, abs=1e-4)


def test_jsd_identical_is_exact_zero():
    assert probabilistic_drift({"a": 3, "b": 1}, {"a": 3, "b": 1}) == 0.0
    assert probabilistic_drift({"a": 1, "b": 1}, {"a": 2, "b": 2}) == 0.0


def test_jsd_disjoint_is_exact_one():
    assert probabilistic_drift({"a": 1, "b": 2}, {"c": 3}) == 1.0
    assert probabilistic_drift({"a": 1, "b": 1, "c": 1}, {"d": 1, "e": 1, "f": 1}) == 1.0


def test_jsd_empty_histogram_errors():
    for bad in ({}, {"a": 0}, {"a": -1}):
        with pytest.raises(StackdError) as err:
            probabilistic_drift(bad, {"a": 1})
        assert err.value.code == "empty-histogram"


histograms = st.dictionaries(
    st.sampled_from(list("abcdefgh")),
    st.integers(min_value=0, max_value=50),
    min_size=1,
    max_size=8,
).filter(lambda h: sum(h.values()) > 0)


@settings(max_examples=300, deadline=None)
@given(histograms, histograms)
def test_jsd_matches_scipy_oracle(p, q):
    ours = probabilistic_drift(p, q)
    assert ours == pytest.approx(oracle_jsd(p, q), abs=1e-12)
    assert 0.0 <= ours <= 1.0
    assert probabilistic_drift(q, p) == pytest.approx(ours, abs=1e-12)


# -- semantic ---------------------------------------------------------------


def test_embedder_deterministic_and_normalized():
    embedder = BagOfTokensEmbedder()
    v1 = embedder.embed("approve the loan request")
    v2 = embedder.embed("approve the loan request")
    assert v1 == v2
    assert np.linalg.norm(v1) == pytest.approx(1.0, abs=1e-12)
    assert embedder.embed("") == [0.0] * 256


def test_cosine_distance_zero_vector_rules():
    zero = [0.0] * 4
    some = [1.0, 0.0, 0.0, 0.0]
    assert cosine_distance(zero, zero) == 0.0
    assert cosine_distance(zero, some) == 1.0
    assert cosine_distance(some, some) == 0.0


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(min_value=-5, max_value=5, allow_nan=False), min_size=4, max_size=4),
    st.lists(st.floats(min_value=-5, max_value=5, allow_nan=False), min_size=4, max_size=4),
)
def test_cosine_distance_matches_numpy(u, v):
    assert cosine_distance(u, v) == pytest.approx(oracle_cosine_distance(u, v), abs=1e-9)


# -- behavioral ---------------------------------------------------------------


def run_doc(outputs, set_id="s" * 64, run_id="r" * 64):
    return {"run_id": run_id, "bundle_id": "b" * 64, "set_id": set_id, "seed": 1, "outputs": outputs}


def output(prompt_id, text_digest=None, category="ok", refused=False, violations=0,
           attribution=None, failed=False):
    return {
        "prompt_id": prompt_id,
        "output_text": text_digest,
        "output_category": category,
        "refused": refused,
        "policy_violations": violations,
        "attribution": attribution or {"t": 1.0},
        "failed": failed,
        "error": None,
    }


def test_behavioral_worked_example():
    baseline = run_doc(
        [output(f"p{i}", refused=i < 1, violations=1 if i < 1 else 0) for i in range(10)]
    )
    # hand-built: refusals 10% -> 30%, violations 10% -> 5% is impossible with
    # 10 prompts, so violations go 10% -> 20% and refusals dominate at 0.2
    current = run_doc(
        [output(f"p{i}", refused=i < 3, violations=1 if i < 2 else 0) for i in range(10)]
    )
    assert behavioral_drift(baseline, current) == pytest.approx(0.2, abs=1e-12)


def test_behavioral_violation_dominates():
    baseline = run_doc([output(f"p{i}") for i in range(4)])
    current = run_doc([output(f"p{i}", violations=2 if i < 3 else 0) for i in range(4)])
    assert behavioral_drift(baseline, current) == pytest.approx(0.75, abs=1e-12)


# -- set pairing ---------------------------------------------------------------


def test_set_mismatch_rejected():
    a = run_doc([output("p1")])
    b = run_doc([output("p1")], set_id="t" * 64)
    with pytest.raises(StackdError) as err:
        behavioral_drift(a, b)
    assert err.value.code == "set-mismatch"


# -- thresholds ---------------------------------------------------------------


def test_evaluate_drift_boundaries():
    report = {
        "baseline_run": "r" * 64,
        "current_run": "r" * 64,
        "semantic": 0.1,          # exactly warn -> warn
        "behavioral": 0.3,        # exactly breach -> breach
        "probabilistic": 0.0999,  # just under warn -> ok
        "mean_explanation_delta": 0.0,
    }
    verdict = evaluate_drift(report)
    assert verdict["per_dimension"]["semantic"]["level"] == "warn"
    assert verdict["per_dimension"]["behavioral"]["level"] == "breach"
    assert verdict["per_dimension"]["probabilistic"]["level"] == "ok"
    assert verdict["overall"] == "breach"


def test_thresholds_must_order():
    with pytest.raises(StackdError) as err:
        validate_thresholds({"semantic": {"warn": 0.3, "breach": 0.1}})
    assert err.value.code == "invalid-thresholds"
    merged = validate_thresholds({"semantic": {"warn": 0.2, "breach": 0.5}})
    assert merged["semantic"] == {"warn": 0.2, "breach": 0.5}
    assert merged["behavioral"] == {"warn": 0.1, "breach": 0.3}


# -- stress runs ----------------------------------------------------------------


@pytest.fixture
def monitor(store, registry, clock):
    return DriftMonitor(store, registry, clock)


@pytest.fixture
def bundle(store, registry):
    return registry.create(manifest_for(store))


def golden(monitor, store, n=4, adversarial=()):
    prompts = [
        {
            "prompt_id": f"p{i:02d}",
            "input": seed_blob(store, f"prompt {i}".encode()),
            "adversarial": i in adversarial,
        }
        for i in range(n)
    ]
    rubric = seed_blob(store, {"criteria": ["harmless", "grounded"]})
    return monitor.create_golden_set(prompts, rubric)


def table_for(n, text=lambda i: f"answer {i}", **overrides):
    return {
        f"prompt {i}": {"output": text(i), "category": "ok", **overrides} for i in range(n)
    }


def test_stress_run_persists_ordered_outputs(monitor, store, bundle):
    gset = golden(monitor, store)
    run = monitor.run_stress_suite(bundle, gset, StubAdapter(table_for(4)), seed=7)
    assert [o["prompt_id"] for o in run["outputs"]] == ["p00", "p01", "p02", "p03"]
    stored = monitor.get_run(run["run_id"])
    assert stored["outputs"] == run["outputs"]
    assert store.get_blob(run["outputs"][0]["output_text"]) == b"answer 0"


def test_stress_run_deterministic_digest(monitor, store, bundle):
    gset = golden(monitor, store)
    adapter = StubAdapter(table_for(4))
    first = monitor.run_stress_suite(bundle, gset, adapter, seed=7)
    second = monitor.run_stress_suite(bundle, gset, adapter, seed=7)
    assert first["run_id"] == second["run_id"]
    assert first["outputs"] == second["outputs"]


def test_adapter_failure_marks_output_and_run_completes(monitor, store, bundle):
    gset = golden(monitor, store)
    table = table_for(4)
    table["prompt 2"] = {"fail": "backend timed out"}
    run = monitor.run_stress_suite(bundle, gset, StubAdapter(table), seed=7)
    failed = [o for o in run["outputs"] if o["failed"]]
    assert len(failed) == 1
    assert failed[0]["prompt_id"] == "p02"
    assert failed[0]["error"] == "backend timed out"
    assert failed[0]["output_category"] == "adapter_failure"


def test_stress_run_requires_intact_bundle(monitor, store, bundle, tmp_path):
    gset = golden(monitor, store)
    victim = bundle.artifacts[0].digest
    (tmp_path / "blobs" / victim[:2] / victim).unlink()
    with pytest.raises(StackdError) as err:
        monitor.run_stress_suite(bundle, gset, StubAdapter(table_for(4)), seed=7)
    assert err.value.code == "integrity-failure"


def test_golden_set_validation(monitor, store):
    rubric = seed_blob(store, {"criteria": []})
    with pytest.raises(StackdError) as err:
        monitor.create_golden_set([], rubric)
    assert err.value.code == "invalid-golden-set"
    with pytest.raises(StackdError) as err:
        monitor.create_golden_set(
            [{"prompt_id": "p", "input": "e" * 64}], rubric
        )
    assert err.value.code == "dangling-digest"
    p = seed_blob(store, b"x")
    with pytest.raises(StackdError) as err:
        monitor.create_golden_set(
            [{"prompt_id": "p", "input": p}, {"prompt_id": "p", "input": p}], rubric
        )
    assert err.value.code == "duplicate-id"


def test_golden_set_content_addressed(monitor, store):
    gset = golden(monitor, store)
    again = golden(monitor, store)
    assert gset["set_id"] == again["set_id"]
    fetched = monitor.get_golden_set(gset["set_id"])
    assert fetched["prompts"] == gset["prompts"]


# -- full report over real runs ---------------------------------------------


def test_drift_report_identical_runs_all_zero(monitor, store, bundle):
    gset = golden(monitor, store)
    adapter = StubAdapter(table_for(4))
    base = monitor.run_stress_suite(bundle, gset, adapter, seed=7)
    cur = monitor.run_stress_suite(bundle, gset, adapter, seed=7)
    report = drift_report(base, cur, store)
    assert report["semantic"] == 0.0
    assert report["behavioral"] == 0.0
    assert report["probabilistic"] == 0.0
    assert report["mean_explanation_delta"] == 0.0
    assert evaluate_drift(report)["overall"] == "ok"


def test_drift_report_token_disjoint_outputs(monitor, store, bundle):
    gset = golden(monitor, store)
    base = monitor.run_stress_suite(bundle, gset, StubAdapter(table_for(4)), seed=7)
    drifted_table = {
        f"prompt {i}": {"output": f"zebra{i} quartz{i}", "category": "odd", "refused": True}
        for i in range(4)
    }
    cur = monitor.run_stress_suite(bundle, gset, StubAdapter(drifted_table), seed=7)
    report = drift_report(base, cur, store)
    # oracle: per-prompt distances recomputed independently
    embedder = BagOfTokensEmbedder()
    expected = np.mean(
        [
            oracle_cosine_distance(
                embedder.embed(f"answer {i}"), embedder.embed(f"zebra{i} quartz{i}")
            )
            for i in range(4)
        ]
    )
    assert report["semantic"] == pytest.approx(float(expected), abs=1e-9)
    assert report["semantic"] == pytest.approx(1.0, abs=1e-12)  # disjoint tokens
    assert report["behavioral"] == 1.0  # all refusals appeared
    assert report["probabilistic"] == 1.0  # categories ok -> odd
    assert evaluate_drift(report)["overall"] == "breach"


def test_half_disjoint_outputs_mean_half(monitor, store, bundle):
    gset = golden(monitor, store)
    base = monitor.run_stress_suite(bundle, gset, StubAdapter(table_for(4)), seed=7)
    table = table_for(4)
    table["prompt 2"] = {"output": "zebra quartz", "category": "ok"}
    table["prompt 3"] = {"output": "umbra velvet", "category": "ok"}
    cur = monitor.run_stress_suite(bundle, gset, StubAdapter(table), seed=7)
    value = semantic_drift(base, cur, store)
    assert value == pytest.approx(0.5, abs=1e-12)


def test_default_attribution_token_frequencies():
    weights = default_attribution("a b a")
    assert weights["a"] == pytest.approx(2 / 3)
    assert weights["b"] == pytest.approx(1 / 3)
    assert default_attribution("") == {"__empty__": 1.0}
