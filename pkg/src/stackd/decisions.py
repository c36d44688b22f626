"""Tamper-evident decision log with explanation deltas and context replay.

Each decision made by a governed model is appended to a hash chain:

    record_hash = SHA-256(raw prev_hash bytes || canonical JSON of record)

with 64 zero hex chars as the genesis predecessor. The decisions
stream stores bare ChainedRecord lines, so verify_chain can check each
line for canonical form byte-for-byte and then recompute the chain;
any single flipped byte on disk is reported at its exact offset.

Explanation deltas quantify how far apart two explanations are:
feature attributions compare by L1 over the weight union and by
Jaccard of the top-k names ranked by absolute weight; reasoning traces
compare by token 3-shingle sets. delta_score is 1 - jaccard either way.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from math import fsum, isfinite

from .canonical import (
    GENESIS_HASH,
    canonical_bytes,
    is_canonical,
    is_digest,
    normalize_ts,
    parse_ts,
    sha256_hex,
)
from .errors import StackdError
from .store import Store

import hashlib
import json

STREAM = "decisions"

EXPLANATION_KINDS = ("feature_attribution", "reasoning_trace")


@dataclass(frozen=True)
class ExplanationArtifact:
    kind: str
    attribution: dict | None = None
    trace: str | None = None

    @classmethod
    def from_doc(cls, doc) -> "ExplanationArtifact":
        if not isinstance(doc, dict):
            raise StackdError("invalid-explanation", "explanation must be an object")
        kind = doc.get("kind")
        if kind == "feature_attribution":
            attribution = doc.get("attribution")
            if not isinstance(attribution, dict) or not attribution:
                raise StackdError(
                    "invalid-explanation", "attribution must be a non-empty feature->weight map"
                )
            for name, weight in attribution.items():
                if not isinstance(name, str):
                    raise StackdError("invalid-explanation", "feature names must be strings")
                if isinstance(weight, bool) or not isinstance(weight, (int, float)) or not isfinite(weight):
                    raise StackdError(
                        "invalid-explanation", f"weight for {name!r} must be a finite number"
                    )
            return cls(kind=kind, attribution=dict(attribution))
        if kind == "reasoning_trace":
            trace = doc.get("trace")
            if not is_digest(trace):
                raise StackdError("invalid-explanation", "trace must be a stored blob digest")
            return cls(kind=kind, trace=trace)
        raise StackdError("invalid-explanation", f"unknown explanation kind {kind!r}")

    def to_doc(self) -> dict:
        if self.kind == "feature_attribution":
            return {"kind": self.kind, "attribution": self.attribution}
        return {"kind": self.kind, "trace": self.trace}


@dataclass(frozen=True)
class DecisionRecord:
    decision_id: str
    model_version: str
    bundle_id: str
    input_context: str
    explanation: ExplanationArtifact
    decided_at: str

    def to_doc(self) -> dict:
        return {
            "decision_id": self.decision_id,
            "model_version": self.model_version,
            "bundle_id": self.bundle_id,
            "input_context": self.input_context,
            "explanation": self.explanation.to_doc(),
            "decided_at": self.decided_at,
        }


def chain_hash(prev_hash: str, record_doc: dict) -> str:
    """SHA-256 over the raw previous hash bytes and the canonical record."""
    h = hashlib.sha256()
    h.update(bytes.fromhex(prev_hash))
    h.update(canonical_bytes(record_doc))
    return h.hexdigest()


# -- explanation delta ----------------------------------------------------


def top_k_features(attribution: dict, k: int) -> set[str]:
    """Names of the k largest |weight| features; ties break lexicographically."""
    ranked = sorted(attribution, key=lambda name: (-abs(attribution[name]), name))
    return set(ranked[:k])


def _shingles(text: str, width: int = 3) -> set[tuple[str, ...]]:
    tokens = text.split()
    if len(tokens) < width:
        return set()
    return {tuple(tokens[i : i + width]) for i in range(len(tokens) - width + 1)}


def explanation_delta(a: ExplanationArtifact, b: ExplanationArtifact, k: int = 5, store=None) -> dict:
    """Distance between two explanations of the same kind.

    Returns {l1_distance, jaccard_top_k, delta_score, k}; delta_score
    is 1 - jaccard and lands in [0, 1]. Comparing an artifact with
    itself yields exactly zero.
    """
    if a.kind != b.kind:
        raise StackdError(
            "kind-mismatch", f"cannot compare {a.kind} with {b.kind}",
            {"a": a.kind, "b": b.kind},
        )
    if not isinstance(k, int) or isinstance(k, bool) or k < 1:
        raise StackdError("out-of-range", f"k must be an integer >= 1, got {k!r}")
    if a.kind == "feature_attribution":
        union = set(a.attribution) | set(b.attribution)
        l1 = fsum(abs(a.attribution.get(f, 0.0) - b.attribution.get(f, 0.0)) for f in sorted(union))
        top_a = top_k_features(a.attribution, k)
        top_b = top_k_features(b.attribution, k)
        inter = len(top_a & top_b)
        jaccard = inter / len(top_a | top_b)
    else:
        if store is None:
            raise StackdError("storage-io", "trace comparison needs the blob store")
        text_a = store.get_blob(a.trace).decode("utf-8", errors="replace")
        text_b = store.get_blob(b.trace).decode("utf-8", errors="replace")
        sh_a = _shingles(text_a)
        sh_b = _shingles(text_b)
        union_size = len(sh_a | sh_b)
        # two traces too short to shingle are indistinguishable
        jaccard = 1.0 if union_size == 0 else len(sh_a & sh_b) / union_size
        l1 = float(len(sh_a ^ sh_b))
    return {
        "l1_distance": l1,
        "jaccard_top_k": jaccard,
        "delta_score": 1.0 - jaccard,
        "k": k,
    }


# -- the log itself -------------------------------------------------------


class DecisionLog:
    def __init__(self, store: Store, bundles):
        self._store = store
        self._bundles = bundles
        self._lock = threading.Lock()
        self._tail: str | None = None  # record_hash of the newest record

    def _load_tail(self) -> str:
        if self._tail is None:
            lines = self._store.read_raw_lines(STREAM)
            if not lines:
                self._tail = GENESIS_HASH
            else:
                self._tail = json.loads(lines[-1])["record_hash"]
        return self._tail

    def append(self, record: DecisionRecord) -> dict:
        """Validate references, link the record to the chain, persist it."""
        if not record.decision_id:
            raise StackdError("invalid-decision", "decision_id must be non-empty")
        self._bundles.get(record.bundle_id)
        for label, digest in (
            ("model_version", record.model_version),
            ("input_context", record.input_context),
        ):
            if not is_digest(digest) or not self._store.has_blob(digest):
                raise StackdError(
                    "dangling-digest", f"{label} digest does not resolve", {label: digest}
                )
        if record.explanation.kind == "reasoning_trace" and not self._store.has_blob(
            record.explanation.trace
        ):
            raise StackdError(
                "dangling-digest", "explanation trace does not resolve",
                {"trace": record.explanation.trace},
            )
        with self._lock:
            prev = self._load_tail()
            doc = record.to_doc()
            record_hash = chain_hash(prev, doc)
            chained = {"prev_hash": prev, "record": doc, "record_hash": record_hash}
            self._store.append_event(STREAM, chained, stamp=False)
            self._tail = record_hash
            return chained

    def verify_chain(self) -> dict:
        """Walk the stored chain; report ok or the first corrupt offset.

        Each line must be canonical JSON byte-for-byte, link to its
        predecessor's hash, and hash to its stored record_hash. The
        canonical-form check means no byte on disk escapes coverage.
        """
        lines = self._store.read_raw_lines(STREAM)
        prev = GENESIS_HASH
        for offset, line in enumerate(lines):
            corrupt = {"ok": False, "first_corrupt_offset": offset, "length": len(lines)}
            try:
                obj = json.loads(line.decode("utf-8"))
            except (ValueError, UnicodeDecodeError):
                return corrupt
            if not is_canonical(line):
                return corrupt
            if (
                not isinstance(obj, dict)
                or set(obj) != {"prev_hash", "record", "record_hash"}
                or not isinstance(obj["record"], dict)
            ):
                return corrupt
            if obj["prev_hash"] != prev or not is_digest(obj["prev_hash"]):
                return corrupt
            if chain_hash(prev, obj["record"]) != obj["record_hash"]:
                return corrupt
            prev = obj["record_hash"]
        return {"ok": True, "first_corrupt_offset": None, "length": len(lines)}

    def _records(self) -> list[dict]:
        if not self._store.stream_exists(STREAM):
            return []
        return [event.payload for event in self._store.read_events(STREAM)]

    def get(self, decision_id: str) -> dict:
        for chained in self._records():
            if chained["record"]["decision_id"] == decision_id:
                return chained
        raise StackdError(
            "unknown-decision", f"no decision {decision_id}", {"decision_id": decision_id}
        )

    def query(self, bundle_id=None, model_version=None, start=None, end=None) -> list[dict]:
        """Chained records filtered by bundle, model, and [start, end) time."""
        start_ts = normalize_ts(start) if start else None
        end_ts = normalize_ts(end) if end else None
        results = []
        for chained in self._records():
            record = chained["record"]
            if bundle_id is not None and record["bundle_id"] != bundle_id:
                continue
            if model_version is not None and record["model_version"] != model_version:
                continue
            decided = record["decided_at"]
            if start_ts is not None and decided < start_ts:
                continue
            if end_ts is not None and decided >= end_ts:
                continue
            results.append(chained)
        return results

    def reproduce_context(self, decision_id: str, evidence, incidents) -> dict:
        """Reassemble everything that governed a decision at the time it was made.

        Fails loudly with `irreproducible` and the list of missing
        components if any referenced artifact can no longer be fetched.
        """
        chained = self.get(decision_id)
        record = chained["record"]
        decided_at = parse_ts(record["decided_at"])
        missing: list[str] = []

        bundle_doc = None
        bundle = None
        try:
            bundle = self._bundles.get(record["bundle_id"])
        except StackdError:
            missing.append("bundle")
        if bundle is not None:
            integrity = self._bundles.verify_integrity(bundle.bundle_id)
            for artifact in integrity["artifacts"]:
                if not artifact["resolved"]:
                    missing.append(f"artifact:{artifact['kind']}/{artifact['name']}")
            bundle_doc = bundle.to_doc()

        if not self._store.has_blob(record["model_version"]):
            missing.append("model_version")

        input_text = None
        try:
            input_text = self._store.get_blob(record["input_context"]).decode(
                "utf-8", errors="replace"
            )
        except StackdError:
            missing.append("input_context")

        explanation = dict(record["explanation"])
        if explanation.get("kind") == "reasoning_trace":
            try:
                explanation["trace_text"] = self._store.get_blob(explanation["trace"]).decode(
                    "utf-8", errors="replace"
                )
            except StackdError:
                missing.append("explanation_trace")

        if missing:
            raise StackdError(
                "irreproducible",
                f"decision {decision_id} cannot be reproduced",
                {"decision_id": decision_id, "missing": sorted(missing)},
            )

        # Latest verification per control for this bundle, at or before decision time.
        verifications = {}
        for rec in evidence.verifications(bundle_id=record["bundle_id"], before=decided_at):
            verifications[rec["control_id"]] = rec

        open_incidents = incidents.open_at(decided_at, bundle_id=record["bundle_id"])

        return {
            "decision": record,
            "record_hash": chained["record_hash"],
            "bundle": bundle_doc,
            "input_text": input_text,
            "explanation": explanation,
            "verifications": [verifications[cid] for cid in sorted(verifications)],
            "open_incidents": open_incidents,
        }
