"""Shared fixtures and builders for the test suite."""

from __future__ import annotations

import random
from datetime import datetime, timezone

import pytest

from stackd.bundles import BundleRegistry
from stackd.canonical import SteppingClock, canonical_bytes
from stackd.store import Store

T0 = datetime(2026, 8, 15, 9, 0, 0, tzinfo=timezone.utc)


@pytest.fixture
def clock():
    return SteppingClock(T0, step_ms=1000)


@pytest.fixture
def store(tmp_path, clock):
    return Store(tmp_path, clock=clock)


@pytest.fixture
def registry(store, clock):
    return BundleRegistry(store, clock)


@pytest.fixture
def rng():
    return random.Random(100)


def seed_blob(store, obj_or_bytes) -> str:
    """Store a blob (canonical JSON for non-bytes) and return its digest."""
    if isinstance(obj_or_bytes, (bytes, bytearray)):
        return store.put_blob(bytes(obj_or_bytes))
    return store.put_blob(canonical_bytes(obj_or_bytes))


def manifest_for(store, version="1.0.0", tier=2, parent=None, extras=(), model=b"weights-v1"):
    """A valid manifest with stored model + policy blobs plus optional extras.

    extras: iterable of (kind, name, content-bytes).
    """
    artifacts = [
        {"kind": "model", "name": "main", "digest": seed_blob(store, model)},
        {
            "kind": "policy_config",
            "name": "policy",
            "digest": seed_blob(store, {"kind": "policy", "rules": ["no-pii"]}),
        },
    ]
    for kind, name, content in extras:
        artifacts.append({"kind": kind, "name": name, "digest": seed_blob(store, content)})
    manifest = {"version": version, "capability_tier": tier, "artifacts": artifacts}
    if parent is not None:
        manifest["parent"] = parent
    return manifest
