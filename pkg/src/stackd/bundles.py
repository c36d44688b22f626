"""Versioned, content-addressed governance bundles.

A bundle binds the references that together define a deployable model
configuration: weights, datasets, policy configuration, prompt sets,
evaluation rubric, explanation settings. The bundle id is the SHA-256
of the canonical manifest (version, tier, sorted artifact refs,
parent), so the id is recomputable from content and any tampering is
detectable. created_at is metadata, not identity: creating the same
manifest twice yields the same bundle.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import total_ordering

from .canonical import digest_of, format_ts, is_digest
from .errors import StackdError
from .store import Store

ARTIFACT_KINDS = (
    "model",
    "dataset",
    "policy_config",
    "prompt_set",
    "eval_rubric",
    "explanation_config",
)
REQUIRED_KINDS = ("model", "policy_config")

# Kinds whose change forces a major / minor version bump in diffs.
_MAJOR_KINDS = {"model", "policy_config"}
_MINOR_KINDS = {"dataset", "prompt_set"}

_SEMVER = re.compile(r"^(0|[1-9][0-9]*)\.(0|[1-9][0-9]*)\.(0|[1-9][0-9]*)$")

STREAM = "bundles"


@total_ordering
@dataclass(frozen=True)
class SemVer:
    major: int
    minor: int
    patch: int

    @classmethod
    def parse(cls, text) -> "SemVer":
        if not isinstance(text, str) or not _SEMVER.match(text):
            raise StackdError("invalid-version", f"not a MAJOR.MINOR.PATCH version: {text!r}")
        major, minor, patch = (int(part) for part in text.split("."))
        return cls(major, minor, patch)

    def __str__(self) -> str:
        return f"{self.major}.{self.minor}.{self.patch}"

    def _key(self):
        return (self.major, self.minor, self.patch)

    def __lt__(self, other) -> bool:
        return self._key() < other._key()


@dataclass(frozen=True)
class ArtifactRef:
    kind: str
    name: str
    digest: str

    def to_doc(self) -> dict:
        return {"kind": self.kind, "name": self.name, "digest": self.digest}


@dataclass(frozen=True)
class Bundle:
    bundle_id: str
    version: SemVer
    capability_tier: int
    artifacts: tuple[ArtifactRef, ...]
    created_at: str
    parent: str | None

    def artifact_map(self) -> dict[tuple[str, str], ArtifactRef]:
        return {(ref.kind, ref.name): ref for ref in self.artifacts}

    def digests(self) -> set[str]:
        return {ref.digest for ref in self.artifacts}

    def find(self, kind: str) -> list[ArtifactRef]:
        return [ref for ref in self.artifacts if ref.kind == kind]

    def to_doc(self) -> dict:
        doc = {
            "bundle_id": self.bundle_id,
            "version": str(self.version),
            "capability_tier": self.capability_tier,
            "artifacts": [ref.to_doc() for ref in self.artifacts],
            "created_at": self.created_at,
            "parent": self.parent,
        }
        return doc


def manifest_identity_doc(
    version: SemVer, tier: int, artifacts: tuple[ArtifactRef, ...], parent: str | None
) -> dict:
    """The exact document whose canonical digest is the bundle id."""
    doc = {
        "version": str(version),
        "capability_tier": tier,
        "artifacts": [ref.to_doc() for ref in artifacts],
    }
    if parent is not None:
        doc["parent"] = parent
    return doc


def _parse_artifacts(raw) -> tuple[ArtifactRef, ...]:
    if not isinstance(raw, list) or not raw:
        raise StackdError("invalid-manifest", "artifacts must be a non-empty list")
    refs = []
    for item in raw:
        if not isinstance(item, dict):
            raise StackdError("invalid-manifest", "artifact refs must be objects")
        kind = item.get("kind")
        name = item.get("name")
        digest = item.get("digest")
        if kind not in ARTIFACT_KINDS:
            raise StackdError("invalid-manifest", f"unknown artifact kind {kind!r}")
        if not isinstance(name, str) or not name:
            raise StackdError("invalid-manifest", "artifact name must be a non-empty string")
        if not is_digest(digest):
            raise StackdError("invalid-manifest", f"artifact digest must be 64 hex chars: {digest!r}")
        refs.append(ArtifactRef(kind=kind, name=name, digest=digest))
    refs.sort(key=lambda r: (r.kind, r.name))
    return tuple(refs)


class BundleRegistry:
    """Creates, resolves, diffs, and integrity-checks bundles.

    State is rebuilt from the bundles stream; the in-memory index is a
    cache over it, refreshed by offset cursor.
    """

    def __init__(self, store: Store, clock):
        self._store = store
        self._clock = clock
        self._by_id: dict[str, Bundle] = {}
        self._order: list[str] = []
        self._cursor = 0

    # -- index ---------------------------------------------------------

    def _refresh(self) -> None:
        if not self._store.stream_exists(STREAM):
            return
        for event in self._store.read_events(STREAM, start=self._cursor):
            self._cursor = event.offset + 1
            doc = event.payload["bundle"]
            bundle = Bundle(
                bundle_id=doc["bundle_id"],
                version=SemVer.parse(doc["version"]),
                capability_tier=doc["capability_tier"],
                artifacts=tuple(
                    ArtifactRef(kind=a["kind"], name=a["name"], digest=a["digest"])
                    for a in doc["artifacts"]
                ),
                created_at=doc["created_at"],
                parent=doc.get("parent"),
            )
            if bundle.bundle_id not in self._by_id:
                self._order.append(bundle.bundle_id)
            self._by_id[bundle.bundle_id] = bundle

    def all(self) -> list[Bundle]:
        self._refresh()
        return [self._by_id[bid] for bid in self._order]

    def exists(self, bundle_id: str) -> bool:
        self._refresh()
        return bundle_id in self._by_id

    def get(self, bundle_id: str) -> Bundle:
        self._refresh()
        bundle = self._by_id.get(bundle_id)
        if bundle is None:
            raise StackdError("unknown-bundle", f"no bundle {bundle_id}", {"bundle_id": bundle_id})
        return bundle

    # -- operations ----------------------------------------------------

    def create(self, manifest: dict) -> Bundle:
        """Validate a manifest, persist it, and return the bundle.

        Validation order: shape, duplicate (kind, name), required
        kinds, dangling digests, then parent version monotonicity.
        """
        if not isinstance(manifest, dict):
            raise StackdError("invalid-manifest", "manifest must be an object")
        version = SemVer.parse(manifest.get("version"))
        tier = manifest.get("capability_tier")
        if not isinstance(tier, int) or isinstance(tier, bool) or not 1 <= tier <= 4:
            raise StackdError("out-of-range", f"capability_tier must be 1..4, got {tier!r}")
        artifacts = _parse_artifacts(manifest.get("artifacts"))

        seen: set[tuple[str, str]] = set()
        for ref in artifacts:
            key = (ref.kind, ref.name)
            if key in seen:
                raise StackdError(
                    "duplicate-kind-name",
                    f"artifact ({ref.kind}, {ref.name}) listed twice",
                    {"kind": ref.kind, "name": ref.name},
                )
            seen.add(key)

        kinds = {ref.kind for ref in artifacts}
        for required in REQUIRED_KINDS:
            if required not in kinds:
                raise StackdError(
                    "missing-required-kind",
                    f"manifest lacks a {required} artifact",
                    {"kind": required},
                )

        for ref in artifacts:
            if not self._store.has_blob(ref.digest):
                raise StackdError(
                    "dangling-digest",
                    f"artifact ({ref.kind}, {ref.name}) points at unstored digest",
                    {"kind": ref.kind, "name": ref.name, "digest": ref.digest},
                )

        parent = manifest.get("parent")
        if parent is not None:
            parent_bundle = self.get(parent)
            if not version > parent_bundle.version:
                raise StackdError(
                    "non-monotonic-version",
                    f"version {version} does not exceed parent {parent_bundle.version}",
                    {"version": str(version), "parent_version": str(parent_bundle.version)},
                )

        bundle_id = digest_of(manifest_identity_doc(version, tier, artifacts, parent))
        self._refresh()
        existing = self._by_id.get(bundle_id)
        if existing is not None:
            return existing

        bundle = Bundle(
            bundle_id=bundle_id,
            version=version,
            capability_tier=tier,
            artifacts=artifacts,
            created_at=format_ts(self._clock.now()),
            parent=parent,
        )
        self._store.append_event(STREAM, {"type": "created", "bundle": bundle.to_doc()})
        self._by_id[bundle_id] = bundle
        self._order.append(bundle_id)
        self._cursor += 1
        return bundle

    def resolve(self, selector: str) -> Bundle:
        """Find a bundle by exact id, unique id prefix (>= 8 hex), or version."""
        self._refresh()
        if not isinstance(selector, str) or not selector:
            raise StackdError("not-found", "empty bundle selector")
        if is_digest(selector):
            return self.get(selector)
        if _SEMVER.match(selector):
            version = SemVer.parse(selector)
            matches = [b for b in self.all() if b.version == version]
            if not matches:
                raise StackdError("not-found", f"no bundle at version {selector}")
            if len(matches) > 1:
                raise StackdError(
                    "ambiguous-selector",
                    f"version {selector} names {len(matches)} bundles",
                    {"matches": [b.bundle_id for b in matches]},
                )
            return matches[0]
        if re.fullmatch(r"[0-9a-f]{8,63}", selector):
            matches = [b for b in self.all() if b.bundle_id.startswith(selector)]
            if not matches:
                raise StackdError("not-found", f"no bundle id starts with {selector}")
            if len(matches) > 1:
                raise StackdError(
                    "ambiguous-selector",
                    f"prefix {selector} names {len(matches)} bundles",
                    {"matches": [b.bundle_id for b in matches]},
                )
            return matches[0]
        raise StackdError("not-found", f"selector {selector!r} is neither an id, prefix, nor version")

    def diff(self, a: Bundle, b: Bundle) -> dict:
        """Compare artifact sets of a -> b and recommend a version bump."""
        map_a = a.artifact_map()
        map_b = b.artifact_map()
        added = [map_b[k].to_doc() for k in sorted(map_b.keys() - map_a.keys())]
        removed = [map_a[k].to_doc() for k in sorted(map_a.keys() - map_b.keys())]
        changed = []
        for key in sorted(map_a.keys() & map_b.keys()):
            if map_a[key].digest != map_b[key].digest:
                changed.append(
                    {
                        "kind": key[0],
                        "name": key[1],
                        "from": map_a[key].digest,
                        "to": map_b[key].digest,
                    }
                )
        touched = {d["kind"] for d in added} | {d["kind"] for d in removed} | {
            d["kind"] for d in changed
        }
        if touched & _MAJOR_KINDS:
            bump = "major"
        elif touched & _MINOR_KINDS:
            bump = "minor"
        elif touched:
            bump = "patch"
        else:
            bump = "none"
        return {"added": added, "removed": removed, "changed": changed, "bump": bump}

    def verify_integrity(self, bundle_id: str) -> dict:
        """Recompute the manifest digest and check every artifact resolves."""
        bundle = self.get(bundle_id)
        recomputed = digest_of(
            manifest_identity_doc(
                bundle.version, bundle.capability_tier, bundle.artifacts, bundle.parent
            )
        )
        artifacts = []
        all_resolved = True
        for ref in bundle.artifacts:
            resolved = self._store.has_blob(ref.digest)
            all_resolved = all_resolved and resolved
            artifacts.append({**ref.to_doc(), "resolved": resolved})
        id_match = recomputed == bundle.bundle_id
        return {
            "bundle_id": bundle.bundle_id,
            "id_match": id_match,
            "artifacts": artifacts,
            "ok": id_match and all_resolved,
        }
