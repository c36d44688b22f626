"""Canonical JSON, content digests, timestamps, and sortable ids.

Every byte sequence that gets hashed anywhere in the system (blob
digests, bundle manifests, decision chain links, dedup keys) goes
through canonical_dumps: UTF-8, object keys sorted bytewise, no
insignificant whitespace, shortest round-trip decimal numbers, and
minimal string escaping. Two semantically equal documents therefore
always hash to the same digest, and a stored document can be checked
for canonical form by re-serializing it.
"""

from __future__ import annotations

import hashlib
import json
import re
from datetime import datetime, timezone

GENESIS_HASH = "0" * 64

_HEX64 = re.compile(r"^[0-9a-f]{64}$")

# Crockford base32 alphabet, used for sortable record ids.
_B32 = "0123456789ABCDEFGHJKMNPQRSTVWXYZ"


def canonical_dumps(obj) -> str:
    """Serialize to canonical JSON text.

    Key order is bytewise because UTF-8 preserves code point order and
    json sorts by code point. NaN and infinities are rejected: they
    have no JSON form and would poison digests.
    """
    return json.dumps(
        obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False
    )


def canonical_bytes(obj) -> bytes:
    return canonical_dumps(obj).encode("utf-8")


def is_canonical(data: bytes) -> bool:
    """True when data is byte-for-byte the canonical form of its own parse."""
    try:
        return canonical_bytes(json.loads(data.decode("utf-8"))) == data
    except (ValueError, UnicodeDecodeError):
        return False


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def digest_of(obj) -> str:
    """Digest of an object's canonical JSON encoding."""
    return sha256_hex(canonical_bytes(obj))


def is_digest(value) -> bool:
    return isinstance(value, str) and bool(_HEX64.match(value))


def format_ts(dt: datetime) -> str:
    """RFC 3339 UTC with millisecond precision, e.g. 2026-08-15T09:30:00.000Z."""
    if dt.tzinfo is None:
        raise ValueError("naive datetime has no place in stored records")
    return dt.astimezone(timezone.utc).isoformat(timespec="milliseconds").replace("+00:00", "Z")


def parse_ts(text: str) -> datetime:
    if not isinstance(text, str):
        raise ValueError("timestamp must be a string")
    return datetime.fromisoformat(text.replace("Z", "+00:00")).astimezone(timezone.utc)


def normalize_ts(text: str) -> str:
    """Round-trip a timestamp string into the stored format."""
    return format_ts(parse_ts(text))


class SystemClock:
    def now(self) -> datetime:
        return datetime.now(timezone.utc)


class SteppingClock:
    """Deterministic clock for replay comparisons.

    Starts at a fixed instant and advances step_ms on every reading;
    step 0 freezes time entirely. Only used when a config asks for it,
    normal operation runs on SystemClock.
    """

    def __init__(self, start: datetime, step_ms: int = 0):
        if start.tzinfo is None:
            raise ValueError("clock start must be timezone-aware")
        self._current = start.astimezone(timezone.utc)
        self._step_ms = step_ms

    def now(self) -> datetime:
        current = self._current
        if self._step_ms:
            from datetime import timedelta

            self._current = current + timedelta(milliseconds=self._step_ms)
        return current


def new_sortable_id(rng, at: datetime) -> str:
    """26-char Crockford base32 id: 48-bit millisecond time + 80 random bits.

    Lexicographic order matches creation order across milliseconds, which
    keeps decision/incident listings naturally sorted.
    """
    ms = int(at.timestamp() * 1000)
    if ms < 0 or ms >= 1 << 48:
        raise ValueError("timestamp outside the 48-bit id range")
    value = (ms << 80) | rng.getrandbits(80)
    chars = []
    for _ in range(26):
        chars.append(_B32[value & 31])
        value >>= 5
    return "".join(reversed(chars))
