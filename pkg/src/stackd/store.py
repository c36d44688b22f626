"""Content-addressed blob store and append-only event streams.

Layout under the data directory:

    blobs/<hh>/<digest>       raw blob bytes, hh = first two hex chars
    streams/<name>.jsonl      one canonical-JSON event object per line

Blobs are keyed by the SHA-256 of their content and verified against
that digest on every read, so silent corruption surfaces as an error
instead of bad data. Stream appends are serialized per stream and
flushed to stable storage before the new offset is returned; offsets
are simply line numbers, contiguous from zero.

Most streams get a `recorded_at` timestamp merged into the event at
append time. Streams whose events carry their own hash-covered
timestamps (the decision chain) append with stamp=False so that every
byte on disk is covered by integrity checks.
"""

from __future__ import annotations

import os
import re
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

from .canonical import SystemClock, canonical_bytes, format_ts, sha256_hex
from .errors import StackdError

_STREAM_NAME = re.compile(r"^[a-z0-9_-]+(/[a-z0-9_-]+)*$")


@dataclass(frozen=True)
class StreamEvent:
    stream: str
    offset: int
    payload: dict
    recorded_at: str | None


class Store:
    def __init__(self, data_dir: str | Path, clock=None, fsync: bool = True):
        self.data_dir = Path(data_dir)
        self._blob_dir = self.data_dir / "blobs"
        self._stream_dir = self.data_dir / "streams"
        self._blob_dir.mkdir(parents=True, exist_ok=True)
        self._stream_dir.mkdir(parents=True, exist_ok=True)
        self._clock = clock or SystemClock()
        self._fsync = fsync
        self._locks_guard = threading.Lock()
        self._stream_locks: dict[str, threading.Lock] = {}
        self._lengths: dict[str, int] = {}

    # -- blobs ---------------------------------------------------------

    def _blob_path(self, digest: str) -> Path:
        return self._blob_dir / digest[:2] / digest

    def put_blob(self, data: bytes) -> str:
        """Store bytes, return their SHA-256 digest. Idempotent."""
        if not isinstance(data, (bytes, bytearray)):
            raise StackdError("storage-io", "blob content must be bytes")
        digest = sha256_hex(bytes(data))
        path = self._blob_path(digest)
        if path.exists():
            return digest
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        try:
            with open(tmp, "wb") as fh:
                fh.write(data)
                fh.flush()
                if self._fsync:
                    os.fsync(fh.fileno())
            os.replace(tmp, path)
        except OSError as exc:
            raise StackdError("storage-io", f"blob write failed: {exc}") from exc
        return digest

    def has_blob(self, digest: str) -> bool:
        return self._blob_path(digest).exists()

    def get_blob(self, digest: str) -> bytes:
        path = self._blob_path(digest)
        try:
            data = path.read_bytes()
        except FileNotFoundError:
            raise StackdError("not-found", f"no blob {digest}", {"digest": digest}) from None
        except OSError as exc:
            raise StackdError("storage-io", f"blob read failed: {exc}") from exc
        actual = sha256_hex(data)
        if actual != digest:
            raise StackdError(
                "integrity-violation",
                f"blob {digest} reads back as {actual}",
                {"digest": digest, "actual": actual},
            )
        return data

    # -- streams -------------------------------------------------------

    def _stream_path(self, name: str) -> Path:
        return self._stream_dir / f"{name}.jsonl"

    def _check_name(self, name: str) -> None:
        if not isinstance(name, str) or not _STREAM_NAME.match(name):
            raise StackdError(
                "invalid-stream-name",
                "stream names are slash-separated [a-z0-9_-]+ segments",
                {"stream": name},
            )

    def _lock_for(self, name: str) -> threading.Lock:
        with self._locks_guard:
            lock = self._stream_locks.get(name)
            if lock is None:
                lock = self._stream_locks[name] = threading.Lock()
            return lock

    def _count_lines(self, path: Path) -> int:
        count = 0
        with open(path, "rb") as fh:
            for _ in fh:
                count += 1
        return count

    def append_event(self, stream: str, payload: Mapping, stamp: bool = True) -> int:
        """Append one event, return its offset.

        The event is the payload itself, written as one canonical JSON
        line. With stamp=True a recorded_at timestamp is merged in
        unless the payload already carries one. The write is flushed
        and fsynced before the offset is returned.
        """
        self._check_name(stream)
        if not isinstance(payload, Mapping):
            raise StackdError("storage-io", "event payload must be a JSON object")
        event = dict(payload)
        if stamp and "recorded_at" not in event:
            event["recorded_at"] = format_ts(self._clock.now())
        line = canonical_bytes(event) + b"\n"
        path = self._stream_path(stream)
        with self._lock_for(stream):
            if stream not in self._lengths:
                self._lengths[stream] = self._count_lines(path) if path.exists() else 0
            path.parent.mkdir(parents=True, exist_ok=True)
            try:
                with open(path, "ab") as fh:
                    fh.write(line)
                    fh.flush()
                    if self._fsync:
                        os.fsync(fh.fileno())
            except OSError as exc:
                raise StackdError("storage-io", f"stream append failed: {exc}") from exc
            offset = self._lengths[stream]
            self._lengths[stream] = offset + 1
            return offset

    def read_raw_lines(self, stream: str) -> list[bytes]:
        """Raw line bytes without trailing newlines; [] for a missing stream."""
        self._check_name(stream)
        path = self._stream_path(stream)
        if not path.exists():
            return []
        with open(path, "rb") as fh:
            return [line.rstrip(b"\n") for line in fh]

    def read_events(self, stream: str, start: int = 0) -> list[StreamEvent]:
        """Events from offset start onward, oldest first.

        Reading an unknown stream is an error; a stream that exists but
        holds nothing yet returns []. start at or past the end also
        returns [].
        """
        self._check_name(stream)
        if start < 0:
            raise StackdError("storage-io", "start offset must be >= 0")
        path = self._stream_path(stream)
        if not path.exists():
            raise StackdError("unknown-stream", f"no stream {stream}", {"stream": stream})
        events = []
        import json

        with open(path, "rb") as fh:
            for offset, line in enumerate(fh):
                if offset < start:
                    continue
                try:
                    payload = json.loads(line)
                except ValueError as exc:
                    raise StackdError(
                        "storage-io",
                        f"stream {stream} line {offset} is not valid JSON",
                        {"stream": stream, "offset": offset},
                    ) from exc
                events.append(
                    StreamEvent(
                        stream=stream,
                        offset=offset,
                        payload=payload,
                        recorded_at=payload.get("recorded_at"),
                    )
                )
        return events

    def stream_exists(self, stream: str) -> bool:
        self._check_name(stream)
        return self._stream_path(stream).exists()

    def stream_length(self, stream: str) -> int:
        """Current event count; 0 for a stream that was never written."""
        self._check_name(stream)
        with self._lock_for(stream):
            if stream not in self._lengths:
                path = self._stream_path(stream)
                self._lengths[stream] = self._count_lines(path) if path.exists() else 0
            return self._lengths[stream]

    def list_streams(self) -> list[str]:
        names: list[str] = []
        for path in self._stream_dir.rglob("*.jsonl"):
            names.append(str(path.relative_to(self._stream_dir))[: -len(".jsonl")])
        return sorted(names)

    def events_matching(self, stream: str, predicate) -> Iterable[StreamEvent]:
        """Convenience filter over a stream that may not exist yet."""
        if not self.stream_exists(stream):
            return []
        return [event for event in self.read_events(stream) if predicate(event.payload)]
