"""Telemetry ingestion, window aggregation, anomaly detection, routing.

Signals land on one append-only stream per kind. Anomaly detection is
an EWMA mean/variance tracker replayed deterministically over a kind's
stream in offset order:

    m_0 = x_0, v_0 = 0
    alert check at t >= 1 uses the state before the update:
        z = |x_t - m_{t-1}| / sqrt(v_{t-1})      (only when v_{t-1} > 0)
    m_t = alpha * x_t + (1 - alpha) * m_{t-1}
    v_t = alpha * (x_t - m_{t-1})^2 + (1 - alpha) * v_{t-1}

No alert fires during the warmup prefix or while the variance is still
zero, so constant streams stay silent. Routing binds an alert to the
owner configured for its kind; a kind without an owner is a
configuration defect and routing fails loudly.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import fsum, isfinite, sqrt

from .canonical import digest_of, normalize_ts
from .errors import StackdError
from .store import Store

SIGNAL_KINDS = (
    "latency_ms",
    "refusal_rate",
    "policy_violation",
    "retrieval_failure",
    "inference_pattern",
)

_COUNT_KINDS = {"policy_violation", "retrieval_failure"}

ALERT_STREAM = "alerts"


def stream_for(kind: str) -> str:
    return f"telemetry/{kind}"


@dataclass(frozen=True)
class DetectorConfig:
    alpha: float = 0.1
    warn_z: float = 3.0
    critical_z: float = 5.0
    warmup_count: int = 10

    @classmethod
    def from_doc(cls, doc) -> "DetectorConfig":
        doc = doc or {}
        cfg = cls(
            alpha=doc.get("alpha", 0.1),
            warn_z=doc.get("warn_z", 3.0),
            critical_z=doc.get("critical_z", 5.0),
            warmup_count=doc.get("warmup_count", 10),
        )
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if not isinstance(self.alpha, (int, float)) or not 0.0 < self.alpha < 1.0:
            raise StackdError("invalid-config", f"alpha must be in (0, 1), got {self.alpha!r}")
        if (
            not isinstance(self.warn_z, (int, float))
            or not isinstance(self.critical_z, (int, float))
            or not 0 < self.warn_z < self.critical_z
        ):
            raise StackdError(
                "invalid-config",
                f"need 0 < warn_z < critical_z, got {self.warn_z!r}, {self.critical_z!r}",
            )
        if not isinstance(self.warmup_count, int) or isinstance(self.warmup_count, bool) or self.warmup_count < 1:
            raise StackdError(
                "invalid-config", f"warmup_count must be an integer >= 1, got {self.warmup_count!r}"
            )


def ewma_alerts(values: list[float], config: DetectorConfig, meta: list[dict] | None = None) -> list[dict]:
    """Pure EWMA pass over a value sequence; meta supplies per-signal context."""
    alerts: list[dict] = []
    mean = 0.0
    var = 0.0
    for idx, x in enumerate(values):
        if idx == 0:
            mean = x
            var = 0.0
            continue
        if idx >= config.warmup_count and var > 0.0:
            z = abs(x - mean) / sqrt(var)
            severity = None
            if z >= config.critical_z:
                severity = "critical"
            elif z >= config.warn_z:
                severity = "warn"
            if severity is not None:
                info = meta[idx] if meta else {}
                alert = {
                    "kind": info.get("kind"),
                    "bundle_id": info.get("bundle_id"),
                    "window_end": info.get("observed_at"),
                    "offset": idx,
                    "observed": x,
                    "expected": mean,
                    "z_score": z,
                    "severity": severity,
                }
                # deterministic id: same stream state always yields the same alert
                alert["alert_id"] = digest_of(
                    {k: alert[k] for k in ("kind", "bundle_id", "window_end", "offset", "observed")}
                )[:32]
                alerts.append(alert)
        var = config.alpha * (x - mean) ** 2 + (1.0 - config.alpha) * var
        # delta form: a constant stream keeps x - mean at exactly zero, so
        # the variance never picks up rounding noise and can never alert
        mean = mean + config.alpha * (x - mean)
    return alerts


class TelemetryHub:
    def __init__(self, store: Store):
        self._store = store

    def ingest(self, doc: dict) -> dict:
        """Validate one signal and append it to its kind's stream."""
        if not isinstance(doc, dict):
            raise StackdError("invalid-signal", "signal must be an object")
        kind = doc.get("kind")
        if kind not in SIGNAL_KINDS:
            raise StackdError("invalid-signal", f"unknown signal kind {kind!r}", {"kind": kind})
        value = doc.get("value")
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not isfinite(value):
            raise StackdError("invalid-signal", f"value must be a finite number, got {value!r}")
        if kind == "latency_ms" and value < 0:
            raise StackdError("invalid-signal", "latency_ms cannot be negative")
        if kind == "refusal_rate" and not 0.0 <= value <= 1.0:
            raise StackdError("invalid-signal", f"refusal_rate must be in [0, 1], got {value!r}")
        if kind in _COUNT_KINDS and (value < 0 or value != int(value)):
            raise StackdError("invalid-signal", f"{kind} carries a count >= 0, got {value!r}")
        bundle_id = doc.get("bundle_id")
        if not isinstance(bundle_id, str) or not bundle_id:
            raise StackdError("invalid-signal", "signals must name the bundle they observe")
        observed_at = doc.get("observed_at")
        if not observed_at:
            raise StackdError("invalid-signal", "signals must carry observed_at")
        signal = {
            "kind": kind,
            "value": value,
            "bundle_id": bundle_id,
            "observed_at": normalize_ts(observed_at),
        }
        self._store.append_event(stream_for(kind), dict(signal))
        return signal

    def signals(self, kind: str) -> list[dict]:
        if kind not in SIGNAL_KINDS:
            raise StackdError("invalid-signal", f"unknown signal kind {kind!r}", {"kind": kind})
        if not self._store.stream_exists(stream_for(kind)):
            return []
        return [event.payload for event in self._store.read_events(stream_for(kind))]

    def aggregate(self, kind: str, start: str, end: str) -> dict:
        """Stats over signals with start <= observed_at < end."""
        try:
            start_ts = normalize_ts(start)
            end_ts = normalize_ts(end)
        except ValueError as exc:
            raise StackdError("invalid-window", f"bad window bound: {exc}") from exc
        if end_ts <= start_ts:
            raise StackdError("invalid-window", "window end must be after start")
        values = [
            s["value"] for s in self.signals(kind) if start_ts <= s["observed_at"] < end_ts
        ]
        if not values:
            return {
                "kind": kind, "start": start_ts, "end": end_ts, "count": 0,
                "mean": None, "min": None, "max": None, "mean_undefined": True,
            }
        return {
            "kind": kind,
            "start": start_ts,
            "end": end_ts,
            "count": len(values),
            "mean": fsum(values) / len(values),
            "min": min(values),
            "max": max(values),
            "mean_undefined": False,
        }

    def detect(self, kind: str, config: DetectorConfig | None = None) -> list[dict]:
        """Replay the kind's stream through the EWMA detector."""
        config = config or DetectorConfig()
        config.validate()
        signals = self.signals(kind)
        values = [s["value"] for s in signals]
        return ewma_alerts(values, config, meta=signals)

    def route(self, alert: dict, routes: dict) -> dict:
        """Bind an alert to its kind's owner and persist it.

        routes = {"owners": {kind: owner}, "escalation_path": [owner, ...]}.
        Critical alerts carry the escalation path. Alerts already
        routed (same alert_id) are returned unchanged, not duplicated.
        """
        owners = routes.get("owners", {})
        owner = owners.get(alert["kind"])
        if not owner:
            raise StackdError(
                "no-owner",
                f"no owner configured for signal kind {alert['kind']}",
                {"kind": alert["kind"]},
            )
        for existing in self.alerts():
            if existing["alert_id"] == alert["alert_id"]:
                return existing
        routed = dict(alert)
        routed["owner"] = owner
        routed["escalation_path"] = (
            list(routes.get("escalation_path", [])) if alert["severity"] == "critical" else []
        )
        self._store.append_event(ALERT_STREAM, dict(routed))
        return routed

    def alerts(self) -> list[dict]:
        if not self._store.stream_exists(ALERT_STREAM):
            return []
        return [event.payload for event in self._store.read_events(ALERT_STREAM)]
