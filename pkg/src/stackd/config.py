"""Service configuration: a JSON file plus a couple of env overrides.

Everything has a sensible default except data_dir, which must come
from the file or STACKD_DATA_DIR. The deterministic clock and rng
seed exist for replay comparisons: two processes configured with the
same fixed clock and seed produce byte-identical streams for the same
call sequence.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from random import Random

from .canonical import SteppingClock, SystemClock, parse_ts
from .drift import validate_thresholds
from .errors import StackdError
from .escalation import validate_policy
from .gates import validate_approval_table
from .telemetry import DetectorConfig

DEFAULT_LISTEN = "127.0.0.1:7317"

ENV_DATA_DIR = "STACKD_DATA_DIR"
ENV_LISTEN = "STACKD_LISTEN"


@dataclass
class ServiceConfig:
    data_dir: str
    listen_address: str = DEFAULT_LISTEN
    owner_routes: dict = field(default_factory=lambda: {"owners": {}, "escalation_path": []})
    drift_thresholds: dict = field(default_factory=dict)
    approval_table: dict = field(default_factory=dict)
    detector: dict = field(default_factory=dict)
    escalation_policy: dict = field(default_factory=dict)
    clock: dict | None = None
    rng_seed: int | None = None

    @property
    def host(self) -> str:
        return self.listen_address.rsplit(":", 1)[0]

    @property
    def port(self) -> int:
        return int(self.listen_address.rsplit(":", 1)[1])

    def make_clock(self):
        if self.clock is None:
            return SystemClock()
        return SteppingClock(parse_ts(self.clock["start"]), self.clock.get("step_ms", 0))

    def make_rng(self) -> Random:
        return Random(self.rng_seed) if self.rng_seed is not None else Random()

    def detector_config(self) -> DetectorConfig:
        return DetectorConfig.from_doc(self.detector)


def _check(doc: dict) -> list[str]:
    reasons = []
    if not isinstance(doc.get("data_dir"), str) or not doc.get("data_dir"):
        reasons.append("data_dir: required, must be a non-empty path")
    listen = doc.get("listen_address", DEFAULT_LISTEN)
    if not isinstance(listen, str) or ":" not in listen:
        reasons.append("listen_address: expected host:port")
    else:
        port = listen.rsplit(":", 1)[1]
        if not port.isdigit() or not 0 < int(port) < 65536:
            reasons.append("listen_address: port must be 1..65535")

    routes = doc.get("owner_routes", {})
    if not isinstance(routes, dict):
        reasons.append("owner_routes: expected an object")
    else:
        owners = routes.get("owners", {})
        if not isinstance(owners, dict) or not all(
            isinstance(k, str) and isinstance(v, str) and v for k, v in owners.items()
        ):
            reasons.append("owner_routes.owners: expected {signal_kind: owner_name}")
        path = routes.get("escalation_path", [])
        if not isinstance(path, list) or not all(isinstance(p, str) and p for p in path):
            reasons.append("owner_routes.escalation_path: expected a list of owner names")

    for key, validator in (
        ("drift_thresholds", validate_thresholds),
        ("approval_table", validate_approval_table),
        ("escalation_policy", validate_policy),
    ):
        value = doc.get(key, {})
        if not isinstance(value, dict):
            reasons.append(f"{key}: expected an object")
            continue
        try:
            validator(value)
        except StackdError as err:
            reasons.append(f"{key}: {err.message}")

    try:
        DetectorConfig.from_doc(doc.get("detector", {})).validate()
    except StackdError as err:
        reasons.append(f"detector: {err.message}")

    clock = doc.get("clock")
    if clock is not None:
        ok = isinstance(clock, dict) and isinstance(clock.get("start"), str)
        if ok:
            try:
                parse_ts(clock["start"])
            except (ValueError, StackdError):
                ok = False
        step = clock.get("step_ms", 0) if isinstance(clock, dict) else 0
        if not isinstance(step, int) or isinstance(step, bool) or step < 0:
            ok = False
        if not ok:
            reasons.append("clock: expected {start: timestamp, step_ms: integer >= 0}")

    seed = doc.get("rng_seed")
    if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool)):
        reasons.append("rng_seed: expected an integer")
    return reasons


def load_config(doc: dict | None = None, path: str | None = None) -> ServiceConfig:
    """Build a validated config from a dict or JSON file, applying env overrides."""
    if doc is None:
        doc = {}
        if path is not None:
            try:
                with open(path, encoding="utf-8") as fh:
                    doc = json.load(fh)
            except FileNotFoundError:
                raise StackdError("config-invalid", f"config file not found: {path}")
            except json.JSONDecodeError as err:
                raise StackdError("config-invalid", f"config file is not valid JSON: {err}")
            if not isinstance(doc, dict):
                raise StackdError("config-invalid", "config file must hold a JSON object")
    doc = dict(doc)
    if os.environ.get(ENV_DATA_DIR):
        doc["data_dir"] = os.environ[ENV_DATA_DIR]
    if os.environ.get(ENV_LISTEN):
        doc["listen_address"] = os.environ[ENV_LISTEN]

    reasons = _check(doc)
    if reasons:
        raise StackdError(
            "config-invalid",
            f"{len(reasons)} config problem(s): " + "; ".join(reasons),
            {"reasons": reasons},
        )
    return ServiceConfig(
        data_dir=doc["data_dir"],
        listen_address=doc.get("listen_address", DEFAULT_LISTEN),
        owner_routes={
            "owners": dict(doc.get("owner_routes", {}).get("owners", {})),
            "escalation_path": list(doc.get("owner_routes", {}).get("escalation_path", [])),
        },
        drift_thresholds=doc.get("drift_thresholds", {}),
        approval_table=doc.get("approval_table", {}),
        detector=doc.get("detector", {}),
        escalation_policy=doc.get("escalation_policy", {}),
        clock=doc.get("clock"),
        rng_seed=doc.get("rng_seed"),
    )
