"""Inference adapters for stress runs.

An adapter turns (input bytes, seed, policy_config bytes) into a
scored response. The control plane never talks to a model directly;
production deployments plug in a real adapter, tests and demos use the
table-driven stub below, which is deterministic by construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import isfinite
from typing import Mapping, Protocol

from .errors import StackdError


class AdapterFailure(Exception):
    """Raised by adapters when a single inference cannot be produced."""


@dataclass(frozen=True)
class AdapterResult:
    output_text: str
    category: str
    refused: bool
    violations: int
    attribution: dict[str, float]


class InferenceAdapter(Protocol):
    def infer(self, input_bytes: bytes, seed: int, policy_config: bytes) -> AdapterResult: ...


def default_attribution(text: str) -> dict[str, float]:
    """Token-frequency weights; a stable stand-in when a table entry has none."""
    tokens = text.split()
    if not tokens:
        return {"__empty__": 1.0}
    total = len(tokens)
    weights: dict[str, float] = {}
    for token in tokens:
        weights[token] = weights.get(token, 0.0) + 1.0 / total
    return weights


class StubAdapter:
    """Responses scripted per input text.

    Table entries map the exact prompt text to a response spec:

        {"output": str, "category": str, "refused": bool,
         "violations": int, "attribution": {...}?, "fail": str?}

    An entry with "fail" raises AdapterFailure with that message. The
    optional default entry answers prompts missing from the table;
    without one, an unscripted prompt is a failure.
    """

    def __init__(self, table: Mapping[str, Mapping], default: Mapping | None = None):
        self._table = {key: dict(value) for key, value in table.items()}
        self._default = dict(default) if default is not None else None

    @classmethod
    def from_doc(cls, doc) -> "StubAdapter":
        if not isinstance(doc, Mapping) or doc.get("type", "stub") != "stub":
            raise StackdError("invalid-adapter", "adapter doc must be a stub response table")
        table = doc.get("responses", {})
        if not isinstance(table, Mapping):
            raise StackdError("invalid-adapter", "responses must map prompt text to specs")
        return cls(table, doc.get("default"))

    def _build(self, spec: Mapping) -> AdapterResult:
        if "fail" in spec:
            raise AdapterFailure(str(spec["fail"]))
        output = spec.get("output")
        if not isinstance(output, str):
            raise AdapterFailure("stub entry lacks an output string")
        violations = spec.get("violations", 0)
        if not isinstance(violations, int) or isinstance(violations, bool) or violations < 0:
            raise AdapterFailure("violations must be a count >= 0")
        attribution = spec.get("attribution")
        if attribution is None:
            attribution = default_attribution(output)
        else:
            attribution = dict(attribution)
            if not attribution or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) and isfinite(v)
                for v in attribution.values()
            ):
                raise AdapterFailure("attribution must be a non-empty map of finite weights")
        return AdapterResult(
            output_text=output,
            category=str(spec.get("category", "uncategorized")),
            refused=bool(spec.get("refused", False)),
            violations=violations,
            attribution=attribution,
        )

    def infer(self, input_bytes: bytes, seed: int, policy_config: bytes) -> AdapterResult:
        text = input_bytes.decode("utf-8", errors="replace")
        spec = self._table.get(text, self._default)
        if spec is None:
            raise AdapterFailure(f"no scripted response for prompt {text[:60]!r}")
        return self._build(spec)
