"""Domain errors with stable machine-readable codes.

The code is part of the wire contract: the HTTP layer and the CLI
surface it verbatim, so callers can branch on it without parsing
messages.
"""

from __future__ import annotations


class StackdError(Exception):
    def __init__(self, code: str, message: str, details: dict | None = None):
        super().__init__(message)
        self.code = code
        self.message = message
        self.details = details or {}

    def to_doc(self) -> dict:
        doc = {"code": self.code, "message": self.message}
        if self.details:
            doc["details"] = self.details
        return doc

    def __repr__(self) -> str:  # pragma: no cover
        return f"StackdError({self.code!r}, {self.message!r})"
