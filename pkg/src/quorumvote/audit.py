"""Audit records in the protection-profile categories.

Every component keeps its own log; the committee merges them for
inspection.  Events never carry voter identities, credentials, tokens,
or vote content; a redaction schema enforces this at write time: detail
payloads are key/value pairs with an allowlisted key set and value
shapes that reject identifier-like and secret-like strings.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

CATEGORIES = (
    "officer_auth",
    "poll_start",
    "poll_stop",
    "tally_start_and_result",
    "selftest_result",
    "malfunction",
)

# Keys that may appear in event detail.  Anything else is rejected.
ALLOWED_DETAIL_KEYS = {
    "officer_id",
    "success",
    "action",
    "approvals",
    "remaining",
    "state",
    "from_state",
    "to_state",
    "component",
    "check",
    "outcome",
    "reason",
    "count",
    "votes_stored",
    "voters_voted",
    "session_active",
    "eligible",
    "trigger",
    "interval",
    "step",
    "member",
    "expected",
    "actual",
    "threshold",
    "warning",
    "code",
    "seq",
    "blocks",
}

_VOTER_ID_RE = re.compile(r"V\d{4,}-")
_HEXISH_RE = re.compile(r"[0-9a-fA-F]{40,}")
_B64ISH_RE = re.compile(r"[A-Za-z0-9+/=]{40,}")

MAX_DETAIL_VALUE_LEN = 80


class AuditError(Exception):
    pass


class AuditRedactionError(AuditError):
    """Event detail violates the redaction schema."""


@dataclass(frozen=True)
class AuditEvent:
    timestamp: float
    component: str
    category: str
    detail: dict

    def to_json(self) -> str:
        return json.dumps(
            {
                "timestamp": self.timestamp,
                "component": self.component,
                "category": self.category,
                "detail": self.detail,
            },
            sort_keys=True,
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, line: str) -> "AuditEvent":
        obj = json.loads(line)
        return cls(
            timestamp=obj["timestamp"],
            component=obj["component"],
            category=obj["category"],
            detail=obj["detail"],
        )


def validate_detail(detail: dict) -> None:
    for key, value in detail.items():
        if key not in ALLOWED_DETAIL_KEYS:
            raise AuditRedactionError(f"detail key not allowed: {key!r}")
        if isinstance(value, bool) or value is None:
            continue
        if isinstance(value, (int, float)):
            continue
        if isinstance(value, str):
            if len(value) > MAX_DETAIL_VALUE_LEN:
                raise AuditRedactionError(f"detail value too long for key {key!r}")
            if _VOTER_ID_RE.search(value):
                raise AuditRedactionError(f"voter-id-like value in key {key!r}")
            if _HEXISH_RE.search(value) or _B64ISH_RE.search(value):
                raise AuditRedactionError(f"secret-like value in key {key!r}")
            continue
        raise AuditRedactionError(f"detail value must be a scalar for key {key!r}")


class AuditLog:
    """Append-only per-component event log backed by a JSONL file."""

    def __init__(self, component: str, path: Path | None = None) -> None:
        self.component = component
        self.path = Path(path) if path is not None else None
        self._events: list[AuditEvent] = []
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            for line in self.path.read_text().splitlines():
                if line.strip():
                    self._events.append(AuditEvent.from_json(line))

    def record(self, timestamp: float, category: str, **detail) -> AuditEvent:
        if category not in CATEGORIES:
            raise AuditError(f"unknown audit category: {category!r}")
        validate_detail(detail)
        event = AuditEvent(
            timestamp=timestamp, component=self.component, category=category, detail=detail
        )
        with self._lock:
            self._events.append(event)
            if self.path is not None:
                with open(self.path, "a", encoding="utf-8") as fp:
                    fp.write(event.to_json() + "\n")
                    fp.flush()
        return event

    def events(self) -> list[AuditEvent]:
        with self._lock:
            return list(self._events)


def merge_events(
    logs: Iterable,
    component: str | None = None,
    category: str | None = None,
) -> list[AuditEvent]:
    """Merge per-component logs (or plain event lists) into one
    time-ordered view, re-validating every detail payload."""
    merged: list[AuditEvent] = []
    for log in logs:
        merged.extend(log.events() if hasattr(log, "events") else log)
    if component is not None:
        merged = [e for e in merged if e.component == component]
    if category is not None:
        merged = [e for e in merged if e.category == category]
    merged.sort(key=lambda e: (e.timestamp, e.component, e.category))
    for event in merged:
        validate_detail(event.detail)
    return merged
