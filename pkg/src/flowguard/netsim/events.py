"""Simulation event log and virtual clock."""
from __future__ import annotations

import json
from collections import Counter
from pathlib import Path
from typing import Iterator

from ..errors import IoFailure

DELIVERED = "PacketDelivered"
DROPPED = "PacketDropped"
REDIRECTED = "PacketRedirected"
ALERT = "AlertRaised"
RULE = "RuleInstalled"
SKIPPED = "DecisionSkipped"
TXN_SUBMITTED = "TxnSubmitted"
TXN_COMMITTED = "TxnCommitted"
PACKET_EVENTS = (DELIVERED, DROPPED, REDIRECTED)


class VirtualClock:
    """Simulated time in seconds. Never moves backwards."""

    def __init__(self, now: float = 0.0):
        self.now = float(now)

    def advance_to(self, t: float) -> float:
        if t > self.now:
            self.now = float(t)
        return self.now

    def advance(self, dt: float) -> float:
        if dt < 0:
            raise ValueError("clock cannot move backwards")
        self.now += dt
        return self.now


class EventLog:
    """Events are appended out of order (a packet's delivery is scheduled
    before later arrivals are seen) and sorted by (ts, append order) once."""

    def __init__(self):
        self._events: list[dict] = []
        self._sorted = True

    def add(self, kind: str, ts: float, **fields) -> dict:
        ev = {"type": kind, "ts": float(ts), **fields}
        if self._events and ts < self._events[-1]["ts"]:
            self._sorted = False
        self._events.append(ev)
        return ev

    def finalize(self) -> "EventLog":
        if not self._sorted:
            self._events.sort(key=lambda e: e["ts"])  # stable: ties keep append order
            self._sorted = True
        return self

    @property
    def events(self) -> list[dict]:
        return self.finalize()._events

    def __iter__(self) -> Iterator[dict]:
        return iter(self.events)

    def __len__(self) -> int:
        return len(self._events)

    def of(self, *kinds: str) -> list[dict]:
        return [e for e in self.events if e["type"] in kinds]

    def counts(self) -> Counter:
        return Counter(e["type"] for e in self._events)

    def bytes_by(self, kind: str, field: str = "app") -> dict[str, int]:
        out: dict[str, int] = {}
        for e in self._events:
            if e["type"] == kind:
                out[e[field]] = out.get(e[field], 0) + e["bytes"]
        return out

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e, sort_keys=True, separators=(",", ":")) + "\n" for e in self.events)

    def write(self, path) -> Path:
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(self.to_jsonl())
        except OSError as exc:
            raise IoFailure(f"cannot write event log {path}: {exc}") from None
        return path

    @classmethod
    def from_events(cls, events) -> "EventLog":
        log = cls()
        for e in events:
            e = dict(e)
            log.add(e.pop("type"), e.pop("ts"), **e)
        return log

    @classmethod
    def read(cls, path) -> "EventLog":
        try:
            lines = Path(path).read_text().splitlines()
        except OSError as exc:
            raise IoFailure(f"cannot read event log {path}: {exc}") from None
        return cls.from_events(json.loads(line) for line in lines if line.strip())
