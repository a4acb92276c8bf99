"""Single OpenFlow-style switch: priority-matched rules, token-bucket meters,
a strict-priority pair of output queues sharing one buffer, and a rule
installation latency model.

The output port serves the high queue first, but the high queue is shaped to
``high_share`` of the link; the low queue uses whatever capacity is left.
The shared buffer holds ``buffer_packets`` packets regardless of size, as a
Linux pfifo qdisc does. When it is full an arriving high-queue packet pushes
out the newest low-queue packet; an arriving low-queue packet is dropped.
"""
from __future__ import annotations

import bisect
import dataclasses
import heapq
from collections import deque

import numpy as np

from ..errors import TableFull
from ..flow_engine import FlowKey, PacketRecord, flow_key
from ..policy import FlowRule, Match, RuleAction
from .events import DELIVERED, DROPPED, REDIRECTED, RULE, EventLog
from .scenario import SwitchConfig

DEFAULT_RULE = FlowRule(Match(), RuleAction.FORWARD, 0, queue="low")
MIN_BURST_BYTES = 3000
BURST_SECONDS = 0.05


@dataclasses.dataclass(frozen=True)
class Delivered:
    queue: str


@dataclasses.dataclass(frozen=True)
class Dropped:
    reason: str


@dataclasses.dataclass(frozen=True)
class Redirected:
    sink: str = "honeypot"


class TokenBucket:
    """Rate in bits/s; burst in bytes. Starts full."""

    def __init__(self, rate_bps: float, burst_bytes: float | None = None, t0: float = 0.0):
        self.rate = rate_bps / 8.0
        self.burst = burst_bytes if burst_bytes is not None else max(self.rate * BURST_SECONDS, MIN_BURST_BYTES)
        self.tokens = self.burst
        self.t = t0

    def conform(self, t: float, size: int) -> bool:
        if t > self.t:
            self.tokens = min(self.burst, self.tokens + (t - self.t) * self.rate)
            self.t = t
        if self.tokens >= size:
            self.tokens -= size
            return True
        return False


@dataclasses.dataclass
class InstalledRule:
    rule: FlowRule
    requested_at: float
    applied_at: float
    seq: int
    meter: TokenBucket | None = None


@dataclasses.dataclass(slots=True)
class _Queued:
    arrival: float
    size: int
    flow: str
    app: str


class InstallLatency:
    """Uniform jitter of +/- ``jitter`` x mean around ``mean_ms``."""

    def __init__(self, mean_ms: float = 24.8, jitter: float = 0.3, seed: int = 0):
        if mean_ms < 0 or not 0 <= jitter <= 1:
            raise ValueError("install latency needs mean >= 0 and jitter in [0, 1]")
        self.mean = mean_ms / 1000.0
        self.jitter = jitter
        self.rng = np.random.default_rng(np.random.SeedSequence([seed, 0x1257]))

    def sample(self) -> float:
        if self.jitter == 0 or self.mean == 0:
            return self.mean
        return self.mean * (1.0 + self.rng.uniform(-self.jitter, self.jitter))


class SwitchModel:
    def __init__(self, link_mbps: float, cfg: SwitchConfig = SwitchConfig(), *,
                 seed: int = 0, log: EventLog | None = None):
        if link_mbps <= 0 or not 0 < cfg.high_share <= 1:
            raise ValueError("link capacity must be positive and high_share in (0, 1]")
        self.cfg = cfg
        self.link = link_mbps * 1e6 / 8.0            # bytes/s
        self.high_rate = self.link * cfg.high_share
        self.log = log if log is not None else EventLog()
        self.latency = InstallLatency(cfg.install_mean_ms, cfg.install_jitter, seed)
        self._seq = 0
        self.rules: list[InstalledRule] = [InstalledRule(DEFAULT_RULE, 0.0, 0.0, 0)]
        self._order: list[tuple] = [(0, 0)]
        self._pending: list[tuple[float, int, InstalledRule]] = []
        self._cache: dict[FlowKey, InstalledRule] = {}
        self.queues = {"high": deque(), "low": deque()}
        self.qbytes = {"high": 0, "low": 0}
        self.link_free = 0.0
        self.high_ready = 0.0

    # -- rules -------------------------------------------------------------
    @property
    def queued_bytes(self) -> int:
        return self.qbytes["high"] + self.qbytes["low"]

    @property
    def rule_count(self) -> int:
        return len(self.rules) - 1 + len(self._pending)

    def has_rule(self, rule: FlowRule) -> bool:
        return any(r.rule == rule for r in self.rules) or any(p[2].rule == rule for p in self._pending)

    def install_rule(self, rule: FlowRule, now: float, **context) -> float:
        """Schedule ``rule``; returns the time it becomes active."""
        if self.rule_count >= self.cfg.max_rules:
            raise TableFull(f"flow table holds {self.cfg.max_rules} rules")
        latency = self.latency.sample()
        applied = now + latency
        self._seq += 1
        meter = TokenBucket(rule.meter_bps, t0=applied) if rule.meter_bps else None
        inst = InstalledRule(rule, now, applied, self._seq, meter)
        heapq.heappush(self._pending, (applied, self._seq, inst))
        self.log.add(RULE, applied, requested=now, latency_ms=latency * 1000.0,
                     rule=rule.to_dict(), **context)
        if latency == 0:
            self._activate(now)
        return applied

    def _activate(self, t: float) -> None:
        changed = False
        while self._pending and self._pending[0][0] <= t:
            _, seq, inst = heapq.heappop(self._pending)
            pos = bisect.bisect(self._order, (-inst.rule.priority, seq))
            self._order.insert(pos, (-inst.rule.priority, seq))
            self.rules.insert(pos, inst)
            changed = True
        if changed:
            self._cache.clear()

    def lookup(self, key: FlowKey, t: float | None = None) -> InstalledRule:
        if t is not None:
            self._activate(t)
        hit = self._cache.get(key)
        if hit is None:
            hit = next(r for r in self.rules if r.rule.match.matches(key))
            self._cache[key] = hit
        return hit

    # -- data plane --------------------------------------------------------
    def _serve(self, until: float) -> None:
        """Start every transmission that begins strictly before ``until``."""
        high, low = self.queues["high"], self.queues["low"]
        while high or low:
            hs = max(self.link_free, high[0].arrival, self.high_ready) if high else None
            ls = max(self.link_free, low[0].arrival) if low else None
            if hs is not None and (ls is None or hs <= ls):
                q, start, name = high, hs, "high"
            else:
                q, start, name = low, ls, "low"
            if start >= until:
                return
            pkt = q.popleft()
            self.qbytes[name] -= pkt.size
            self.link_free = start + pkt.size / self.link
            if name == "high":
                self.high_ready = start + pkt.size / self.high_rate
            self.log.add(DELIVERED, self.link_free, flow=pkt.flow, app=pkt.app, bytes=pkt.size, queue=name)

    def _enqueue(self, t: float, name: str, flow: str, app: str, size: int) -> bool:
        high, low = self.queues["high"], self.queues["low"]
        if len(high) + len(low) >= self.cfg.buffer_packets:
            if name != "high" or not low:
                return False
            victim = low.pop()
            self.qbytes["low"] -= victim.size
            self.log.add(DROPPED, t, flow=victim.flow, app=victim.app, bytes=victim.size,
                         reason="pushout")
        self.queues[name].append(_Queued(t, size, flow, app))
        self.qbytes[name] += size
        return True

    def match_and_forward(self, p: PacketRecord, app: str = "", key: FlowKey | None = None):
        t = p.ts
        self._activate(t)
        self._serve(t)
        key = flow_key(p) if key is None else key
        inst = self.lookup(key)
        rule = inst.rule
        flow = key.render()
        if rule.action is RuleAction.DROP:
            out = Dropped("rule")
        elif inst.meter is not None and not inst.meter.conform(t, p.length):
            out = Dropped("meter")
        elif rule.action is RuleAction.HONEYPOT:
            out = Redirected()
        elif self._enqueue(t, rule.queue or "low", flow, app, p.length):
            return Delivered(rule.queue or "low")
        else:
            out = Dropped("overflow")
        if isinstance(out, Redirected):
            self.log.add(REDIRECTED, t, flow=flow, app=app, bytes=p.length, sink=out.sink)
        else:
            self.log.add(DROPPED, t, flow=flow, app=app, bytes=p.length, reason=out.reason)
        return out

    def drain(self) -> None:
        self._serve(float("inf"))
