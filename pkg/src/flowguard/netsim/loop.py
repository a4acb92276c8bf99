"""The detection -> ledger -> policy -> enforcement loop over a packet trace.

Packets pass through the switch in timestamp order while the controller
polls the flow table every ``check_interval`` seconds. Each poll exports
expired flows, scores them, and for every alert seals a ledger transaction
and (when enforcement is on) installs the compiled rule.
"""
from __future__ import annotations

import collections
import dataclasses

from ..errors import FlowGuardError, InconsistentDecision
from ..flow_engine import FlowState, FlowTable, feature_matrix, flow_key
from ..ids.fusion import decide
from ..labels import NORMAL
from ..ledger import Accepted, Ledger, SigningIdentity, seal_transaction
from ..policy import (PolicyConfig, QosInputs, SeverityInputs, classify_severity,
                      compile_rule, qos_score, severity_score)
from .events import ALERT, SKIPPED, TXN_COMMITTED, TXN_SUBMITTED, EventLog, VirtualClock
from .scenario import ScenarioConfig
from .switch import SwitchModel
from .traffic import Trace, generate_traffic

ALERT_WINDOW = 60.0
CONTROLLER_ID = "controller"


class OracleDetector:
    """Perfect detection: reports each flow's ground-truth label at confidence 1."""

    threshold = 0.5

    def detect(self, flows, X=None):
        return [(f.label or NORMAL, 1.0) for f in flows]


class NeverDetector:
    threshold = 0.5

    def detect(self, flows, X=None):
        return [(NORMAL, 1.0) for _ in flows]


@dataclasses.dataclass
class SimResult:
    log: EventLog
    ledger: Ledger
    trace: Trace
    switch: SwitchModel
    flows_scored: int


class _Controller:
    def __init__(self, cfg, detector, policy, ledger, identity, switch, log, clock, app_of):
        self.cfg = cfg
        self.detector = detector
        self.policy = policy
        self.ledger = ledger
        self.identity = identity
        self.switch = switch
        self.log = log
        self.clock = clock
        self.app_of = app_of
        self.theta = getattr(detector, "threshold", ledger.threshold)
        self.link_bytes = cfg.link_mbps * 1e6 / 8.0
        self.recent = collections.defaultdict(collections.deque)   # source ip -> alert times
        self.n_alerts = 0
        self.flows_scored = 0

    def tick(self, now: float, flows: list[FlowState]) -> None:
        self.clock.advance_to(now)
        if flows:
            X = feature_matrix(flows)
            verdicts = self.detector.detect(flows, X)
            self.flows_scored += len(flows)
            step = self.cfg.detection.inference_ms / 1000.0
            for f, x, v in zip(flows, X, verdicts):
                self.clock.advance(step)
                try:
                    self._handle(f, x, v)
                except FlowGuardError as exc:
                    exc.args = (f"{exc} (flow {f.key.render()} at t={self.clock.now:.6f})",)
                    raise
        self._commit()

    def _commit(self, force: bool = False) -> None:
        while True:
            block = self.ledger.commit_block(self.clock.now, force=force)
            if block is None:
                return
            for t in block.transactions:
                self.log.add(TXN_COMMITTED, self.clock.now, id=t.digest.hex(), block=block.index)

    def _handle(self, f: FlowState, x, verdict) -> None:
        label, score = verdict
        now = self.clock.now
        flow_id = f.key.render()
        alert = decide((label, score), self.theta, flow_id, now)
        if alert is None:
            return
        self.n_alerts += 1
        alert_id = f"a{self.n_alerts}"
        src = f.fwd_src[0]
        window = self.recent[src]
        window.append(now)
        while window[0] < now - ALERT_WINDOW:
            window.popleft()
        self.log.add(ALERT, now, alert_id=alert_id, flow=flow_id, label=alert.label,
                     confidence=alert.confidence, src=src)

        pc = self.policy
        b_src = min(float(x[3]), self.link_bytes)   # byte_rate
        sev = severity_score(SeverityInputs(b_src, self.link_bytes, alert.confidence,
                                            float(len(window)), float(x[5])), pc.severity_weights)
        cls = classify_severity(alert.confidence, pc.thresholds)
        action = pc.table[alert.label]
        threat = sev if pc.qos_threat == "severity" else alert.confidence
        delay_ms = self.switch.queued_bytes / self.link_bytes * 1000.0
        app = self.app_of.get(f.key, "")
        q = qos_score(QosInputs(pc.app_priority.get(app, 0.0), delay_ms, threat, b_src / self.link_bytes),
                      pc.qos_weights)

        try:
            rule = compile_rule(f.key, cls, action)
        except InconsistentDecision as exc:
            rule = None
            self.log.add(SKIPPED, now, alert_id=alert_id, flow=flow_id, reason=str(exc))

        txn = seal_transaction(alert, f"{action.value}/{cls.title}", self.identity, now, qos_score=q)
        res = self.ledger.submit(txn, confidence=alert.confidence, now=now)
        if isinstance(res, Accepted):
            self.log.add(TXN_SUBMITTED, now, id=txn.digest.hex(), alert_id=alert_id, flow=flow_id)

        if rule is not None and self.cfg.enforce and not self.switch.has_rule(rule):
            self.switch.install_rule(rule, now, alert_id=alert_id, flow=flow_id,
                                     severity=cls.title, t_sev=round(sev, 6), qos=round(q, 6))


def run_closed_loop(cfg: ScenarioConfig, detector, policy: PolicyConfig | None = None,
                    ledger: Ledger | None = None, *, trace: Trace | None = None,
                    identity: SigningIdentity | None = None) -> SimResult:
    """Run the scenario end to end; the returned log is finalized."""
    policy = policy or PolicyConfig()
    identity = identity or SigningIdentity.generate(CONTROLLER_ID, seed=cfg.seed)
    if ledger is None:
        ledger = Ledger.simulated([identity], threshold=getattr(detector, "threshold", 0.5))
    trace = trace if trace is not None else generate_traffic(cfg)

    log = EventLog()
    clock = VirtualClock()
    switch = SwitchModel(cfg.link_mbps, cfg.switch, seed=cfg.seed, log=log)
    det = cfg.detection
    table = FlowTable(det.flow_timeout, det.active_timeout)
    ctl = _Controller(cfg, detector, policy, ledger, identity, switch, log, clock, trace.app_of)

    interval = det.check_interval
    n_tick = 1
    next_tick = interval
    for p, app in zip(trace.packets, trace.app):
        while p.ts >= next_tick:
            ctl.tick(next_tick, table.expire(next_tick))
            n_tick += 1
            next_tick = n_tick * interval      # no accumulated rounding drift
        key = flow_key(p)
        table.ingest(p, trace.labels.get(key), key)
        switch.match_and_forward(p, app, key)
    while next_tick <= cfg.duration:
        ctl.tick(next_tick, table.expire(next_tick))
        n_tick += 1
        next_tick = n_tick * interval
    ctl.tick(max(cfg.duration, clock.now), table.flush())
    ctl._commit(force=True)
    switch.drain()
    return SimResult(log.finalize(), ledger, trace, switch, ctl.flows_scored)

