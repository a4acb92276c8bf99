"""Alert-to-action mapping, threat severity, QoS scoring and flow-rule compilation."""
from __future__ import annotations

import dataclasses
import enum
import math
from typing import Mapping

from .errors import InconsistentDecision, InvalidInput, InvalidThresholds
from .flow_engine import FlowKey
from .labels import Label

RATE_LIMIT_BPS = 1_000_000
RATE_CAP_PER_MIN = 10.0
ENTROPY_CEILING = 16.0       # bits: log2 of the port space
BANDWIDTH_DECADES = 3.0      # ratios below 1e-3 floor to zero
LATENCY_SCALE_MS = 50.0


class NetworkAction(str, enum.Enum):
    DROP = "Drop"
    REDIRECT = "RedirectHoneypot"
    RATE_LIMIT = "RateLimit"
    PRIORITIZE = "Prioritize"


class SeverityClass(enum.IntEnum):
    SAFE = 0
    SUSPICIOUS = 1
    MALICIOUS = 2

    @property
    def title(self) -> str:
        return self.name.capitalize()


DEFAULT_POLICY = {
    Label.DDOS.value: NetworkAction.DROP,
    Label.DOS.value: NetworkAction.DROP,
    Label.BOTNET.value: NetworkAction.DROP,
    Label.EXPLOIT.value: NetworkAction.REDIRECT,
    Label.WEB.value: NetworkAction.REDIRECT,
    Label.PROBE.value: NetworkAction.RATE_LIMIT,
    Label.BRUTE_FORCE.value: NetworkAction.RATE_LIMIT,
    Label.NORMAL.value: NetworkAction.PRIORITIZE,
}

# VoIP/video first, bulk transfers last.
APP_PRIORITY = {
    "voip": 1.0,
    "video": 0.8,
    "business": 0.6,
    "dns": 0.6,
    "web": 0.4,
    "bulk": 0.2,
    "updates": 0.2,
}


class PolicyTable:
    """Label -> NetworkAction; labels not in the table get ``default``."""

    def __init__(self, mapping: Mapping[str, NetworkAction | str] | None = None,
                 default: NetworkAction | str = NetworkAction.RATE_LIMIT):
        src = DEFAULT_POLICY if mapping is None else mapping
        self._map = {str(k): NetworkAction(v) for k, v in src.items()}
        self.default = NetworkAction(default)

    def __getitem__(self, label: str) -> NetworkAction:
        return self._map.get(str(label), self.default)

    def to_dict(self) -> dict[str, str]:
        return {k: v.value for k, v in sorted(self._map.items())} | {"*": self.default.value}

    @classmethod
    def from_dict(cls, d: Mapping[str, str]) -> "PolicyTable":
        d = dict(d)
        default = d.pop("*", NetworkAction.RATE_LIMIT)
        return cls(d, default)


def _normalized(ws: tuple[float, ...], what: str) -> tuple[float, ...]:
    if any(w < 0 or not math.isfinite(w) for w in ws):
        raise InvalidInput(f"{what} must be finite and non-negative")
    total = sum(ws)
    if total <= 0:
        raise InvalidInput(f"{what} sum to zero")
    return tuple(w / total for w in ws)


@dataclasses.dataclass(frozen=True)
class SeverityWeights:
    alpha: float = 0.2   # bandwidth share
    beta: float = 0.4    # model confidence
    gamma: float = 0.2   # alert frequency
    delta: float = 0.2   # port entropy

    def normalized(self) -> tuple[float, float, float, float]:
        return _normalized((self.alpha, self.beta, self.gamma, self.delta), "severity weights")


@dataclasses.dataclass(frozen=True)
class SeverityInputs:
    b_src: float
    b_total: float
    confidence: float
    alert_rate: float      # alerts per minute from the same source
    entropy: float         # bits


def clamp(x: float, lo: float = 0.0, hi: float = 1.0) -> float:
    return lo if x < lo else hi if x > hi else x


def severity_score(inp: SeverityInputs, w: SeverityWeights = SeverityWeights()) -> float:
    """Weighted threat severity in [0, 1].

    The bandwidth share enters on a log scale spanning three decades, alert
    frequency saturates at 10/min, entropy is scaled by 16 bits.
    """
    if not inp.b_total > 0:
        raise InvalidInput("total bandwidth must be positive")
    if inp.b_src < 0 or inp.alert_rate < 0 or inp.entropy < 0:
        raise InvalidInput("severity inputs must be non-negative")
    a, b, g, d = w.normalized()
    ratio = inp.b_src / inp.b_total
    bw = clamp(1.0 + math.log10(ratio) / BANDWIDTH_DECADES) if ratio > 0 else 0.0
    rate = min(inp.alert_rate / RATE_CAP_PER_MIN, 1.0)
    ent = inp.entropy / ENTROPY_CEILING
    return clamp(a * bw + b * clamp(inp.confidence) + g * rate + d * ent)


@dataclasses.dataclass(frozen=True)
class QosWeights:
    app: float = 0.4
    latency: float = 0.2
    safety: float = 0.3
    bandwidth: float = 0.1

    def normalized(self) -> tuple[float, float, float, float]:
        return _normalized((self.app, self.latency, self.safety, self.bandwidth), "QoS weights")


@dataclasses.dataclass(frozen=True)
class QosInputs:
    app_priority: float
    latency_ms: float
    threat: float          # T_sev, or 1 - confidence under the alternate reading
    bw_share: float        # bw_used / bw_total


def qos_score(inp: QosInputs, w: QosWeights = QosWeights()) -> float:
    g1, g2, g3, g4 = w.normalized()
    lat = 0.0 if math.isinf(inp.latency_ms) else 1.0 / (1.0 + max(inp.latency_ms, 0.0) / LATENCY_SCALE_MS)
    score = (g1 * clamp(inp.app_priority) + g2 * lat + g3 * (1.0 - clamp(inp.threat))
             + g4 * clamp(inp.bw_share))
    return clamp(score)


@dataclasses.dataclass(frozen=True)
class SeverityThresholds:
    high: float = 0.85
    medium: float = 0.60

    def __post_init__(self):
        if not 0.0 < self.medium < self.high <= 1.0:
            raise InvalidThresholds(f"need 0 < medium < high <= 1, got {self.medium}, {self.high}")


def classify_severity(confidence: float, thresholds: SeverityThresholds = SeverityThresholds()) -> SeverityClass:
    if confidence >= thresholds.high:
        return SeverityClass.MALICIOUS
    if confidence >= thresholds.medium:
        return SeverityClass.SUSPICIOUS
    return SeverityClass.SAFE


class RuleAction(str, enum.Enum):
    DROP = "drop"
    HONEYPOT = "output:honeypot"
    FORWARD = "forward"


@dataclasses.dataclass(frozen=True)
class Match:
    """Bidirectional 5-tuple match; ``None`` fields are wildcards."""

    ip_a: str | None = None
    port_a: int | None = None
    ip_b: str | None = None
    port_b: int | None = None
    protocol: str | None = None

    @classmethod
    def from_key(cls, key: FlowKey) -> "Match":
        return cls(key.ip_a, key.port_a, key.ip_b, key.port_b, key.protocol.value)

    def matches(self, key: FlowKey) -> bool:
        return ((self.ip_a is None or self.ip_a == key.ip_a)
                and (self.port_a is None or self.port_a == key.port_a)
                and (self.ip_b is None or self.ip_b == key.ip_b)
                and (self.port_b is None or self.port_b == key.port_b)
                and (self.protocol is None or self.protocol == key.protocol.value))

    def render(self) -> str:
        f = lambda v: "*" if v is None else str(v)  # noqa: E731
        return f"{f(self.ip_a)}:{f(self.port_a)}-{f(self.ip_b)}:{f(self.port_b)}/{f(self.protocol)}"


@dataclasses.dataclass(frozen=True)
class FlowRule:
    match: Match
    action: RuleAction
    priority: int
    meter_bps: int | None = None
    queue: str | None = None   # "high" | "low"

    def __post_init__(self):
        if self.action is RuleAction.DROP and self.queue is not None:
            raise ValueError("drop rules carry no queue")
        if self.queue not in (None, "high", "low"):
            raise ValueError(f"unknown queue {self.queue!r}")

    def to_dict(self) -> dict:
        return {"match": self.match.render(), "action": self.action.value, "priority": self.priority,
                "meter_bps": self.meter_bps, "queue": self.queue}


def compile_rule(flow_id: str | FlowKey, severity: SeverityClass, action: NetworkAction) -> FlowRule:
    """Translate a severity/action decision into a switch rule.

    Malicious flows are dropped (100) or sent to the honeypot (90); a
    rate-limit action at malicious confidence degrades to the suspicious
    rule. Suspicious flows are metered at 1 Mbps on the low queue (60).
    Safe flows go to the high queue (40). Combinations that contradict the
    policy table (a safe flow marked for drop or redirect, a malicious flow
    marked for prioritisation) raise InconsistentDecision.
    """
    key = flow_id if isinstance(flow_id, FlowKey) else FlowKey.parse(flow_id)
    m = Match.from_key(key)
    action = NetworkAction(action)
    if severity is SeverityClass.MALICIOUS:
        if action is NetworkAction.DROP:
            return FlowRule(m, RuleAction.DROP, 100)
        if action is NetworkAction.REDIRECT:
            return FlowRule(m, RuleAction.HONEYPOT, 90)
        if action is NetworkAction.PRIORITIZE:
            raise InconsistentDecision("malicious flow mapped to Prioritize")
        return FlowRule(m, RuleAction.FORWARD, 60, meter_bps=RATE_LIMIT_BPS, queue="low")
    if severity is SeverityClass.SUSPICIOUS:
        return FlowRule(m, RuleAction.FORWARD, 60, meter_bps=RATE_LIMIT_BPS, queue="low")
    if action in (NetworkAction.DROP, NetworkAction.REDIRECT):
        raise InconsistentDecision(f"safe flow mapped to {action.value}")
    return FlowRule(m, RuleAction.FORWARD, 40, queue="high")


@dataclasses.dataclass
class PolicyConfig:
    """Everything the controller needs to turn an alert into a rule.

    ``qos_threat`` selects the threat term of the QoS score: ``"severity"``
    uses T_sev, ``"confidence"`` uses the detector confidence instead.
    """

    table: PolicyTable = dataclasses.field(default_factory=PolicyTable)
    severity_weights: SeverityWeights = SeverityWeights()
    qos_weights: QosWeights = QosWeights()
    thresholds: SeverityThresholds = SeverityThresholds()
    qos_threat: str = "severity"
    app_priority: dict = dataclasses.field(default_factory=lambda: dict(APP_PRIORITY))

    def __post_init__(self):
        if self.qos_threat not in ("severity", "confidence"):
            raise InvalidInput(f"qos_threat must be 'severity' or 'confidence', not {self.qos_threat!r}")

    def to_dict(self) -> dict:
        return {
            "table": self.table.to_dict(),
            "severity_weights": dataclasses.asdict(self.severity_weights),
            "qos_weights": dataclasses.asdict(self.qos_weights),
            "thresholds": dataclasses.asdict(self.thresholds),
            "qos_threat": self.qos_threat,
            "app_priority": dict(sorted(self.app_priority.items())),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "PolicyConfig":
        d = dict(d)
        kw = {}
        if "table" in d:
            kw["table"] = PolicyTable.from_dict(d.pop("table"))
        if "severity_weights" in d:
            kw["severity_weights"] = SeverityWeights(**d.pop("severity_weights"))
        if "qos_weights" in d:
            kw["qos_weights"] = QosWeights(**d.pop("qos_weights"))
        if "thresholds" in d:
            kw["thresholds"] = SeverityThresholds(**d.pop("thresholds"))
        return cls(**kw, **d)
