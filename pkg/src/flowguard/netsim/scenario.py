"""Scenario files: benign application mix, scripted attack, switch and detector timing.

Example (YAML or JSON)::

    duration: 10.0
    link_mbps: 10.0
    seed: 1
    enforce: true
    apps:
      - {name: voip, flows: 10, rate_kbps: 1000, pkt_bytes: 200, port: 5060, protocol: UDP}
    attack: {type: DDoS, start: 1.0, mbps: 100, sources: 4, pkt_bytes: 1500, port: 80}
    switch: {high_share: 0.5, buffer_packets: 100, max_rules: 4096,
             install_mean_ms: 24.8, install_jitter: 0.3}
    detection: {flow_timeout: 5.0, active_timeout: 0.5, check_interval: 0.1, inference_ms: 1.0}
"""
from __future__ import annotations

import dataclasses
from pathlib import Path

from ..errors import ConfigError


@dataclasses.dataclass(frozen=True)
class AppSpec:
    name: str
    flows: int = 1
    rate_kbps: float = 64.0     # aggregate over the app's flows
    pkt_bytes: int = 200
    port: int = 5060
    protocol: str = "UDP"
    reply_every: int = 0        # every n-th packet travels server -> client; 0 disables

    def __post_init__(self):
        if self.flows < 1 or self.rate_kbps < 0 or self.pkt_bytes < 1:
            raise ConfigError(f"app {self.name!r}: flows >= 1, rate >= 0, pkt_bytes >= 1 required")


@dataclasses.dataclass(frozen=True)
class AttackSpec:
    type: str = "DDoS"          # DDoS / DoS flood, or Probe (port scan)
    start: float = 1.0
    mbps: float = 0.0
    sources: int = 4
    pkt_bytes: int = 1500
    port: int = 80
    protocol: str = "UDP"

    def __post_init__(self):
        if self.mbps < 0 or self.sources < 1 or self.start < 0 or self.pkt_bytes < 1:
            raise ConfigError("attack: mbps >= 0, sources >= 1, start >= 0, pkt_bytes >= 1 required")


@dataclasses.dataclass(frozen=True)
class SwitchConfig:
    high_share: float = 0.5          # share of link capacity the high queue may use
    buffer_packets: int = 100      # shared by both queues
    max_rules: int = 4096
    install_mean_ms: float = 24.8
    install_jitter: float = 0.3      # +/- fraction, uniform


@dataclasses.dataclass(frozen=True)
class DetectionConfig:
    flow_timeout: float = 5.0
    active_timeout: float | None = 0.5
    check_interval: float = 0.1
    inference_ms: float = 1.0


@dataclasses.dataclass(frozen=True)
class ScenarioConfig:
    duration: float = 10.0
    link_mbps: float = 10.0
    seed: int = 0
    enforce: bool = True
    apps: tuple[AppSpec, ...] = (AppSpec("voip", flows=10, rate_kbps=1000.0),)
    attack: AttackSpec | None = None
    switch: SwitchConfig = SwitchConfig()
    detection: DetectionConfig = DetectionConfig()

    def __post_init__(self):
        if self.duration <= 0:
            raise ConfigError("duration must be positive")
        if self.link_mbps <= 0:
            raise ConfigError("link capacity must be positive")

    def replace(self, **kw) -> "ScenarioConfig":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        try:
            apps = tuple(AppSpec(**a) for a in d.pop("apps", [])) or cls.apps
            attack = d.pop("attack", None)
            return cls(
                apps=apps,
                attack=AttackSpec(**attack) if attack else None,
                switch=SwitchConfig(**d.pop("switch", {})),
                detection=DetectionConfig(**d.pop("detection", {})),
                **d,
            )
        except TypeError as exc:
            raise ConfigError(f"bad scenario: {exc}") from None

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        import yaml

        try:
            doc = yaml.safe_load(Path(path).read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read scenario {path}: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"scenario {path} is not a mapping")
        return cls.from_dict(doc)


def scripted_ddos(seed: int = 0, enforce: bool = True, attack_mbps: float | None = None,
                  duration: float = 10.0) -> ScenarioConfig:
    """VoIP at 1 Mbps aggregate on a 10 Mbps link plus a 4-source flood at 10x the link."""
    link = 10.0
    return ScenarioConfig(
        duration=duration, link_mbps=link, seed=seed, enforce=enforce,
        apps=(AppSpec("voip", flows=10, rate_kbps=1000.0, pkt_bytes=200, port=5060),),
        attack=AttackSpec("DDoS", start=1.0, mbps=10 * link if attack_mbps is None else attack_mbps,
                          sources=4, pkt_bytes=1500, port=80),
    )
