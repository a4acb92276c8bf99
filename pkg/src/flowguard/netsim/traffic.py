"""Deterministic synthetic traffic: constant-rate benign flows plus a scripted attack.

Benign and attack packets come from independent RNG streams, so a
zero-intensity attack leaves the benign trace byte-identical.
"""
from __future__ import annotations

import dataclasses
import warnings

import numpy as np

from ..flow_engine import FlowKey, PacketRecord, Protocol, TCP_SYN, flow_key
from ..labels import NORMAL
from .scenario import AttackSpec, ScenarioConfig

TCP_ACK = 0x10
ATTACK_APP = "attack"


class OverCapacityConfig(UserWarning):
    """Offered load exceeds three times the link capacity."""


@dataclasses.dataclass
class Trace:
    packets: list[PacketRecord]
    app: list[str]                     # per packet
    labels: dict[FlowKey, str]         # ground truth per flow
    app_of: dict[FlowKey, str]

    def total_bytes(self, app: str | None = None) -> int:
        return sum(p.length for p, a in zip(self.packets, self.app) if app is None or a == app)


def _flow_packets(rng, t0: float, t1: float, rate_bps: float, size: int):
    """Timestamps of a constant-rate stream with random phase and bounded jitter."""
    if rate_bps <= 0 or t1 <= t0:
        return np.empty(0)
    gap = size * 8.0 / rate_bps
    phase = rng.uniform(0.0, gap)
    n = int(np.floor((t1 - t0 - phase) / gap)) + 1
    if n <= 0:
        return np.empty(0)
    ts = t0 + phase + gap * np.arange(n)
    ts = ts + rng.uniform(-0.25 * gap, 0.25 * gap, size=n)
    ts = np.clip(ts, t0, np.nextafter(t1, t0))
    return np.maximum.accumulate(ts)


def _benign(cfg: ScenarioConfig, rng) -> list[tuple]:
    rows = []
    for ai, app in enumerate(cfg.apps):
        server = f"10.0.0.{ai + 1}"
        proto = Protocol.parse(app.protocol)
        per_flow = app.rate_kbps * 1000.0 / app.flows
        for fi in range(app.flows):
            client = f"10.0.{1 + (ai * 256 + fi) // 250}.{(ai * 256 + fi) % 250 + 1}"
            cport = 20000 + ai * 1000 + fi
            ts = _flow_packets(rng, 0.0, cfg.duration, per_flow, app.pkt_bytes)
            for k, t in enumerate(ts):
                reply = app.reply_every > 0 and k % app.reply_every == app.reply_every - 1
                flags = None
                if proto is Protocol.TCP:
                    flags = TCP_SYN if k == 0 else TCP_ACK
                if reply:
                    p = PacketRecord(float(t), server, client, app.port, cport, proto, app.pkt_bytes, flags)
                else:
                    p = PacketRecord(float(t), client, server, cport, app.port, proto, app.pkt_bytes, flags)
                rows.append((p, app.name, NORMAL))
    return rows


def _attack(cfg: ScenarioConfig, a: AttackSpec, rng) -> list[tuple]:
    if a.mbps <= 0 or a.start >= cfg.duration:
        return []
    victim = "10.0.0.1"
    proto = Protocol.parse(a.protocol)
    flags = TCP_SYN if proto is Protocol.TCP else None
    rows = []
    kind = a.type
    if kind in ("DDoS", "DoS"):
        sources = a.sources if kind == "DDoS" else 1
        for s in range(sources):
            src = f"10.0.66.{s + 1}"
            ts = _flow_packets(rng, a.start, cfg.duration, a.mbps * 1e6 / sources, a.pkt_bytes)
            for t in ts:
                rows.append((PacketRecord(float(t), src, victim, 40000 + s, a.port, proto, a.pkt_bytes, flags),
                             ATTACK_APP, kind))
    elif kind == "Probe":
        ts = _flow_packets(rng, a.start, cfg.duration, a.mbps * 1e6, a.pkt_bytes)
        for k, t in enumerate(ts):
            rows.append((PacketRecord(float(t), "10.0.66.200", victim, 45000, 1 + k % 1024, proto,
                                      a.pkt_bytes, flags), ATTACK_APP, kind))
    else:
        raise ValueError(f"unsupported attack type {kind!r}")
    return rows


def offered_mbps(cfg: ScenarioConfig) -> float:
    benign = sum(a.rate_kbps for a in cfg.apps) / 1000.0
    return benign + (cfg.attack.mbps if cfg.attack else 0.0)


def generate_traffic(cfg: ScenarioConfig) -> Trace:
    if offered_mbps(cfg) > 3 * cfg.link_mbps:
        warnings.warn(f"offered load {offered_mbps(cfg):.1f} Mbps exceeds 3x the "
                      f"{cfg.link_mbps} Mbps link", OverCapacityConfig, stacklevel=2)
    benign_ss, attack_ss = np.random.SeedSequence([cfg.seed, 0x7EAF]).spawn(2)
    rows = _benign(cfg, np.random.default_rng(benign_ss))
    if cfg.attack is not None:
        rows += _attack(cfg, cfg.attack, np.random.default_rng(attack_ss))
    rows.sort(key=lambda r: r[0].ts)  # stable: equal timestamps keep generation order
    labels: dict[FlowKey, str] = {}
    app_of: dict[FlowKey, str] = {}
    for p, app, lab in rows:
        k = flow_key(p)
        labels.setdefault(k, lab)
        app_of.setdefault(k, app)
    return Trace([r[0] for r in rows], [r[1] for r in rows], labels, app_of)
