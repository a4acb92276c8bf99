"""Labeled synthetic flows for benchmarks, demos and tests.

Each class has its own packet-count, size, gap and port behaviour so the
classes are learnable but overlap a little.
"""
from __future__ import annotations

import numpy as np

from .flow_engine import TCP_FIN, TCP_RST, TCP_SYN, FlowState, PacketRecord, Protocol, flow_key

# class: (mean packets, size range, mean gap s, ports per flow, syn share, rst share)
PROFILES = {
    "Normal": (12, (60, 1400), 0.05, 1, 0.05, 0.0),
    "DDoS": (30, (40, 120), 0.0005, 1, 0.9, 0.0),
    "DoS": (25, (500, 1500), 0.001, 1, 0.5, 0.1),
    "Probe": (20, (40, 80), 0.002, 20, 0.9, 0.5),
    "BruteForce": (15, (80, 300), 0.2, 1, 0.2, 0.05),
    "Web": (10, (300, 1500), 0.08, 1, 0.1, 0.0),
}


def flow_packets(rng: np.random.Generator, label: str, t0: float = 0.0, idx: int = 0) -> list[PacketRecord]:
    mean_n, (lo, hi), gap, ports, syn, rst = PROFILES[label]
    n = max(1, int(rng.poisson(mean_n)))
    src = f"10.{1 + idx // 65000 % 200}.{idx // 250 % 250}.{idx % 250 + 1}"
    dst = f"10.0.0.{1 + idx % 7}"
    sport = int(rng.integers(1024, 65535))
    base_port = {"BruteForce": 22, "Web": 80, "Normal": 443}.get(label, int(rng.integers(1, 1024)))
    ts = t0 + np.cumsum(rng.exponential(gap, size=n))
    sizes = rng.integers(lo, hi + 1, size=n)
    dports = base_port + (rng.integers(0, ports, size=n) if ports > 1 else np.zeros(n, dtype=int))
    back = rng.random(n) < (0.4 if label in ("Normal", "Web", "BruteForce") else 0.05)
    pkts = []
    for k in range(n):
        flags = 0
        if rng.random() < syn:
            flags |= TCP_SYN
        if rng.random() < rst:
            flags |= TCP_RST
        if k == n - 1 and label in ("Normal", "Web"):
            flags |= TCP_FIN
        if back[k] and k > 0:
            p = PacketRecord(float(ts[k]), dst, src, int(base_port), sport, Protocol.TCP, int(sizes[k]), flags)
        else:
            p = PacketRecord(float(ts[k]), src, dst, sport, int(dports[k]), Protocol.TCP, int(sizes[k]), flags)
        pkts.append(p)
    return pkts


def build_flow(packets: list[PacketRecord], label: str | None = None) -> FlowState:
    f = FlowState.start(flow_key(packets[0]), packets[0], label)
    for p in packets:
        f.add(p)
    return f


def synthetic_flows(n: int, seed: int = 0, classes=None, mix=None) -> list[FlowState]:
    """``n`` flows with ground-truth labels; default mix is 60% Normal."""
    classes = list(classes or PROFILES)
    if mix is None:
        mix = [0.6 if c == "Normal" else 0.4 / (len(classes) - 1) for c in classes] if len(classes) > 1 else [1.0]
    mix = np.asarray(mix, dtype=np.float64) / np.sum(mix)
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(classes), size=n, p=mix)
    out = []
    for i, c in enumerate(picks):
        label = classes[c]
        out.append(build_flow(flow_packets(rng, label, t0=i * 0.001, idx=i), label))
    return out
