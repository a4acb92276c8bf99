"""Virtual-time model of submit-to-commit latency.

Arrivals come in bursts of ``concurrency`` transactions at a fixed aggregate
rate. Each transaction pays a network/endorsement delay plus a serial
per-burst endorsement service time; the orderer cuts a block when it is full
or its oldest transaction has waited ``block_timeout``, then spends a
per-block ordering delay plus a per-transaction validation cost. Block
processing is pipelined but commits land in block order. Delays carry
uniform multiplicative jitter.
"""
from __future__ import annotations

import dataclasses
from typing import Sequence

import numpy as np


@dataclasses.dataclass(frozen=True)
class LatencyModel:
    endorse_delay: float = 0.040      # s per txn
    endorse_service: float = 0.0005   # s, serial within a burst
    order_delay: float = 0.050        # s per block
    validate_delay: float = 0.0001    # s per txn in a block
    jitter: float = 0.1               # +/- fraction

    @classmethod
    def zero(cls) -> "LatencyModel":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0)


@dataclasses.dataclass(frozen=True)
class LatencyRow:
    block_size: int
    concurrency: int
    n_txns: int
    mean_ms: float
    min_ms: float
    max_ms: float


def _simulate(block_size: int, concurrency: int, n_txns: int, arrival_rate: float,
              block_timeout: float, model: LatencyModel, seed: int) -> np.ndarray:
    ss = np.random.SeedSequence([seed, 0x1ED6E4])
    txn_rng, block_rng = (np.random.default_rng(s) for s in ss.spawn(2))
    j = model.jitter

    def jit(rng, size=None):
        return rng.uniform(1.0 - j, 1.0 + j, size) if j > 0 else np.ones(size or ())

    burst_gap = concurrency / arrival_rate
    k = np.arange(n_txns)
    arrive = (k // concurrency) * burst_gap
    pos = k % concurrency
    ready = arrive + model.endorse_delay * jit(txn_rng, n_txns) + (pos + 1) * model.endorse_service
    order = np.argsort(ready, kind="stable")
    ready_sorted = ready[order]

    commit = np.empty(n_txns)
    last_commit = 0.0
    i = 0
    while i < n_txns:
        first = ready_sorted[i]
        full_at = ready_sorted[i + block_size - 1] if i + block_size - 1 < n_txns else np.inf
        cut = min(full_at, first + block_timeout)
        if not np.isfinite(cut):
            cut = ready_sorted[-1]
        end = i
        while end < n_txns and end - i < block_size and ready_sorted[end] <= cut:
            end += 1
        done = cut + (model.order_delay + model.validate_delay * (end - i)) * float(jit(block_rng))
        done = max(done, last_commit)
        commit[order[i:end]] = done
        last_commit = done
        i = end
    return commit - arrive


def measure_txn_latency(block_sizes: Sequence[int], concurrency_levels: Sequence[int] = (1,), *,
                        arrival_rate: float = 1000.0, n_txns: int = 3000, block_timeout: float = 2.0,
                        model: LatencyModel | None = None, seed: int = 0) -> list[LatencyRow]:
    if not block_sizes or not concurrency_levels:
        raise ValueError("need at least one block size and one concurrency level")
    model = model or LatencyModel()
    rows = []
    for c in concurrency_levels:
        for b in block_sizes:
            if b < 1 or c < 1:
                raise ValueError("block size and concurrency must be positive")
            lat = _simulate(int(b), int(c), n_txns, arrival_rate, block_timeout, model, seed)
            rows.append(LatencyRow(int(b), int(c), n_txns, float(lat.mean() * 1e3),
                                   float(lat.min() * 1e3), float(lat.max() * 1e3)))
    return rows
