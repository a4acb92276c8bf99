"""Evaluation metrics over predictions and simulation event logs, plus report files.

Units: accuracy and retention are percentages, FPR is a fraction, latencies
are milliseconds, throughput is flows per wall-clock second.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from collections import Counter
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (InvalidInput, IoFailure, OrphanEvent, TooFewFlows, UndefinedFPR,
                     ZeroBaseline)
from .labels import NORMAL

__all__ = [
    "ConfusionMatrix", "confusion_metrics", "StatBlock", "latency_metrics", "delivered_bytes",
    "qos_retention", "segment_accuracies", "drift_resilience", "throughput_and_drift",
    "MetricsReport", "emit_report", "load_report", "UndefinedFPR", "OrphanEvent",
    "ZeroBaseline", "TooFewFlows",
]

DRIFT_NOTE = ("drift resilience = 100 x (lowest segment accuracy) / (first segment accuracy) "
              "over equal-count temporal segments; artifact definition")


# ---------------------------------------------------------------------------
# classification

@dataclasses.dataclass
class ConfusionMatrix:
    """Binary counts (any non-Normal label is positive) plus the full table."""

    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0
    table: dict = dataclasses.field(default_factory=dict)   # (true, pred) -> count

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise InvalidInput("confusion counts must be non-negative")

    @classmethod
    def from_labels(cls, y_true: Iterable, y_pred: Iterable) -> "ConfusionMatrix":
        y_true = [str(v) for v in y_true]
        y_pred = [str(v) for v in y_pred]
        if len(y_true) != len(y_pred):
            raise InvalidInput(f"{len(y_true)} true labels vs {len(y_pred)} predictions")
        table = Counter(zip(y_true, y_pred))
        cm = cls(table=dict(sorted(table.items())))
        for (t, p), n in table.items():
            pos_t, pos_p = t != NORMAL, p != NORMAL
            if pos_t and pos_p:
                cm.tp += n
            elif pos_t:
                cm.fn += n
            elif pos_p:
                cm.fp += n
            else:
                cm.tn += n
        return cm

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def accuracy(self) -> float:
        if self.total == 0:
            raise InvalidInput("empty confusion matrix")
        return (self.tp + self.tn) / self.total * 100.0

    def error_rate(self) -> float:
        if self.total == 0:
            raise InvalidInput("empty confusion matrix")
        return (self.fp + self.fn) / self.total * 100.0

    def per_class_accuracy(self) -> float:
        n = sum(self.table.values())
        if n == 0:
            raise InvalidInput("no per-class counts")
        return sum(v for (t, p), v in self.table.items() if t == p) / n * 100.0

    def per_class_rows(self) -> list[dict]:
        return [{"true": t, "pred": p, "count": n} for (t, p), n in sorted(self.table.items())]


def confusion_metrics(cm: ConfusionMatrix) -> dict[str, float]:
    if cm.fp + cm.tn == 0:
        raise UndefinedFPR("no negative (Normal) rows: FP + TN = 0")
    return {"accuracy": cm.accuracy(), "fpr": cm.fp / (cm.fp + cm.tn)}


# ---------------------------------------------------------------------------
# latency

@dataclasses.dataclass(frozen=True)
class StatBlock:
    n: int
    mean: float | None
    min: float | None
    max: float | None

    @classmethod
    def of(cls, values_ms: Sequence[float]) -> "StatBlock":
        if len(values_ms) == 0:
            return cls(0, None, None, None)
        a = np.asarray(values_ms, dtype=np.float64)
        return cls(len(a), float(a.mean()), float(a.min()), float(a.max()))


def _events(log) -> list[dict]:
    return log.events if hasattr(log, "events") else list(log)


def latency_metrics(log) -> dict[str, StatBlock]:
    """alert_response: rule applied - alert raised; reconfig: applied - requested;
    txn: committed - submitted. Each in ms."""
    alerts_by_id: dict[str, dict] = {}
    alerts_by_flow: dict[str, list[dict]] = {}
    submitted: dict[str, float] = {}
    response, reconfig, txn = [], [], []
    for e in _events(log):
        kind = e["type"]
        if kind == "AlertRaised":
            if "alert_id" in e:
                alerts_by_id[e["alert_id"]] = e
            alerts_by_flow.setdefault(e["flow"], []).append(e)
        elif kind == "RuleInstalled":
            if e.get("alert_id") is not None:
                a = alerts_by_id.get(e["alert_id"])
            else:
                prior = [a for a in alerts_by_flow.get(e.get("flow"), ()) if a["ts"] <= e["requested"]]
                a = prior[-1] if prior else None
            if a is None or a["ts"] > e["requested"]:
                raise OrphanEvent(f"RuleInstalled at {e['ts']} for {e.get('flow')} has no preceding alert")
            response.append((e["ts"] - a["ts"]) * 1000.0)
            reconfig.append((e["ts"] - e["requested"]) * 1000.0)
        elif kind == "TxnSubmitted":
            submitted[e["id"]] = e["ts"]
        elif kind == "TxnCommitted":
            if e["id"] not in submitted:
                raise OrphanEvent(f"TxnCommitted {e['id'][:16]} was never submitted")
            txn.append((e["ts"] - submitted[e["id"]]) * 1000.0)
    return {"alert_response": StatBlock.of(response), "reconfig": StatBlock.of(reconfig),
            "txn": StatBlock.of(txn)}


# ---------------------------------------------------------------------------
# QoS retention

def delivered_bytes(log, app: str, window: tuple[float, float] | None = None) -> int:
    t0, t1 = window if window is not None else (-math.inf, math.inf)
    return sum(e["bytes"] for e in _events(log)
               if e["type"] == "PacketDelivered" and e.get("app") == app and t0 <= e["ts"] < t1)


def qos_retention(baseline, attack, app: str, window: tuple[float, float] | None = None) -> float:
    """Attack-run delivered rate of ``app`` as a percentage of the baseline run's.

    Both rates are measured over the same ``window`` (default: whole runs),
    so the ratio of rates equals the ratio of delivered bytes.
    """
    base = delivered_bytes(baseline, app, window)
    if base == 0:
        raise ZeroBaseline(f"baseline delivered no {app!r} traffic")
    return delivered_bytes(attack, app, window) / base * 100.0


# ---------------------------------------------------------------------------
# throughput and drift

def segment_accuracies(correct: Sequence[bool], segments: int = 4) -> list[float]:
    correct = np.asarray(correct, dtype=bool)
    if segments < 1:
        raise InvalidInput("need at least one segment")
    if len(correct) < segments * 10:
        raise TooFewFlows(f"{len(correct)} flows for {segments} segments (need {segments * 10})")
    return [float(s.mean() * 100.0) for s in np.array_split(correct, segments)]


def drift_resilience(seg_acc: Sequence[float]) -> float:
    if not seg_acc or seg_acc[0] <= 0:
        raise ZeroBaseline("first segment accuracy is zero")
    return 100.0 * min(seg_acc) / seg_acc[0]


def throughput_and_drift(results, wallclock: float, segments: int = 4) -> dict:
    """``results`` is a time-ordered sequence of per-flow correctness flags or
    of (true, predicted) pairs; ``wallclock`` covers the detection pipeline only."""
    if not wallclock > 0:
        raise InvalidInput("wall-clock time must be positive")
    results = list(results)
    if results and isinstance(results[0], tuple):
        results = [str(t) == str(p) for t, p in results]
    seg = segment_accuracies(results, segments)
    return {"flows_per_sec": len(results) / wallclock, "drift_resilience": drift_resilience(seg),
            "segment_accuracy": seg}


# ---------------------------------------------------------------------------
# report

def _block(s: StatBlock | dict | None):
    if s is None:
        return None
    return dataclasses.asdict(s) if isinstance(s, StatBlock) else dict(s)


@dataclasses.dataclass
class MetricsReport:
    config_hash: str
    accuracy: float | None = None
    fpr: float | None = None
    alert_latency: StatBlock | None = None
    reconfig: StatBlock | None = None
    txn_latency: list = dataclasses.field(default_factory=list)   # LatencyRow-like dicts
    qos_retention: dict = dataclasses.field(default_factory=dict)  # app -> percent
    qos_window: tuple | None = None
    throughput: float | None = None
    drift_resilience: float | None = None
    segment_accuracy: list = dataclasses.field(default_factory=list)
    per_class: list = dataclasses.field(default_factory=list)
    extra: dict = dataclasses.field(default_factory=dict)

    def to_dict(self) -> dict:
        rows = [dataclasses.asdict(r) if dataclasses.is_dataclass(r) else dict(r) for r in self.txn_latency]
        return {
            "config_hash": self.config_hash,
            "accuracy_pct": self.accuracy,
            "fpr": self.fpr,
            "alert_latency_ms": _block(self.alert_latency),
            "reconfig_ms": _block(self.reconfig),
            "txn_latency": {"rows": rows, "empty": not rows},
            "qos_retention_pct": dict(sorted(self.qos_retention.items())),
            "qos_window_s": list(self.qos_window) if self.qos_window else None,
            "throughput_flows_per_sec": self.throughput,
            "drift": {"resilience_pct": self.drift_resilience, "segment_accuracy_pct": list(self.segment_accuracy),
                      "definition": DRIFT_NOTE},
            "per_class": list(self.per_class),
            "extra": self.extra,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        def blk(x):
            return StatBlock(**x) if x else None

        return cls(
            config_hash=d["config_hash"],
            accuracy=d.get("accuracy_pct"),
            fpr=d.get("fpr"),
            alert_latency=blk(d.get("alert_latency_ms")),
            reconfig=blk(d.get("reconfig_ms")),
            txn_latency=list(d.get("txn_latency", {}).get("rows", [])),
            qos_retention=dict(d.get("qos_retention_pct", {})),
            qos_window=tuple(d["qos_window_s"]) if d.get("qos_window_s") else None,
            throughput=d.get("throughput_flows_per_sec"),
            drift_resilience=d.get("drift", {}).get("resilience_pct"),
            segment_accuracy=list(d.get("drift", {}).get("segment_accuracy_pct", [])),
            per_class=list(d.get("per_class", [])),
            extra=dict(d.get("extra", {})),
        )


def _csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def emit_report(report: MetricsReport, out_dir) -> list[Path]:
    """Write report.json and one CSV series per metric family.

    Every CSV row carries the config hash in its last column.
    """
    h = report.config_hash
    d = report.to_dict()
    files = {"report.json": json.dumps(d, indent=2, sort_keys=True) + "\n"}
    lat = []
    for name, blk in (("alert_response", report.alert_latency), ("reconfig", report.reconfig)):
        if blk is not None:
            lat += [(name, stat, getattr(blk, stat), h) for stat in ("n", "mean", "min", "max")]
    files["latency.csv"] = _csv(("metric", "stat", "value_ms", "config_hash"), lat)
    files["txn_latency.csv"] = _csv(
        ("block_size", "concurrency", "n_txns", "mean_ms", "min_ms", "max_ms", "config_hash"),
        [(r["block_size"], r["concurrency"], r["n_txns"], r["mean_ms"], r["min_ms"], r["max_ms"], h)
         for r in d["txn_latency"]["rows"]])
    files["qos_retention.csv"] = _csv(("app", "retention_pct", "config_hash"),
                                      [(a, v, h) for a, v in d["qos_retention_pct"].items()])
    files["drift.csv"] = _csv(("segment", "accuracy_pct", "config_hash"),
                              [(i, v, h) for i, v in enumerate(report.segment_accuracy)])
    files["summary.csv"] = _csv(("metric", "value", "config_hash"), [
        ("accuracy_pct", report.accuracy, h), ("fpr", report.fpr, h),
        ("throughput_flows_per_sec", report.throughput, h),
        ("drift_resilience_pct", report.drift_resilience, h)])
    if report.per_class:
        files["per_class.csv"] = _csv(("true", "pred", "count", "config_hash"),
                                      [(r["true"], r["pred"], r["count"], h) for r in report.per_class])
    out = Path(out_dir)
    paths = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        for name, text in files.items():
            p = out / name
            p.write_text(text)
            paths.append(p)
    except OSError as exc:
        raise IoFailure(f"cannot write report to {out}: {exc}") from None
    return paths


def load_report(out_dir) -> MetricsReport:
    try:
        return MetricsReport.from_dict(json.loads((Path(out_dir) / "report.json").read_text()))
    except (OSError, ValueError, KeyError) as exc:
        raise IoFailure(f"cannot read report from {out_dir}: {exc}") from None
