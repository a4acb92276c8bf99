import csv
import random

import pytest

from flowguard.errors import InvalidInput, IoFailure, OrphanEvent, TooFewFlows, UndefinedFPR, ZeroBaseline
from flowguard.ledger import measure_txn_latency
from flowguard.metrics import (
    ConfusionMatrix,
    MetricsReport,
    StatBlock,
    confusion_metrics,
    drift_resilience,
    emit_report,
    latency_metrics,
    load_report,
    qos_retention,
    segment_accuracies,
    throughput_and_drift,
)
from flowguard.netsim import EventLog


def delivered(log, ts, app, n):
    log.add("PacketDelivered", ts, flow="f", app=app, bytes=n, queue="high")


def test_confusion_examples():
    assert confusion_metrics(ConfusionMatrix(tp=9, tn=90, fp=1, fn=0))["accuracy"] == pytest.approx(99.0)
    assert confusion_metrics(ConfusionMatrix(tp=0, tn=98, fp=2, fn=0))["fpr"] == pytest.approx(0.02)
    perfect = confusion_metrics(ConfusionMatrix.from_labels(["Normal", "DDoS", "Probe"], ["Normal", "DDoS", "Probe"]))
    assert perfect == {"accuracy": 100.0, "fpr": 0.0}
    with pytest.raises(UndefinedFPR):
        confusion_metrics(ConfusionMatrix(tp=3, fn=1))
    with pytest.raises(InvalidInput):
        ConfusionMatrix().accuracy()


def test_confusion_from_labels_and_invariants():
    rng = random.Random(2)
    labels = ["Normal", "DDoS", "Probe", "Web"]
    for _ in range(200):
        n = rng.randint(1, 60)
        y = [rng.choice(labels) for _ in range(n)]
        p = [rng.choice(labels) for _ in range(n)]
        cm = ConfusionMatrix.from_labels(y, p)
        tp = sum(a != "Normal" and b != "Normal" for a, b in zip(y, p))
        tn = sum(a == "Normal" and b == "Normal" for a, b in zip(y, p))
        assert (cm.tp, cm.tn, cm.total) == (tp, tn, n)
        assert cm.accuracy() + cm.error_rate() == pytest.approx(100.0, abs=1e-9)
        assert cm.per_class_accuracy() == pytest.approx(100.0 * sum(a == b for a, b in zip(y, p)) / n)
        if cm.fp + cm.tn:
            shifted = ConfusionMatrix(cm.tp + 5, cm.tn, cm.fp, cm.fn + 3)
            assert confusion_metrics(shifted)["fpr"] == confusion_metrics(cm)["fpr"]


def test_latency_examples():
    log = EventLog()
    log.add("AlertRaised", 1.0, alert_id="a1", flow="x")
    log.add("RuleInstalled", 1.0423, requested=1.0173, alert_id="a1", flow="x")
    m = latency_metrics(log.finalize())
    assert m["alert_response"].mean == pytest.approx(42.3)
    assert m["reconfig"].mean == pytest.approx(25.0)
    assert m["txn"] == StatBlock(0, None, None, None)

    zero = EventLog()
    zero.add("AlertRaised", 2.0, flow="y")
    zero.add("RuleInstalled", 2.0, requested=2.0, flow="y")
    zero.add("TxnSubmitted", 2.0, id="t")
    zero.add("TxnCommitted", 2.0, id="t")
    m = latency_metrics(zero.finalize())
    assert all(b.mean == 0.0 and b.max == 0.0 for b in m.values())


def test_latency_constant_gaps():
    log = EventLog()
    for k in range(20):
        t = 0.5 * k
        log.add("AlertRaised", t, alert_id=f"a{k}", flow=f"f{k}")
        log.add("RuleInstalled", t + 0.030, requested=t + 0.005, alert_id=f"a{k}", flow=f"f{k}")
        log.add("TxnSubmitted", t, id=f"t{k}")
        log.add("TxnCommitted", t + 0.120, id=f"t{k}")
    m = latency_metrics(log.finalize())
    assert m["alert_response"].mean == pytest.approx(30.0)
    assert m["reconfig"].mean == pytest.approx(25.0)
    assert m["txn"].mean == pytest.approx(120.0) and m["txn"].n == 20


def test_orphans():
    log = EventLog()
    log.add("RuleInstalled", 1.0, requested=0.9, flow="x")
    with pytest.raises(OrphanEvent):
        latency_metrics(log.finalize())
    log = EventLog()
    log.add("TxnCommitted", 1.0, id="nope")
    with pytest.raises(OrphanEvent):
        latency_metrics(log.finalize())


def test_qos_retention_examples():
    base, attack, empty = EventLog(), EventLog(), EventLog()
    delivered(base, 1.0, "video", 100)
    delivered(attack, 1.0, "video", 94.3)
    delivered(empty, 1.0, "bulk", 50)
    assert qos_retention(base, attack, "video") == pytest.approx(94.3)
    assert qos_retention(base, base, "video") == 100.0
    assert qos_retention(base, empty, "video") == 0.0
    with pytest.raises(ZeroBaseline):
        qos_retention(empty, base, "video")
    delivered(attack, 9.0, "video", 1000)
    assert qos_retention(base, attack, "video", window=(0.0, 5.0)) == pytest.approx(94.3)


def test_throughput_and_drift_examples():
    out = throughput_and_drift([True] * 46_200, 10.0)
    assert out["flows_per_sec"] == pytest.approx(4620.0)
    assert out["drift_resilience"] == 100.0
    assert drift_resilience([98, 95, 93, 94]) == pytest.approx(100 * 93 / 98)
    assert round(drift_resilience([0.98, 0.95, 0.93, 0.94]), 1) == 94.9
    seq = [True] * 40 + [True] * 30 + [False] * 10 + [True] * 80
    assert segment_accuracies(seq) == [100.0, 75.0, 100.0, 100.0]
    pairs = [("DDoS", "DDoS")] * 40
    assert throughput_and_drift(pairs, 2.0)["flows_per_sec"] == 20.0
    with pytest.raises(TooFewFlows):
        throughput_and_drift([True] * 39, 1.0)
    with pytest.raises(InvalidInput):
        throughput_and_drift([True] * 40, 0.0)


def test_drift_bounded_when_first_segment_is_best():
    rng = random.Random(8)
    for _ in range(500):
        acc = [rng.uniform(1, 100) for _ in range(4)]
        acc.sort(reverse=True)
        assert drift_resilience(acc) <= 100.0
        shuffled = acc[:]
        rng.shuffle(shuffled)
        assert min(shuffled) <= min(acc)


def full_report():
    cm = ConfusionMatrix.from_labels(["Normal", "DDoS", "DDoS", "Normal"], ["Normal", "DDoS", "Normal", "Normal"])
    return MetricsReport(
        config_hash="0123456789abcdef", accuracy=cm.accuracy(), fpr=confusion_metrics(cm)["fpr"],
        alert_latency=StatBlock.of([40.0, 45.0]), reconfig=StatBlock.of([24.0, 25.0]),
        txn_latency=measure_txn_latency([10, 50], n_txns=200), qos_retention={"voip": 94.3, "video": 88.0},
        qos_window=(0.0, 10.0), throughput=4620.0, drift_resilience=95.0,
        segment_accuracy=[98.0, 96.0, 95.0, 93.1], per_class=cm.per_class_rows(), extra={"note": "x"})


def test_report_roundtrip_and_hash_on_every_row(tmp_path):
    rep = full_report()
    paths = emit_report(rep, tmp_path)
    names = {p.name for p in paths}
    assert {"report.json", "latency.csv", "txn_latency.csv", "qos_retention.csv", "drift.csv",
            "summary.csv", "per_class.csv"} <= names
    back = load_report(tmp_path)
    assert back.to_dict() == rep.to_dict()
    for p in paths:
        if p.suffix == ".csv":
            rows = list(csv.DictReader(p.open()))
            assert rows and all(r["config_hash"] == rep.config_hash for r in rows)


def test_empty_txn_table_and_determinism(tmp_path):
    rep = MetricsReport(config_hash="ffff")
    emit_report(rep, tmp_path / "a")
    d = load_report(tmp_path / "a").to_dict()
    assert d["txn_latency"] == {"rows": [], "empty": True}
    emit_report(full_report(), tmp_path / "b")
    emit_report(full_report(), tmp_path / "c")
    for name in ("report.json", "latency.csv", "txn_latency.csv", "summary.csv"):
        assert (tmp_path / "b" / name).read_bytes() == (tmp_path / "c" / name).read_bytes()
    with pytest.raises(IoFailure):
        load_report(tmp_path / "missing")
