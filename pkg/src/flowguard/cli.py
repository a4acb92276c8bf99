"""Command-line entry point.

    flowguard train     --data flows.csv --model-out m.model --kind forest --seed 7
    flowguard evaluate  --data flows.csv [--model m.model | --folds 5] --out DIR
    flowguard simulate  --scenario ddos.yaml --seed 1 --enforce on --out DIR
    flowguard bench     [--flows 100000] [--what throughput|ledger|all] --out DIR
    flowguard ledger verify --ledger DIR/ledger.chain
    flowguard ledger query  --ledger DIR/ledger.chain --flow-id ID
    flowguard report    --events DIR/events.jsonl [--baseline B/events.jsonl] --out DIR

Precedence: values in --config override flags, flags override defaults.
Usage errors exit 2; data errors exit 1 and name the error class on stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .config import RunConfig, file_digest
from .errors import ConfigError, FlowGuardError, IoFailure

DEFAULTS_HELP = """\
defaults (all overridable via --config):
  flow idle timeout tau 5 s; alert threshold theta 0.5 (alert iff score > theta,
  ledger refuses confidence < theta); fusion soft, equal weights;
  forest 100 trees, depth 12, min leaf 2, sqrt(features) per split, bootstrap;
  boosted 50 stages, learning rate 0.3, depth 3, lambda 1;
  severity weights 0.2/0.4/0.2/0.2, QoS weights 0.4/0.2/0.3/0.1;
  severity thresholds high 0.85, medium 0.60;
  rule install latency 24.8 ms +/- 30% uniform; rate limit meter 1 Mbps;
  switch: strict priority, high queue shaped to 50% of link, 100-packet shared buffer;
  ledger: 2 peers, 2-of-2 endorsement, 10 txns or 2 s per block.
"""


def _flow_schema(spec):
    from .flow_engine import INSDN_SCHEMA, FlowSchema

    if spec is None:
        return None
    if spec == "insdn":
        return FlowSchema.from_dict(INSDN_SCHEMA)
    try:
        return FlowSchema.load(spec)
    except OSError as exc:
        raise IoFailure(f"cannot read schema {spec}: {exc}") from None


def _load_dataset(path, schema, max_rows=None, seed=0):
    from .flow_engine import load_flow_matrix
    from .ids import LabeledDataset

    if path is None:
        raise ConfigError("--data is required")
    fs = _flow_schema(schema)
    # a directory means every CSV inside it, in name order (InSDN ships several files)
    files = sorted(Path(path).glob("*.csv")) if Path(path).is_dir() else [path]
    if not files:
        raise IoFailure(f"no CSV files in {path}")
    try:
        parts = [load_flow_matrix(f, fs) for f in files]
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from None
    X = np.vstack([x for x, _ in parts])
    labels = [str(v) for _, y in parts for v in y]
    d = LabeledDataset.from_labels(X, labels)
    d.require_rows()
    if max_rows and len(d) > max_rows:
        idx = np.sort(np.random.default_rng(seed).choice(len(d), size=max_rows, replace=False))
        d = d.subset(idx)
    return d


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {out}: {exc}") from None
    return out


def _write_json(path: Path, doc) -> None:
    try:
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from None


def _fit(cfg: RunConfig, kind: str, d):
    from .ids import train_boosted, train_forest, train_native_ensemble

    if kind == "forest":
        return train_forest(d, cfg.trees, seed=cfg.seed)
    if kind == "boosted":
        return train_boosted(d, cfg.stages, seed=cfg.seed)
    return train_native_ensemble(d, trees=cfg.trees, stages=cfg.stages, seed=cfg.seed,
                                 weights=cfg.weights or None, mode=cfg.fusion, threshold=cfg.theta)


def _predict_labels(model, X) -> list[str]:
    if hasattr(model, "predict"):
        return list(model.predict(X)[0])
    P = model.predict_proba(X)
    return [model.classes[i] for i in P.argmax(axis=1)]


class _Labeler:
    """Gives any trained model the ``predict(X) -> labels`` shape cross_validate expects."""

    def __init__(self, model):
        self.model = model

    def predict(self, X):
        return _predict_labels(self.model, X)


# ---------------------------------------------------------------------------

def cmd_train(cfg: RunConfig, a) -> int:
    from .ids import save_model
    from .metrics import ConfusionMatrix

    d = _load_dataset(cfg.data, cfg.schema, a.max_rows, cfg.seed)
    t0 = time.perf_counter()
    model = _fit(cfg, a.kind, d)
    secs = time.perf_counter() - t0
    acc = ConfusionMatrix.from_labels(d.y, _predict_labels(model, d.X)).per_class_accuracy()
    h = cfg.content_hash(file_digest(cfg.data))
    out = Path(a.model_out or Path(cfg.out) / f"{a.kind}.model")
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, out, extra={"config_hash": h, "rows": len(d), "kind": a.kind})
    print(f"trained {a.kind}: {len(d)} rows, {len(d.classes)} classes "
          f"({', '.join(d.classes)}), training accuracy {acc:.2f}%, {secs:.1f} s")
    print(f"model written to {out} (config {h})")
    return 0


def cmd_evaluate(cfg: RunConfig, a) -> int:
    from .ids import cross_validate, load_model
    from .metrics import (ConfusionMatrix, MetricsReport, TooFewFlows, UndefinedFPR,
                          confusion_metrics, emit_report, segment_accuracies, drift_resilience)

    d = _load_dataset(cfg.data, cfg.schema, a.max_rows, cfg.seed)
    h = cfg.content_hash(file_digest(cfg.data), *(file_digest(cfg.model),) if cfg.model else ())
    report = MetricsReport(h)
    if a.folds:
        folds = cross_validate(d, a.folds, lambda tr: _Labeler(_fit(cfg, a.kind, tr)), seed=cfg.seed)
        accs = [f.accuracy for f in folds]
        fprs = [f.fpr for f in folds if f.fpr is not None]
        report.accuracy = float(np.mean(accs))
        report.fpr = float(np.mean(fprs)) if fprs else None
        report.extra["folds"] = [{"fold": f.fold, "accuracy_pct": f.accuracy, "fpr": f.fpr} for f in folds]
        for f in folds:
            print(f"fold {f.fold}: accuracy {f.accuracy:.2f}%  fpr "
                  + ("n/a" if f.fpr is None else f"{f.fpr:.4f}"))
    else:
        if not cfg.model:
            raise ConfigError("evaluate needs --model or --folds")
        model = load_model(cfg.model)
        t0 = time.perf_counter()
        pred = _predict_labels(model, d.X)
        secs = time.perf_counter() - t0
        cm = ConfusionMatrix.from_labels(d.y, pred)
        report.per_class = cm.per_class_rows()
        try:
            m = confusion_metrics(cm)
            report.accuracy, report.fpr = m["accuracy"], m["fpr"]
        except UndefinedFPR:
            report.accuracy = cm.accuracy()
        correct = [t == p for t, p in zip(d.y, pred)]
        try:
            report.segment_accuracy = segment_accuracies(correct)
            report.drift_resilience = drift_resilience(report.segment_accuracy)
        except (TooFewFlows, FlowGuardError):
            pass
        print(f"scored {len(d)} flows in {secs:.2f} s")
    emit_report(report, _out_dir(cfg.out))
    fpr = "n/a" if report.fpr is None else f"{report.fpr:.4f}"
    print(f"accuracy {report.accuracy:.2f}%  fpr {fpr}  -> {cfg.out}/report.json")
    return 0


def _detector(a, cfg: RunConfig):
    from .ids import Ensemble, EnsembleConfig, load_model
    from .netsim import NeverDetector, OracleDetector

    if cfg.model:
        m = load_model(cfg.model)
        if not isinstance(m, Ensemble):
            name = getattr(m, "identifier", "model")
            m = Ensemble([m], EnsembleConfig.uniform([name], cfg.fusion, cfg.theta))
        else:
            m.cfg = EnsembleConfig(m.cfg.members, m.cfg.mode, cfg.theta)
        return m
    det = NeverDetector() if a.detector == "never" else OracleDetector()
    det.threshold = cfg.theta
    return det


def run_simulation(cfg: RunConfig, scenario, detector, out: Path, with_baseline: bool = True):
    """Run one scenario (plus its no-attack baseline) and write every artifact under ``out``."""
    import warnings

    from .ledger import Ledger, SigningIdentity
    from .metrics import MetricsReport, emit_report, latency_metrics, qos_retention, ZeroBaseline
    from .netsim import OverCapacityConfig, run_closed_loop
    from .netsim.loop import CONTROLLER_ID

    def ledger_for(identity):
        lp = cfg.ledger
        return Ledger.simulated([identity], n_peers=lp.peers, required=lp.required, threshold=cfg.theta,
                                block_size=lp.block_size, block_timeout=lp.block_timeout)

    identity = SigningIdentity.generate(CONTROLLER_ID, seed=scenario.seed)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", OverCapacityConfig)
        res = run_closed_loop(scenario, detector, cfg.policy, ledger_for(identity), identity=identity)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    h = cfg.content_hash(json.dumps(scenario.to_dict(), sort_keys=True),
                         *(file_digest(cfg.model),) if cfg.model else ())
    res.log.write(out / "events.jsonl")
    res.ledger.save(out / "ledger.chain")
    lat = latency_metrics(res.log)
    report = MetricsReport(h, alert_latency=lat["alert_response"], reconfig=lat["reconfig"])
    report.extra["txn_commit_ms"] = vars(lat["txn"])
    report.extra["events"] = dict(sorted(res.log.counts().items()))
    report.extra["flows_scored"] = res.flows_scored
    report.extra["enforce"] = scenario.enforce
    if with_baseline and scenario.attack is not None:
        base_cfg = scenario.replace(attack=None)
        base = run_closed_loop(base_cfg, detector, cfg.policy, ledger_for(identity), identity=identity)
        report.qos_window = (0.0, scenario.duration)
        for app in sorted({a.name for a in scenario.apps}):
            try:
                report.qos_retention[app] = qos_retention(base.log, res.log, app, report.qos_window)
            except ZeroBaseline:
                pass
    emit_report(report, out)
    _write_json(out / "scenario.json", {"config_hash": h, "scenario": scenario.to_dict(),
                                        "run": {k: v for k, v in cfg.to_dict().items() if k != "out"}})
    return res, report


def cmd_simulate(cfg: RunConfig, a) -> int:
    from .netsim import ScenarioConfig, scripted_ddos

    if cfg.scenario:
        scenario = ScenarioConfig.load(cfg.scenario)
    else:
        scenario = scripted_ddos()
    kw = {"seed": cfg.seed}
    if a.enforce is not None:
        kw["enforce"] = a.enforce == "on"
    if a.duration is not None:
        kw["duration"] = a.duration
    scenario = scenario.replace(**kw)
    out = _out_dir(cfg.out)
    res, report = run_simulation(cfg, scenario, _detector(a, cfg), out)
    counts = res.log.counts()
    print(f"simulated {scenario.duration:g} s, seed {scenario.seed}, enforcement "
          f"{'on' if scenario.enforce else 'off'}: {counts.get('AlertRaised', 0)} alerts, "
          f"{counts.get('RuleInstalled', 0)} rules, {res.ledger.height - 1} blocks")
    for app, r in sorted(report.qos_retention.items()):
        print(f"  {app}: retention {r:.1f}% of baseline")
    print(f"artifacts in {out} (config {report.config_hash})")
    return 0


def cmd_bench(cfg: RunConfig, a) -> int:
    from .flow_engine import feature_matrix
    from .ids import EnsembleConfig, LabeledDataset, fuse_batch, train_forest
    from .ledger import measure_txn_latency
    from .metrics import MetricsReport, emit_report
    from .synth import synthetic_flows

    out = _out_dir(cfg.out)
    report = MetricsReport(cfg.content_hash(f"bench:{a.what}:{a.flows}"))
    if a.what in ("throughput", "all"):
        train = synthetic_flows(5000, seed=cfg.seed)
        d = LabeledDataset.from_labels(feature_matrix(train), [f.label for f in train])
        forest = train_forest(d, cfg.trees, seed=cfg.seed, max_depth=12)
        flows = synthetic_flows(a.flows, seed=cfg.seed + 1)
        fcfg = EnsembleConfig.uniform(["forest"], threshold=cfg.theta)
        t0 = time.perf_counter()
        X = feature_matrix(flows)
        labels, _ = fuse_batch([(forest.classes, forest.predict_proba(X))], fcfg)
        wall = time.perf_counter() - t0
        report.throughput = len(flows) / wall
        acc = float(np.mean([f.label == p for f, p in zip(flows, labels)])) * 100
        report.extra["bench_flows"] = len(flows)
        print(f"throughput: {len(flows)} flows in {wall:.2f} s = {report.throughput:.0f} flows/s "
              f"({cfg.trees} trees, depth 12, accuracy {acc:.1f}%)")
    if a.what in ("ledger", "all"):
        rows = measure_txn_latency((10, 50, 100, 300), (1, 4), seed=cfg.seed)
        report.txn_latency = rows
        for r in rows:
            print(f"ledger: block {r.block_size:4d} concurrency {r.concurrency}: mean {r.mean_ms:7.1f} ms")
    emit_report(report, out)
    return 0


def cmd_ledger(cfg: RunConfig, a) -> int:
    from .ledger import load_chain, query, verify_file

    if a.ledger_cmd == "verify":
        res = verify_file(a.ledger)
        if not res:
            print(f"TamperedAt: {res}", file=sys.stderr)
            return 1
        print(f"ledger ok: {res.blocks} blocks")
        return 0
    blocks = load_chain(a.ledger)
    recs = query(blocks, a.flow_id)
    for r in recs:
        print(json.dumps(vars(r), sort_keys=True))
    if not recs:
        print(f"no records for {a.flow_id}", file=sys.stderr)
    return 0


def cmd_report(cfg: RunConfig, a) -> int:
    from .metrics import MetricsReport, emit_report, latency_metrics, qos_retention
    from .netsim import EventLog

    log = EventLog.read(a.events)
    h = cfg.content_hash(file_digest(a.events), *(file_digest(a.baseline),) if a.baseline else ())
    lat = latency_metrics(log)
    report = MetricsReport(h, alert_latency=lat["alert_response"], reconfig=lat["reconfig"])
    report.extra["txn_commit_ms"] = vars(lat["txn"])
    if a.baseline:
        base = EventLog.read(a.baseline)
        apps = sorted({e["app"] for e in base.events if e["type"] == "PacketDelivered"} - {"attack"})
        window = (a.window[0], a.window[1]) if a.window else None
        report.qos_window = window
        for app in apps:
            report.qos_retention[app] = qos_retention(base, log, app, window)
    paths = emit_report(report, _out_dir(cfg.out))
    for p in paths:
        print(p)
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flowguard", description=__doc__.split("\n")[0],
                                epilog=DEFAULTS_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration file (YAML/JSON); overrides flags")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory (default: out)")
    common.add_argument("--theta", type=float, help="alert / ledger threshold (default 0.5)")
    sub = p.add_subparsers(dest="cmd", required=True)

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--data", help="flow CSV")
    data.add_argument("--schema", help="column mapping YAML, or 'insdn'")
    data.add_argument("--max-rows", type=int, help="stratification-free random subsample")
    data.add_argument("--kind", choices=("forest", "boosted", "ensemble"), default="ensemble")
    data.add_argument("--trees", type=int)
    data.add_argument("--stages", type=int)

    t = sub.add_parser("train", parents=[common, data], help="train a model from a flow CSV")
    t.add_argument("--model-out")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", parents=[common, data], help="score a model or cross-validate")
    e.add_argument("--model")
    e.add_argument("--folds", type=int)
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("simulate", parents=[common], help="run the closed-loop simulator")
    s.add_argument("--scenario", help="scenario file (default: built-in scripted DDoS)")
    s.add_argument("--enforce", choices=("on", "off"))
    s.add_argument("--model", help="trained model; default is the perfect-detection stub")
    s.add_argument("--detector", choices=("oracle", "never"), default="oracle")
    s.add_argument("--duration", type=float)
    s.set_defaults(func=cmd_simulate)

    b = sub.add_parser("bench", parents=[common], help="throughput and ledger latency benchmarks")
    b.add_argument("--flows", type=int, default=100_000)
    b.add_argument("--trees", type=int)
    b.add_argument("--what", choices=("throughput", "ledger", "all"), default="all")
    b.set_defaults(func=cmd_bench)

    lg = sub.add_parser("ledger", help="audit a ledger file")
    lsub = lg.add_subparsers(dest="ledger_cmd", required=True)
    v = lsub.add_parser("verify", parents=[common])
    v.add_argument("--ledger", required=True)
    v.set_defaults(func=cmd_ledger)
    q = lsub.add_parser("query", parents=[common])
    q.add_argument("--ledger", required=True)
    q.add_argument("--flow-id", required=True)
    q.set_defaults(func=cmd_ledger)

    r = sub.add_parser("report", parents=[common], help="metrics from an exported event log")
    r.add_argument("--events", required=True)
    r.add_argument("--baseline", help="no-attack event log for QoS retention")
    r.add_argument("--window", type=float, nargs=2, metavar=("T0", "T1"))
    r.set_defaults(func=cmd_report)
    return p


RUN_FIELDS = ("data", "schema", "model", "scenario", "out", "seed", "theta", "trees", "stages")


def resolve_config(a) -> RunConfig:
    flags = {k: getattr(a, k, None) for k in RUN_FIELDS}
    cfg = RunConfig().merged(**flags)
    if getattr(a, "config", None):
        doc = RunConfig.load(a.config).to_dict()
        import yaml
        raw = yaml.safe_load(Path(a.config).read_text()) or {}
        cfg = RunConfig.from_dict({**cfg.to_dict(), **{k: doc[k] for k in raw}})
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    a = parser.parse_args(argv)
    try:
        cfg = resolve_config(a)
        return a.func(cfg, a)
    except FlowGuardError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
