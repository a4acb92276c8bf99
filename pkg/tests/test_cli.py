import json
import subprocess
import sys

import pandas as pd
import pytest

from flowguard.cli import main
from flowguard.flow_engine import FEATURE_NAMES, feature_matrix
from flowguard.ledger import load_chain, verify_file
from flowguard.synth import synthetic_flows

SHORT = ["--duration", "2.5"]


@pytest.fixture(scope="module")
def flows_csv(tmp_path_factory):
    flows = synthetic_flows(600, seed=3)
    df = pd.DataFrame(feature_matrix(flows), columns=FEATURE_NAMES)
    df["label"] = [f.label for f in flows]
    p = tmp_path_factory.mktemp("data") / "flows.csv"
    df.to_csv(p, index=False)
    return p


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--seed", "1", "--enforce", "on", "--out", str(out), *SHORT]) == 0
    return out


def test_train_writes_model_and_summary(flows_csv, tmp_path, capsys):
    model = tmp_path / "f.model"
    rc = main(["train", "--data", str(flows_csv), "--model-out", str(model), "--kind", "forest",
               "--trees", "10", "--seed", "7"])
    assert rc == 0 and model.exists()
    assert "training accuracy" in capsys.readouterr().out
    rc = main(["evaluate", "--data", str(flows_csv), "--model", str(model), "--out", str(tmp_path / "ev")])
    assert rc == 0
    rep = json.loads((tmp_path / "ev" / "report.json").read_text())
    assert rep["accuracy_pct"] > 90


def test_cross_validation_subcommand(flows_csv, tmp_path):
    rc = main(["evaluate", "--data", str(flows_csv), "--folds", "3", "--kind", "forest", "--trees", "5",
               "--out", str(tmp_path)])
    assert rc == 0
    assert json.loads((tmp_path / "report.json").read_text())["accuracy_pct"] > 85


def test_simulate_is_deterministic(sim_dir, tmp_path):
    again = tmp_path / "again"
    assert main(["simulate", "--seed", "1", "--enforce", "on", "--out", str(again), *SHORT]) == 0
    for name in ("events.jsonl", "ledger.chain", "report.json", "latency.csv", "scenario.json"):
        assert (sim_dir / name).read_bytes() == (again / name).read_bytes(), name
    rep = json.loads((sim_dir / "report.json").read_text())
    assert rep["qos_retention_pct"]["voip"] > 60


def test_ledger_verify_and_query(sim_dir, tmp_path, capsys):
    chain = sim_dir / "ledger.chain"
    assert main(["ledger", "verify", "--ledger", str(chain)]) == 0
    flow = load_chain(chain)[1].transactions[0].fields()["flow_id"]
    capsys.readouterr()
    assert main(["ledger", "query", "--ledger", str(chain), "--flow-id", flow]) == 0
    rows = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
    assert rows and set(rows[0]) == {"label", "confidence", "timestamp", "action"}

    data = bytearray(chain.read_bytes())
    data[len(data) // 2] ^= 0x10
    bad = tmp_path / "bad.chain"
    bad.write_bytes(bytes(data))
    assert not verify_file(bad)
    assert main(["ledger", "verify", "--ledger", str(bad)]) == 1
    assert "TamperedAt" in capsys.readouterr().err


def test_report_subcommand(sim_dir, tmp_path):
    base = tmp_path / "base"
    assert main(["simulate", "--seed", "1", "--scenario", str(_no_attack(tmp_path)), "--out", str(base),
                 *SHORT]) == 0
    out = tmp_path / "rep"
    assert main(["report", "--events", str(sim_dir / "events.jsonl"), "--baseline",
                 str(base / "events.jsonl"), "--window", "0", "2.5", "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert 60 < rep["qos_retention_pct"]["voip"] <= 101
    assert rep["qos_window_s"] == [0.0, 2.5]


def _no_attack(tmp_path):
    p = tmp_path / "benign.yaml"
    p.write_text("duration: 2.5\nlink_mbps: 10\napps:\n  - {name: voip, flows: 10, rate_kbps: 1000}\n")
    return p


def test_config_file_overrides_flags(tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("seed: 1\n")
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", str(cfg), "--seed", "9", "--out", str(a), *SHORT]) == 0
    assert main(["simulate", "--seed", "1", "--out", str(b), *SHORT]) == 0
    assert json.loads((a / "scenario.json").read_text())["scenario"]["seed"] == 1
    assert (a / "events.jsonl").read_bytes() == (b / "events.jsonl").read_bytes()


def test_error_exit_codes(tmp_path, capsys):
    assert main(["ledger", "verify", "--ledger", str(tmp_path / "missing.chain")]) == 1
    assert "IoFailure" in capsys.readouterr().err
    bad = tmp_path / "bad.yaml"
    bad.write_text("theta: 3\n")
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == 1
    assert "ConfigError" in capsys.readouterr().err
    with pytest.raises(SystemExit) as e:
        main(["simulate", "--enforce", "maybe"])
    assert e.value.code == 2


def test_console_help_lists_defaults():
    r = subprocess.run([sys.executable, "-m", "flowguard.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    assert "24.8 ms" in r.stdout and "theta 0.5" in r.stdout
    r = subprocess.run([sys.executable, "-m", "flowguard.cli", "bogus"], capture_output=True, text=True)
    assert r.returncode == 2


def test_data_directory_concatenates_csvs(flows_csv, tmp_path):
    df = pd.read_csv(flows_csv)
    d = tmp_path / "parts"
    d.mkdir()
    df.iloc[:300].to_csv(d / "a.csv", index=False)
    df.iloc[300:].to_csv(d / "b.csv", index=False)
    model = tmp_path / "f.model"
    assert main(["train", "--data", str(d), "--model-out", str(model), "--kind", "forest", "--trees", "5"]) == 0
    assert main(["evaluate", "--data", str(d), "--model", str(model), "--out", str(tmp_path / "ev")]) == 0
    assert sum(r["count"] for r in json.loads((tmp_path / "ev" / "report.json").read_text())["per_class"]) == 600
    (tmp_path / "empty").mkdir()
    assert main(["train", "--data", str(tmp_path / "empty"), "--model-out", str(tmp_path / "m")]) == 1
