import collections
import warnings

import pytest

from flowguard.errors import TableFull
from flowguard.flow_engine import FlowKey, PacketRecord, Protocol, flow_key
from flowguard.netsim import (
    ALERT,
    DELIVERED,
    PACKET_EVENTS,
    REDIRECTED,
    RULE,
    AppSpec,
    AttackSpec,
    Delivered,
    Dropped,
    EventLog,
    NeverDetector,
    OracleDetector,
    OverCapacityConfig,
    Redirected,
    ScenarioConfig,
    SwitchConfig,
    SwitchModel,
    generate_traffic,
    run_closed_loop,
    scripted_ddos,
)
from flowguard.netsim.switch import InstallLatency
from flowguard.policy import NetworkAction, SeverityClass, compile_rule

VOIP_64K = ScenarioConfig(duration=10.0, apps=(AppSpec("voip", flows=1, rate_kbps=64.0, pkt_bytes=160),))
NO_LATENCY = SwitchConfig(install_mean_ms=0.0, install_jitter=0.0)


def udp(ts, src="10.0.1.1", dst="10.0.0.1", sport=2000, dport=5060, size=1000):
    return PacketRecord(ts, src, dst, sport, dport, Protocol.UDP, size)


def constant_stream(rate_bps, size, seconds, **kw):
    gap = size * 8.0 / rate_bps
    return [udp(k * gap, size=size, **kw) for k in range(int(seconds / gap))]


def run_quiet(cfg, detector):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OverCapacityConfig)
        return run_closed_loop(cfg, detector)


# -- traffic ----------------------------------------------------------------

def test_voip_rate_matches_configuration():
    tr = generate_traffic(VOIP_64K)
    assert tr.total_bytes("voip") == pytest.approx(64_000 / 8 * 10, rel=0.05)
    mixed = VOIP_64K.replace(apps=(AppSpec("voip", 10, 1000.0), AppSpec("bulk", 2, 3000.0, 1400, 443, "TCP")))
    tr = generate_traffic(mixed)
    assert tr.total_bytes("voip") == pytest.approx(1e6 / 8 * 10, rel=0.05)
    assert tr.total_bytes("bulk") == pytest.approx(3e6 / 8 * 10, rel=0.05)
    assert all(a <= b for a, b in zip((p.ts for p in tr.packets), (p.ts for p in tr.packets[1:])))


def test_traffic_is_deterministic_and_attack_free_identity():
    a = generate_traffic(VOIP_64K)
    assert generate_traffic(VOIP_64K).packets == a.packets
    zero = generate_traffic(VOIP_64K.replace(attack=AttackSpec(mbps=0.0)))
    assert zero.packets == a.packets
    assert generate_traffic(VOIP_64K.replace(seed=1)).packets != a.packets


def test_attack_flows_labeled_and_warning():
    with pytest.warns(OverCapacityConfig):
        tr = generate_traffic(scripted_ddos(0, duration=3.0))
    attack = {k for k, v in tr.labels.items() if v == "DDoS"}
    assert len(attack) == 4
    assert all(tr.app_of[k] == "attack" for k in attack)
    assert tr.total_bytes("attack") == pytest.approx(100e6 / 8 * 2.0, rel=0.05)


# -- switch -----------------------------------------------------------------

def test_default_rule_forwards_to_low_queue():
    sw = SwitchModel(10.0)
    assert sw.match_and_forward(udp(0.0)) == Delivered("low")
    assert sw.rule_count == 0


def test_drop_rule_wins_by_priority():
    sw = SwitchModel(10.0, NO_LATENCY)
    p = udp(0.0)
    key = FlowKey.parse("10.0.0.1:5060-10.0.1.1:2000/UDP")
    sw.install_rule(compile_rule(key, SeverityClass.SAFE, NetworkAction.PRIORITIZE), 0.0)
    sw.install_rule(compile_rule(key, SeverityClass.MALICIOUS, NetworkAction.DROP), 0.0)
    assert sw.match_and_forward(p) == Dropped("rule")
    other = udp(0.1, sport=2001)
    assert sw.match_and_forward(other) == Delivered("low")


def test_redirect_rule_goes_to_sink():
    sw = SwitchModel(10.0, NO_LATENCY)
    key = FlowKey.parse("10.0.0.1:5060-10.0.1.1:2000/UDP")
    sw.install_rule(compile_rule(key, SeverityClass.MALICIOUS, NetworkAction.REDIRECT), 0.0)
    assert sw.match_and_forward(udp(0.0)) == Redirected()
    assert sw.log.counts()[REDIRECTED] == 1


def test_meter_passes_half_of_double_rate():
    log = EventLog()
    sw = SwitchModel(100.0, NO_LATENCY, log=log)
    key = FlowKey.parse("10.0.0.1:5060-10.0.1.1:2000/UDP")
    sw.install_rule(compile_rule(key, SeverityClass.SUSPICIOUS, NetworkAction.RATE_LIMIT), 0.0)
    pkts = constant_stream(2e6, 1000, 6.0)
    for p in pkts:
        sw.match_and_forward(p)
    sw.drain()
    offered = sum(p.length for p in pkts)
    delivered = sum(e["bytes"] for e in log.finalize().of(DELIVERED))
    assert delivered == pytest.approx(offered / 2, rel=0.05)


def test_high_queue_is_served_first_under_overload():
    log = EventLog()
    sw = SwitchModel(1.0, SwitchConfig(buffer_packets=20, high_share=1.0, install_mean_ms=0.0), log=log)
    vkey = FlowKey.parse("10.0.0.1:5060-10.0.1.1:2000/UDP")
    sw.install_rule(compile_rule(vkey, SeverityClass.SAFE, NetworkAction.PRIORITIZE), 0.0)
    voip = constant_stream(0.2e6, 200, 4.0)
    flood = constant_stream(5e6, 1000, 4.0, src="10.0.66.1", sport=40000, dport=80)
    for p in sorted(voip + flood, key=lambda p: p.ts):
        sw.match_and_forward(p, "voip" if p.dst_port == 5060 else "attack")
    sw.drain()
    got = log.finalize().bytes_by(DELIVERED)
    assert got["voip"] == sum(p.length for p in voip)
    assert got["attack"] < 0.25 * sum(p.length for p in flood)


def test_install_latency():
    sw = SwitchModel(10.0, NO_LATENCY)
    rule = compile_rule("10.0.0.1:1-10.0.0.2:2/UDP", SeverityClass.MALICIOUS, NetworkAction.DROP)
    assert sw.install_rule(rule, 3.0) == 3.0
    assert sw.match_and_forward(udp(3.0, "10.0.0.2", "10.0.0.1", 2, 1)) == Dropped("rule")

    sw = SwitchModel(10.0, SwitchConfig(install_mean_ms=24.8, install_jitter=0.0))
    assert sw.install_rule(rule, 1.0) == 1.0 + 0.0248
    assert sw.match_and_forward(udp(1.02, "10.0.0.2", "10.0.0.1", 2, 1)) == Delivered("low")
    assert sw.match_and_forward(udp(1.03, "10.0.0.2", "10.0.0.1", 2, 1)) == Dropped("rule")

    lat = InstallLatency(24.8, 0.3, seed=5)
    samples = [lat.sample() for _ in range(1000)]
    assert sum(samples) / 1000 == pytest.approx(0.0248, rel=0.10)
    assert min(samples) >= 0.0248 * 0.7 and max(samples) <= 0.0248 * 1.3
    again = InstallLatency(24.8, 0.3, seed=5)
    assert [again.sample() for _ in range(1000)] == samples


def test_table_full():
    sw = SwitchModel(10.0, SwitchConfig(max_rules=2))
    for k in range(2):
        sw.install_rule(compile_rule(f"10.0.0.1:{k}-10.0.0.2:9/UDP", SeverityClass.MALICIOUS,
                                     NetworkAction.DROP), 0.0)
    with pytest.raises(TableFull):
        sw.install_rule(compile_rule("10.0.0.1:7-10.0.0.2:9/UDP", SeverityClass.MALICIOUS,
                                     NetworkAction.DROP), 0.0)


# -- closed loop ------------------------------------------------------------

def test_never_detector_raises_nothing():
    res = run_closed_loop(VOIP_64K.replace(duration=3.0), NeverDetector())
    c = res.log.counts()
    assert c.get(ALERT, 0) == 0 and c.get(RULE, 0) == 0
    assert res.flows_scored > 0


def test_oracle_drops_every_attack_flow():
    res = run_quiet(scripted_ddos(1, duration=4.0), OracleDetector())
    attack = {k.render() for k, v in res.trace.labels.items() if v != "Normal"}
    drops = {e["rule"]["match"] for e in res.log.of(RULE)
             if e["rule"]["priority"] == 100 and e["rule"]["action"] == "drop"}
    assert attack <= drops
    # once a drop rule is active, that flow never reaches the output queue again
    applied = {e["rule"]["match"]: e["ts"] for e in res.log.of(RULE)}
    late = [e for e in res.log.of(DELIVERED) if e["flow"] in applied and e["ts"] > applied[e["flow"]] + 0.2]
    assert late == []
    assert res.ledger.verify()


def _per_flow(log, kinds):
    out = collections.Counter()
    for e in log.of(*kinds):
        out[e["flow"]] += e["bytes"]
    return out


def test_conservation_and_causality():
    res = run_quiet(scripted_ddos(2, duration=4.0), OracleDetector())
    offered = collections.Counter()
    for p in res.trace.packets:
        offered[flow_key(p).render()] += p.length
    assert _per_flow(res.log, PACKET_EVENTS) == offered

    ts = [e["ts"] for e in res.log.events]
    assert ts == sorted(ts)
    alerts = collections.defaultdict(list)
    for e in res.log.of(ALERT):
        alerts[e["flow"]].append(e["ts"])
    for e in res.log.of(RULE):
        assert e["ts"] >= e["requested"]
        assert any(t <= e["requested"] for t in alerts[e["flow"]])


def test_enforcement_off_still_detects_and_logs():
    res = run_quiet(scripted_ddos(0, enforce=False, duration=3.0), OracleDetector())
    c = res.log.counts()
    assert c[ALERT] > 0 and c.get(RULE, 0) == 0
    assert res.ledger.height > 1


def test_enforcement_dominance():
    for seed in (0, 1):
        on = run_quiet(scripted_ddos(seed, enforce=True, duration=4.0), OracleDetector())
        off = run_quiet(scripted_ddos(seed, enforce=False, duration=4.0), OracleDetector())
        assert on.log.bytes_by(DELIVERED)["voip"] >= off.log.bytes_by(DELIVERED)["voip"]


def test_event_log_is_byte_identical(tmp_path):
    cfg = scripted_ddos(3, duration=3.0)
    a = run_quiet(cfg, OracleDetector()).log.to_jsonl()
    b = run_quiet(cfg, OracleDetector()).log.to_jsonl()
    assert a == b
    p = run_quiet(cfg, OracleDetector()).log.write(tmp_path / "events.jsonl")
    assert EventLog.read(p).to_jsonl() == a


def test_scenario_file_roundtrip(tmp_path):
    import yaml

    cfg = scripted_ddos(4)
    p = tmp_path / "s.yaml"
    p.write_text(yaml.safe_dump(cfg.to_dict()))
    assert ScenarioConfig.load(p) == cfg
