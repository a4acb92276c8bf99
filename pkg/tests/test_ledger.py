import random
import struct

import pytest

from flowguard.errors import SerializationFailure
from flowguard.ids.fusion import Alert
from flowguard.ledger import (
    GENESIS,
    Accepted,
    BelowThreshold,
    Block,
    LatencyModel,
    Ledger,
    Ok,
    Rejected,
    SigningIdentity,
    TamperedAt,
    export_json_lines,
    load_chain,
    measure_txn_latency,
    seal_transaction,
    verify_bytes,
    verify_chain,
    verify_file,
)
from flowguard.ledger.chain import AlertTransaction

# -- an independent SHA-256 written from the FIPS 180-4 description ---------

_K = [
    0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4, 0xab1c5ed5,
    0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174,
    0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da,
    0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967,
    0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85,
    0xa2bfe8a1, 0xa81a664b, 0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070,
    0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
    0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2,
]


def _rotr(x, n):
    return ((x >> n) | (x << (32 - n))) & 0xFFFFFFFF


def sha256_ref(msg: bytes) -> bytes:
    h = [0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a, 0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19]
    padded = msg + b"\x80" + b"\x00" * ((55 - len(msg)) % 64) + struct.pack(">Q", 8 * len(msg))
    for off in range(0, len(padded), 64):
        w = list(struct.unpack(">16I", padded[off:off + 64]))
        for i in range(16, 64):
            s0 = _rotr(w[i - 15], 7) ^ _rotr(w[i - 15], 18) ^ (w[i - 15] >> 3)
            s1 = _rotr(w[i - 2], 17) ^ _rotr(w[i - 2], 19) ^ (w[i - 2] >> 10)
            w.append((w[i - 16] + s0 + w[i - 7] + s1) & 0xFFFFFFFF)
        a, b, c, d, e, f, g, hh = h
        for i in range(64):
            t1 = (hh + (_rotr(e, 6) ^ _rotr(e, 11) ^ _rotr(e, 25)) + ((e & f) ^ (~e & g)) + _K[i] + w[i])
            t2 = (_rotr(a, 2) ^ _rotr(a, 13) ^ _rotr(a, 22)) + ((a & b) ^ (a & c) ^ (b & c))
            a, b, c, d, e, f, g, hh = (t1 + t2) & 0xFFFFFFFF, a, b, c, (d + t1) & 0xFFFFFFFF, e, f, g
        h = [(x + y) & 0xFFFFFFFF for x, y in zip(h, (a, b, c, d, e, f, g, hh))]
    return b"".join(struct.pack(">I", x) for x in h)


def field(s: str) -> bytes:
    b = s.encode("utf-8")
    return struct.pack(">I", len(b)) + b


# -- helpers ----------------------------------------------------------------

ALICE = SigningIdentity.generate("controller", seed=1)
MALLORY = SigningIdentity.generate("intruder", seed=2)


def alert(flow="A", label="DDoS", conf=0.9, ts=100.0):
    return Alert(flow, label, conf, ts)


def ledger(**kw):
    return Ledger.simulated([ALICE], **kw)


def filled_ledger(n_blocks, per_block=10, seed=0):
    rng = random.Random(seed)
    led = ledger(block_size=per_block)
    t = 0.0
    for _ in range(n_blocks * per_block):
        t += rng.uniform(0.001, 0.05)
        a = alert(f"f{rng.randrange(50)}", rng.choice(["DDoS", "Probe", "Web"]), rng.uniform(0.5, 1.0), t)
        assert isinstance(led.submit(seal_transaction(a, "Drop", ALICE, t)), Accepted)
        led.commit_block(t)
    assert led.height == n_blocks + 1
    return led


# -- sealing ----------------------------------------------------------------

def test_sha256_reference_is_itself_correct():
    assert sha256_ref(b"abc").hex() == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    assert sha256_ref(b"").hex() == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"


def test_seal_digest_matches_independent_layout():
    txn = seal_transaction(alert(), None, ALICE, 100.5)
    expected_payload = field("A") + field("DDoS") + field("0.900000") + field("100.000000") + field("") + field("")
    assert txn.payload == expected_payload
    assert txn.digest == sha256_ref(expected_payload + b"100.500000")
    with_action = seal_transaction(alert(), "Drop", ALICE, 100.5, qos_score=0.25)
    assert with_action.payload == field("A") + field("DDoS") + field("0.900000") + field("100.000000") \
        + field("Drop") + field("0.250000")
    assert with_action.digest == sha256_ref(with_action.payload + b"100.500000")


def test_seal_is_deterministic_and_sensitive():
    a = seal_transaction(alert(), None, ALICE, 1.0)
    b = seal_transaction(alert(), None, ALICE, 1.0)
    assert a.digest == b.digest
    assert seal_transaction(alert(flow="B"), None, ALICE, 1.0).digest != a.digest
    assert a.problem() is None


def test_seal_rejects_non_finite():
    with pytest.raises(SerializationFailure):
        seal_transaction(alert(conf=float("nan")), None, ALICE, 1.0)


# -- submission gate and endorsement ----------------------------------------

def test_submit_gate_and_endorsement():
    led = ledger()
    assert isinstance(led.submit(seal_transaction(alert(conf=0.9), None, ALICE, 1.0)), Accepted)
    r = led.submit(seal_transaction(alert(conf=0.4), None, ALICE, 1.0))
    assert isinstance(r, BelowThreshold) and len(led.pending) == 1


def test_corrupted_signature_rejected_by_every_peer():
    led = ledger()
    txn = seal_transaction(alert(), None, ALICE, 1.0)
    bad = AlertTransaction(txn.payload, txn.ts_bytes, txn.digest, bytes(64), txn.submitter, txn.public_key)
    r = led.submit(bad)
    assert isinstance(r, Rejected)
    assert set(r.reasons.values()) == {"bad signature"} and len(r.reasons) == 2
    assert led.pending == []


def test_unknown_submitter_and_quorum():
    led = ledger()
    r = led.submit(seal_transaction(alert(), None, MALLORY, 1.0))
    assert isinstance(r, Rejected) and set(r.reasons.values()) == {"unknown submitter"}
    one_of_two = Ledger.simulated([ALICE], n_peers=2, required=1)
    one_of_two.peers[0].online = False
    assert isinstance(one_of_two.submit(seal_transaction(alert(), None, ALICE, 1.0)), Accepted)
    led.peers[0].online = False
    assert isinstance(led.submit(seal_transaction(alert(), None, ALICE, 1.0)), Rejected)


# -- blocks -----------------------------------------------------------------

def test_commit_on_size_and_timeout():
    led = ledger(block_size=2)
    t1 = seal_transaction(alert("a"), None, ALICE, 1.0)
    t2 = seal_transaction(alert("b"), None, ALICE, 1.1)
    led.submit(t1)
    assert led.commit_block(1.0) is None
    led.submit(t2)
    b = led.commit_block(1.1)
    assert b.transactions == (t1, t2) and b.index == 1

    led = ledger(block_size=10, block_timeout=2.0)
    for k in range(3):
        led.submit(seal_transaction(alert(str(k)), None, ALICE, 5.0))
    assert led.commit_block(6.9) is None
    assert len(led.commit_block(7.0).transactions) == 3
    assert led.commit_block(100.0) is None


def test_chain_linkage_and_genesis():
    led = filled_ledger(5, per_block=1)
    assert led.blocks[0] == GENESIS
    for prev, b in zip(led.blocks, led.blocks[1:]):
        assert b.prev_hash == prev.block_hash
        assert b.block_hash == sha256_ref(b.encode()[:-32])
    assert verify_chain(led.blocks) == Ok(6)


def test_append_only():
    led = filled_ledger(3, per_block=2)
    snapshot = [b.encode() for b in led.blocks]
    for k in range(7):
        led.submit(seal_transaction(alert(f"z{k}"), None, ALICE, 50.0 + k))
    led.flush(60.0)
    assert [b.encode() for b in led.blocks[:len(snapshot)]] == snapshot


# -- verification -----------------------------------------------------------

def test_payload_bit_flip_is_located():
    led = filled_ledger(10, per_block=3)
    blocks = list(led.blocks)
    t = blocks[7].transactions[1]
    flipped = bytearray(t.payload)
    flipped[9] ^= 0x01
    t2 = AlertTransaction(bytes(flipped), t.ts_bytes, t.digest, t.signature, t.submitter, t.public_key)
    txns = list(blocks[7].transactions)
    txns[1] = t2
    blocks[7] = Block(7, blocks[7].prev_hash, blocks[7].commit_ts_bytes, tuple(txns), blocks[7].block_hash)
    res = verify_chain(blocks)
    assert isinstance(res, TamperedAt) and (res.block, res.txn) == (7, 1)
    assert not res


def test_self_consistent_forgery_breaks_at_successor():
    led = filled_ledger(6, per_block=2)
    blocks = list(led.blocks)
    fake = [seal_transaction(alert("forged", "Normal", 0.99, 1.0), None, ALICE, 1.0)]
    blocks[3] = Block.make(3, blocks[2].block_hash, blocks[3].commit_ts, fake)
    res = verify_chain(blocks)
    assert isinstance(res, TamperedAt) and res.block == 4 and res.txn is None


def test_file_roundtrip_and_bit_flips(tmp_path):
    led = filled_ledger(20, per_block=3)
    p = led.save(tmp_path / "ledger.chain")
    assert verify_file(p) == Ok(21)
    assert [b.encode() for b in load_chain(p)] == [b.encode() for b in led.blocks]
    data = p.read_bytes()
    # byte offset at which each block record starts, to check the reported index
    starts, pos = [], 0
    while pos < len(data):
        starts.append(pos)
        pos += 4 + struct.unpack(">I", data[pos:pos + 4])[0]
    rng = random.Random(3)
    for _ in range(200):
        bit = rng.randrange(len(data) * 8)
        buf = bytearray(data)
        buf[bit // 8] ^= 1 << (bit % 8)
        res = verify_bytes(bytes(buf))
        assert not res
        hit = max(i for i, s in enumerate(starts) if s <= bit // 8)
        assert res.block <= hit + 1


def test_keyring_check_and_export():
    led = filled_ledger(2, per_block=2)
    assert verify_chain(led.blocks, {"controller": ALICE.public_key})
    res = verify_chain(led.blocks, {"controller": MALLORY.public_key})
    assert isinstance(res, TamperedAt) and res.block == 1
    lines = export_json_lines(led.blocks).splitlines()
    assert len(lines) == 3 and '"prev_hash"' in lines[1]


# -- query ------------------------------------------------------------------

def test_query_returns_committed_in_order():
    led = ledger(block_size=1)
    led.submit(seal_transaction(alert("X", "DDoS", 0.9, 10.0), "Drop", ALICE, 10.0))
    led.commit_block(10.0)
    rec = led.query("X")
    assert len(rec) == 1
    assert (rec[0].label, rec[0].confidence, rec[0].timestamp, rec[0].action) == ("DDoS", 0.9, 10.0, "Drop")
    led.submit(seal_transaction(alert("X", "Probe", 0.7, 11.0), None, ALICE, 11.0))
    led.commit_block(11.0)
    assert [r.label for r in led.query("X")] == ["DDoS", "Probe"]
    assert led.query("nobody") == []
    led.block_size = 5
    led.submit(seal_transaction(alert("X", "Web", 0.7, 12.0), None, ALICE, 12.0))
    assert len(led.query("X")) == 2   # pending is not visible


# -- latency model ----------------------------------------------------------

def test_latency_model():
    zero = measure_txn_latency([1], model=LatencyModel.zero(), n_txns=50)[0]
    assert zero.mean_ms == 0.0 and zero.max_ms == 0.0
    rows = measure_txn_latency([10, 50, 100, 300], seed=4)
    means = [r.mean_ms for r in rows]
    assert means == sorted(means)
    assert measure_txn_latency([10, 50, 100, 300], seed=4) == rows
    with pytest.raises(ValueError):
        measure_txn_latency([])
