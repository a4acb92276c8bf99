"""Sealed alert transactions, simulated endorsement, blocks and chain audit."""
from __future__ import annotations

import dataclasses
import functools
import hashlib
import json
from pathlib import Path
from typing import Sequence

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey

from ..errors import IoFailure
from ..ids.fusion import Alert
from .codec import U32, U64, DecodeError, Reader, decode_payload, encode_payload, fmt_real, lp

HASH_LEN = 32
ZERO_HASH = b"\x00" * HASH_LEN
DEFAULT_BLOCK_SIZE = 10
DEFAULT_BLOCK_TIMEOUT = 2.0


# ---------------------------------------------------------------------------
# identities

class SigningIdentity:
    """An Ed25519 key pair bound to a submitter id."""

    def __init__(self, identity: str, private_key: Ed25519PrivateKey):
        self.identity = identity
        self._key = private_key
        self.public_key = private_key.public_key().public_bytes(
            serialization.Encoding.Raw, serialization.PublicFormat.Raw)

    @classmethod
    def generate(cls, identity: str, seed: int | bytes | None = None) -> "SigningIdentity":
        """Deterministic keys when ``seed`` is given, fresh random keys otherwise."""
        if seed is None:
            return cls(identity, Ed25519PrivateKey.generate())
        material = seed if isinstance(seed, bytes) else str(seed).encode()
        raw = hashlib.sha256(b"flowguard-identity\x00" + identity.encode() + b"\x00" + material).digest()
        return cls(identity, Ed25519PrivateKey.from_private_bytes(raw))

    def sign(self, digest: bytes) -> bytes:
        return self._key.sign(digest)


@functools.lru_cache(maxsize=4096)
def _public_key(raw: bytes) -> Ed25519PublicKey:
    return Ed25519PublicKey.from_public_bytes(raw)


@functools.lru_cache(maxsize=1 << 17)
def verify_signature(public_key: bytes, signature: bytes, digest: bytes) -> bool:
    # pure function of its byte arguments; memoised because chain audits re-check the same txns
    try:
        _public_key(public_key).verify(signature, digest)
        return True
    except (InvalidSignature, ValueError):
        return False


# ---------------------------------------------------------------------------
# transactions and blocks

def compute_digest(payload: bytes, ts_bytes: bytes) -> bytes:
    return hashlib.sha256(payload + ts_bytes).digest()


@dataclasses.dataclass(frozen=True)
class AlertTransaction:
    payload: bytes
    ts_bytes: bytes
    digest: bytes
    signature: bytes
    submitter: str
    public_key: bytes

    @property
    def timestamp(self) -> float:
        return float(self.ts_bytes.decode("ascii"))

    def fields(self) -> dict:
        return decode_payload(self.payload)

    def encode(self) -> bytes:
        return b"".join((lp(self.payload), lp(self.ts_bytes), self.digest, lp(self.signature),
                         lp(self.submitter.encode("utf-8")), lp(self.public_key)))

    @classmethod
    def decode(cls, r: Reader) -> "AlertTransaction":
        payload = r.lp()
        ts = r.lp()
        digest = r.take(HASH_LEN)
        sig = r.lp()
        try:
            sub = r.lp().decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DecodeError(str(exc)) from None
        return cls(payload, ts, digest, sig, sub, r.lp())

    def problem(self) -> str | None:
        """First self-consistency failure, or None."""
        return _txn_problem(self.payload, self.ts_bytes, self.digest, self.signature, self.public_key)


@functools.lru_cache(maxsize=1 << 16)
def _txn_problem(payload: bytes, ts_bytes: bytes, digest: bytes, signature: bytes,
                 public_key: bytes) -> str | None:
    # keyed on every byte that is checked, so a cached verdict can never hide a modification
    try:
        decode_payload(payload)
        float(ts_bytes.decode("ascii"))
    except (DecodeError, ValueError):
        return "malformed payload"
    if compute_digest(payload, ts_bytes) != digest:
        return "digest mismatch"
    if not verify_signature(public_key, signature, digest):
        return "bad signature"
    return None


def seal_transaction(alert: Alert, action: str | None, identity: SigningIdentity, now: float,
                     qos_score: float | None = None) -> AlertTransaction:
    payload = encode_payload(alert.flow_id, alert.label, alert.confidence, alert.timestamp,
                             action, qos_score)
    ts = fmt_real(now).encode()
    digest = compute_digest(payload, ts)
    return AlertTransaction(payload, ts, digest, identity.sign(digest), identity.identity,
                            identity.public_key)


@dataclasses.dataclass(frozen=True)
class Block:
    index: int
    prev_hash: bytes
    commit_ts_bytes: bytes
    transactions: tuple[AlertTransaction, ...]
    block_hash: bytes

    @property
    def commit_ts(self) -> float:
        return float(self.commit_ts_bytes.decode("ascii"))

    @staticmethod
    def body(index: int, prev_hash: bytes, commit_ts_bytes: bytes, txns) -> bytes:
        return b"".join([U64.pack(index), prev_hash, lp(commit_ts_bytes), U32.pack(len(txns))]
                        + [t.encode() for t in txns])

    @classmethod
    def make(cls, index: int, prev_hash: bytes, commit_ts: float, txns) -> "Block":
        ts = fmt_real(commit_ts).encode()
        txns = tuple(txns)
        body = cls.body(index, prev_hash, ts, txns)
        return cls(index, prev_hash, ts, txns, hashlib.sha256(body).digest())

    def encode(self) -> bytes:
        return self.body(self.index, self.prev_hash, self.commit_ts_bytes, self.transactions) \
            + self.block_hash

    @classmethod
    def decode(cls, record: bytes) -> "Block":
        r = Reader(record)
        index = r.u64()
        prev = r.take(HASH_LEN)
        ts = r.lp()
        n = r.u32()
        if n > len(record):
            raise DecodeError("implausible transaction count")
        txns = tuple(AlertTransaction.decode(r) for _ in range(n))
        h = r.take(HASH_LEN)
        r.expect_done()
        return cls(index, prev, ts, txns, h)

    def recompute_hash(self) -> bytes:
        return hashlib.sha256(self.body(self.index, self.prev_hash, self.commit_ts_bytes,
                                        self.transactions)).digest()


GENESIS = Block.make(0, ZERO_HASH, 0.0, ())


# ---------------------------------------------------------------------------
# endorsement

@dataclasses.dataclass(frozen=True)
class EndorsementPolicy:
    peers: int = 2
    required: int = 2

    def __post_init__(self):
        if not 1 <= self.required <= self.peers:
            raise ValueError("endorsement policy needs 1 <= required <= peers")


class Peer:
    """Simulated endorsing peer: checks format, digest, signature and submitter."""

    def __init__(self, name: str, keyring: dict[str, bytes], online: bool = True):
        self.name = name
        self.keyring = keyring
        self.online = online

    def endorse(self, txn: AlertTransaction) -> str | None:
        """None when the peer endorses, else the rejection reason."""
        if not self.online:
            return "peer offline"
        known = self.keyring.get(txn.submitter)
        if known is None:
            return "unknown submitter"
        if known != txn.public_key:
            return "submitter key mismatch"
        return txn.problem()


@dataclasses.dataclass(frozen=True)
class Accepted:
    txn: AlertTransaction
    seq: int


@dataclasses.dataclass(frozen=True)
class BelowThreshold:
    confidence: float
    threshold: float


@dataclasses.dataclass(frozen=True)
class Rejected:
    reasons: dict[str, str]


@dataclasses.dataclass(frozen=True)
class Ok:
    blocks: int

    def __bool__(self) -> bool:
        return True


@dataclasses.dataclass(frozen=True)
class TamperedAt:
    block: int
    txn: int | None = None
    reason: str = ""

    def __bool__(self) -> bool:
        return False

    def __str__(self) -> str:
        where = f"block {self.block}" + ("" if self.txn is None else f", txn {self.txn}")
        return f"TamperedAt({where}): {self.reason}"


@dataclasses.dataclass(frozen=True)
class QueryRecord:
    label: str
    confidence: float
    timestamp: float
    action: str | None


# ---------------------------------------------------------------------------
# the ledger

class Ledger:
    def __init__(self, peers: Sequence[Peer], policy: EndorsementPolicy | None = None,
                 threshold: float = 0.5, block_size: int = DEFAULT_BLOCK_SIZE,
                 block_timeout: float = DEFAULT_BLOCK_TIMEOUT):
        policy = policy or EndorsementPolicy(len(peers), len(peers))
        if len(peers) != policy.peers:
            raise ValueError(f"policy expects {policy.peers} peers, got {len(peers)}")
        if not 0.0 <= threshold <= 1.0:
            raise ValueError("logging threshold must lie in [0, 1]")
        if block_size < 1:
            raise ValueError("block size must be at least 1")
        self.peers = list(peers)
        self.policy = policy
        self.threshold = threshold
        self.block_size = block_size
        self.block_timeout = block_timeout
        self.blocks: list[Block] = [GENESIS]
        self.pending: list[tuple[int, float, AlertTransaction]] = []
        self._seq = 0

    @classmethod
    def simulated(cls, identities: Sequence[SigningIdentity], n_peers: int = 2,
                  required: int | None = None, **kw) -> "Ledger":
        keyring = {i.identity: i.public_key for i in identities}
        peers = [Peer(f"peer{k}", dict(keyring)) for k in range(n_peers)]
        return cls(peers, EndorsementPolicy(n_peers, n_peers if required is None else required), **kw)

    @property
    def height(self) -> int:
        return len(self.blocks)

    def submit(self, txn: AlertTransaction, confidence: float | None = None,
               now: float | None = None):
        if confidence is None:
            try:
                confidence = txn.fields()["confidence"]
            except DecodeError:
                return Rejected({p.name: "malformed payload" for p in self.peers})
        if confidence < self.threshold:
            return BelowThreshold(confidence, self.threshold)
        reasons = {}
        for p in self.peers:
            why = p.endorse(txn)
            if why is not None:
                reasons[p.name] = why
        if len(self.peers) - len(reasons) < self.policy.required:
            return Rejected(reasons)
        seq = self._seq
        self._seq += 1
        self.pending.append((seq, txn.timestamp if now is None else now, txn))
        return Accepted(txn, seq)

    def commit_block(self, now: float, force: bool = False) -> Block | None:
        if not self.pending:
            return None
        oldest = self.pending[0][1]
        if not (force or len(self.pending) >= self.block_size or now - oldest >= self.block_timeout):
            return None
        take = self.pending[:self.block_size]
        del self.pending[:self.block_size]
        block = Block.make(len(self.blocks), self.blocks[-1].block_hash, now, [t for _, _, t in take])
        self.blocks.append(block)
        return block

    def flush(self, now: float) -> list[Block]:
        out = []
        while self.pending:
            out.append(self.commit_block(now, force=True))
        return out

    def query(self, flow_id: str) -> list[QueryRecord]:
        return query(self.blocks, flow_id)

    def verify(self, keyring: dict[str, bytes] | None = None):
        return verify_chain(self.blocks, keyring)

    def save(self, path) -> Path:
        return write_chain(path, self.blocks)


def query(blocks: Sequence[Block], flow_id: str) -> list[QueryRecord]:
    head = lp(flow_id.encode("utf-8"))    # the payload starts with the length-prefixed flow id
    out = []
    for b in blocks:
        for t in b.transactions:
            if not t.payload.startswith(head):
                continue
            f = t.fields()
            if f["flow_id"] == flow_id:
                out.append(QueryRecord(f["label"], f["confidence"], f["timestamp"], f["action"]))
    return out


def verify_chain(blocks: Sequence[Block], keyring: dict[str, bytes] | None = None):
    """Recheck every transaction, block hash and link; report the earliest fault."""
    if not blocks:
        return TamperedAt(0, None, "empty ledger")
    if blocks[0] != GENESIS:
        return TamperedAt(0, None, "genesis block altered")
    for i in range(1, len(blocks)):
        b = blocks[i]
        for j, t in enumerate(b.transactions):
            why = t.problem()
            if why is None and keyring is not None:
                known = keyring.get(t.submitter)
                why = None if known == t.public_key else "unknown submitter"
            if why is not None:
                return TamperedAt(i, j, why)
        try:
            b.commit_ts
        except ValueError:
            return TamperedAt(i, None, "malformed commit timestamp")
        if b.index != i:
            return TamperedAt(i, None, f"index field reads {b.index}")
        if b.recompute_hash() != b.block_hash:
            return TamperedAt(i, None, "block hash mismatch")
        if b.prev_hash != blocks[i - 1].block_hash:
            return TamperedAt(i, None, "prev_hash does not match predecessor")
    return Ok(len(blocks))


# ---------------------------------------------------------------------------
# persistence

def append_block(path, block: Block) -> None:
    rec = block.encode()
    try:
        with open(path, "ab") as fh:
            fh.write(U32.pack(len(rec)) + rec)
    except OSError as exc:
        raise IoFailure(str(exc)) from None


def write_chain(path, blocks: Sequence[Block]) -> Path:
    path = Path(path)
    try:
        path.write_bytes(b"".join(U32.pack(len(r)) + r for r in (b.encode() for b in blocks)))
    except OSError as exc:
        raise IoFailure(str(exc)) from None
    return path


def read_chain(data: bytes) -> tuple[list[Block], TamperedAt | None]:
    """Parse as many blocks as possible; the second item reports the first unreadable record."""
    blocks: list[Block] = []
    r = Reader(data)
    while not r.done():
        try:
            rec = r.lp()
            blocks.append(Block.decode(rec))
        except DecodeError as exc:
            return blocks, TamperedAt(len(blocks), None, f"unreadable block record: {exc}")
    return blocks, None


def load_chain(path) -> list[Block]:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(str(exc)) from None
    blocks, fault = read_chain(data)
    if fault is not None:
        raise DecodeError(str(fault))
    return blocks


def verify_bytes(data: bytes, keyring: dict[str, bytes] | None = None):
    blocks, fault = read_chain(data)
    found = verify_chain(blocks, keyring) if blocks else TamperedAt(0, None, "no readable blocks")
    if fault is not None and (found or found.block > fault.block):
        return fault
    return found


def verify_file(path, keyring: dict[str, bytes] | None = None):
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(str(exc)) from None
    return verify_bytes(data, keyring)


def export_json_lines(blocks: Sequence[Block]) -> str:
    """Audit export: one JSON object per block."""
    lines = []
    for b in blocks:
        lines.append(json.dumps({
            "index": b.index,
            "prev_hash": b.prev_hash.hex(),
            "block_hash": b.block_hash.hex(),
            "commit_ts": b.commit_ts_bytes.decode("ascii", "replace"),
            "transactions": [{
                **t.fields(),
                "tx_timestamp": t.ts_bytes.decode("ascii", "replace"),
                "digest": t.digest.hex(),
                "signature": t.signature.hex(),
                "submitter": t.submitter,
            } for t in b.transactions],
        }, sort_keys=True))
    return "\n".join(lines) + "\n"
