"""Canonical byte layouts for alert payloads, transactions and blocks.

Payload: six length-prefixed fields in fixed order -- flow_id, label,
confidence, timestamp, action, qos_score. Each field is a 4-byte big-endian
length followed by UTF-8 text; reals are rendered with exactly six
fractional digits; an absent action or QoS score is the empty string.

Transaction record: payload, timestamp text, 32-byte digest, signature,
submitter id, submitter public key (all but the digest length-prefixed).

Block record: 8-byte index, 32-byte prev hash, commit timestamp text,
4-byte transaction count, transaction records, 32-byte block hash. The block
hash is SHA-256 over every byte of the record that precedes it.
"""
from __future__ import annotations

import math
import struct

from ..errors import SerializationFailure

U32 = struct.Struct(">I")
U64 = struct.Struct(">Q")
PAYLOAD_FIELDS = ("flow_id", "label", "confidence", "timestamp", "action", "qos_score")


class DecodeError(ValueError):
    pass


def fmt_real(x: float) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise SerializationFailure(f"cannot serialise non-finite value {x!r}")
    return f"{x:.6f}"


def lp(b: bytes) -> bytes:
    return U32.pack(len(b)) + b


def _text(s: str) -> bytes:
    try:
        return str(s).encode("utf-8")
    except UnicodeEncodeError as exc:
        raise SerializationFailure(str(exc)) from None


def encode_payload(flow_id: str, label: str, confidence: float, timestamp: float,
                   action: str | None = None, qos_score: float | None = None) -> bytes:
    fields = (
        _text(flow_id),
        _text(label),
        fmt_real(confidence).encode(),
        fmt_real(timestamp).encode(),
        _text(action or ""),
        b"" if qos_score is None else fmt_real(qos_score).encode(),
    )
    return b"".join(lp(f) for f in fields)


class Reader:
    def __init__(self, buf: bytes, pos: int = 0, end: int | None = None):
        self.buf = buf
        self.pos = pos
        self.end = len(buf) if end is None else end

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > self.end:
            raise DecodeError(f"record truncated at offset {self.pos}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return U32.unpack(self.take(4))[0]

    def u64(self) -> int:
        return U64.unpack(self.take(8))[0]

    def lp(self) -> bytes:
        pos = self.pos
        if pos + 4 > self.end:
            raise DecodeError(f"record truncated at offset {pos}")
        n = U32.unpack_from(self.buf, pos)[0]
        if pos + 4 + n > self.end:
            raise DecodeError(f"record truncated at offset {pos + 4}")
        self.pos = pos + 4 + n
        return self.buf[pos + 4:self.pos]

    def done(self) -> bool:
        return self.pos == self.end

    def expect_done(self) -> None:
        if self.pos != self.end:
            raise DecodeError(f"{self.end - self.pos} trailing bytes")


def _strict_real(b: bytes) -> float:
    s = b.decode("ascii")
    head, dot, frac = s.partition(".")
    if not dot or len(frac) != 6 or not frac.isdigit() or not head.lstrip("-").isdigit():
        raise DecodeError(f"non-canonical real {s!r}")
    return float(s)


def decode_payload(payload: bytes) -> dict:
    """Inverse of :func:`encode_payload`; raises DecodeError on any deviation."""
    r = Reader(payload)
    raw = [r.lp() for _ in PAYLOAD_FIELDS]
    r.expect_done()
    try:
        out = {
            "flow_id": raw[0].decode("utf-8"),
            "label": raw[1].decode("utf-8"),
            "confidence": _strict_real(raw[2]),
            "timestamp": _strict_real(raw[3]),
            "action": raw[4].decode("utf-8") or None,
            "qos_score": _strict_real(raw[5]) if raw[5] else None,
        }
    except UnicodeDecodeError as exc:
        raise DecodeError(str(exc)) from None
    if not out["flow_id"] or not out["label"]:
        raise DecodeError("empty flow id or label")
    if encode_payload(**out) != payload:
        raise DecodeError("payload is not in canonical form")
    return out
