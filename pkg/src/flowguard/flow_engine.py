"""Packet-to-flow assembly, flow features and z-score normalization.

Flows are bidirectional and keyed by an order-normalized 5-tuple; the
direction of the first packet seen is the forward direction. Aggregates are
kept as running sums so no packet is retained after ingestion.
"""
from __future__ import annotations

import csv
import dataclasses
import enum
import math
import socket
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import (
    InsufficientData,
    MissingColumn,
    NonMonotonicTimestamp,
    SchemaMismatch,
    UnparsableCell,
)
from .labels import Label, parse_label

DEFAULT_FLOW_TIMEOUT = 5.0
MIN_DURATION = 0.001  # byte-rate denominator floor, seconds

TCP_FIN = 0x01
TCP_SYN = 0x02
TCP_RST = 0x04


class Protocol(str, enum.Enum):
    TCP = "TCP"
    UDP = "UDP"
    ICMP = "ICMP"
    OTHER = "OTHER"

    @classmethod
    def parse(cls, raw) -> "Protocol":
        s = str(raw).strip().upper()
        if s in ("6", "TCP"):
            return cls.TCP
        if s in ("17", "UDP"):
            return cls.UDP
        if s in ("1", "ICMP"):
            return cls.ICMP
        return cls.OTHER


@dataclasses.dataclass(slots=True)
class PacketRecord:
    ts: float
    src_ip: str
    dst_ip: str
    src_port: int
    dst_port: int
    protocol: Protocol
    length: int
    tcp_flags: int | None = None


class FlowKey(NamedTuple):
    """Canonical bidirectional 5-tuple; the lower (ip, port) endpoint comes first."""

    ip_a: str
    port_a: int
    ip_b: str
    port_b: int
    protocol: Protocol

    def render(self) -> str:
        return f"{self.ip_a}:{self.port_a}-{self.ip_b}:{self.port_b}/{self.protocol.value}"

    __str__ = render

    @classmethod
    def parse(cls, text: str) -> "FlowKey":
        try:
            ends, proto = text.rsplit("/", 1)
            a, b = ends.split("-", 1)
            ip_a, port_a = a.rsplit(":", 1)
            ip_b, port_b = b.rsplit(":", 1)
            return cls(ip_a, int(port_a), ip_b, int(port_b), Protocol(proto))
        except ValueError:
            raise ValueError(f"malformed flow id {text!r}") from None


_ip_cache: dict[str, bytes] = {}


def _ip_bytes(ip: str) -> bytes:
    b = _ip_cache.get(ip)
    if b is None:
        b = socket.inet_aton(ip)
        if len(_ip_cache) < 1_000_000:
            _ip_cache[ip] = b
    return b


def flow_key(p: PacketRecord) -> FlowKey:
    src = (_ip_bytes(p.src_ip), p.src_port)
    dst = (_ip_bytes(p.dst_ip), p.dst_port)
    if src <= dst:
        return FlowKey(p.src_ip, p.src_port, p.dst_ip, p.dst_port, p.protocol)
    return FlowKey(p.dst_ip, p.dst_port, p.src_ip, p.src_port, p.protocol)


@dataclasses.dataclass(slots=True)
class FlowState:
    key: FlowKey
    fwd_src: tuple[str, int]
    first_ts: float
    last_ts: float
    pkt_count: int = 0
    byte_sum: int = 0
    iat_sum: float = 0.0
    iat_sq_sum: float = 0.0
    size_min: int = 0
    size_max: int = 0
    dst_port_counts: dict[int, int] = dataclasses.field(default_factory=dict)
    fwd_pkt_count: int = 0
    bwd_pkt_count: int = 0
    syn_count: int = 0
    fin_count: int = 0
    rst_count: int = 0
    label: str | None = None

    @classmethod
    def start(cls, key: FlowKey, p: PacketRecord, label: str | None = None) -> "FlowState":
        return cls(key=key, fwd_src=(p.src_ip, p.src_port), first_ts=p.ts, last_ts=p.ts,
                   size_min=p.length, size_max=p.length, label=label)

    def add(self, p: PacketRecord) -> None:
        if self.pkt_count:
            if p.ts < self.last_ts:
                raise NonMonotonicTimestamp(
                    f"flow {self.key}: packet at {p.ts} precedes last packet at {self.last_ts}")
            gap = p.ts - self.last_ts
            self.iat_sum += gap
            self.iat_sq_sum += gap * gap
            if p.length < self.size_min:
                self.size_min = p.length
            if p.length > self.size_max:
                self.size_max = p.length
        self.last_ts = p.ts
        self.pkt_count += 1
        self.byte_sum += p.length
        self.dst_port_counts[p.dst_port] = self.dst_port_counts.get(p.dst_port, 0) + 1
        if (p.src_ip, p.src_port) == self.fwd_src:
            self.fwd_pkt_count += 1
        else:
            self.bwd_pkt_count += 1
        flags = p.tcp_flags
        if flags:
            if flags & TCP_SYN:
                self.syn_count += 1
            if flags & TCP_FIN:
                self.fin_count += 1
            if flags & TCP_RST:
                self.rst_count += 1


class FlowTable:
    """Single-writer table of in-progress flows.

    ``active_timeout`` optionally exports long-lived flows that never go
    idle; ``None`` leaves idle expiry as the only export path.
    """

    def __init__(self, timeout: float = DEFAULT_FLOW_TIMEOUT, active_timeout: float | None = None):
        if timeout <= 0:
            raise ValueError("flow timeout must be positive")
        if active_timeout is not None and active_timeout <= 0:
            raise ValueError("active timeout must be positive")
        self.timeout = timeout
        self.active_timeout = active_timeout
        self.flows: dict[FlowKey, FlowState] = {}

    def __len__(self) -> int:
        return len(self.flows)

    def ingest(self, p: PacketRecord, label: str | None = None, key: FlowKey | None = None) -> FlowState:
        if key is None:
            key = flow_key(p)
        f = self.flows.get(key)
        if f is None:
            f = FlowState.start(key, p, label)
            self.flows[key] = f
        f.add(p)
        return f

    def expire(self, now: float, timeout: float | None = None) -> list[FlowState]:
        tau = self.timeout if timeout is None else timeout
        act = self.active_timeout
        done = [
            f for f in self.flows.values()
            if now - f.last_ts >= tau or (act is not None and now - f.first_ts >= act)
        ]
        for f in done:
            del self.flows[f.key]
        done.sort(key=lambda f: (f.last_ts, f.first_ts))
        return done

    def flush(self) -> list[FlowState]:
        done = sorted(self.flows.values(), key=lambda f: (f.last_ts, f.first_ts))
        self.flows.clear()
        return done


def ingest_and_expire(table: FlowTable, p: PacketRecord, now: float,
                      timeout: float = DEFAULT_FLOW_TIMEOUT) -> list[FlowState]:
    if timeout <= 0:
        raise ValueError("flow timeout must be positive")
    if now < p.ts:
        raise ValueError(f"expiry time {now} precedes packet time {p.ts}")
    table.ingest(p)
    return table.expire(now, timeout)


# ---------------------------------------------------------------------------
# features

FEATURE_NAMES: tuple[str, ...] = (
    "duration",
    "pkt_count",
    "mean_pkt_size",
    "byte_rate",
    "mean_iat",
    "dst_port_entropy",
    "size_min",
    "size_max",
    "fwd_ratio",
    "syn_count",
    "fin_count",
    "rst_count",
)


@dataclasses.dataclass(frozen=True, slots=True)
class FeatureVector:
    duration: float
    pkt_count: float
    mean_pkt_size: float
    byte_rate: float
    mean_iat: float
    dst_port_entropy: float
    size_min: float
    size_max: float
    fwd_ratio: float
    syn_count: float
    fin_count: float
    rst_count: float

    def as_array(self) -> np.ndarray:
        return np.array(dataclasses.astuple(self), dtype=np.float64)

    def as_dict(self) -> dict[str, float]:
        return dataclasses.asdict(self)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "FeatureVector":
        if len(values) != len(FEATURE_NAMES):
            raise SchemaMismatch(f"expected {len(FEATURE_NAMES)} features, got {len(values)}")
        return cls(*(float(v) for v in values))


def entropy_bits(counts: Iterable[int]) -> float:
    counts = [c for c in counts if c > 0]
    total = sum(counts)
    if total == 0 or len(counts) == 1:
        return 0.0
    h = 0.0
    for c in counts:
        q = c / total
        h -= q * math.log2(q)
    return h


def extract_features(f: FlowState) -> FeatureVector:
    n = f.pkt_count
    duration = f.last_ts - f.first_ts
    return FeatureVector(
        duration=duration,
        pkt_count=float(n),
        mean_pkt_size=f.byte_sum / n,
        byte_rate=f.byte_sum / max(duration, MIN_DURATION),
        mean_iat=f.iat_sum / (n - 1) if n >= 2 else 0.0,
        dst_port_entropy=entropy_bits(f.dst_port_counts.values()),
        size_min=float(f.size_min),
        size_max=float(f.size_max),
        fwd_ratio=f.fwd_pkt_count / n,
        syn_count=float(f.syn_count),
        fin_count=float(f.fin_count),
        rst_count=float(f.rst_count),
    )


def feature_matrix(flows: Sequence[FlowState]) -> np.ndarray:
    out = np.empty((len(flows), len(FEATURE_NAMES)), dtype=np.float64)
    for i, f in enumerate(flows):
        out[i] = dataclasses.astuple(extract_features(f))
    return out


# ---------------------------------------------------------------------------
# normalization

@dataclasses.dataclass(frozen=True)
class NormalizationStats:
    names: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray

    def to_dict(self) -> dict:
        return {"names": list(self.names), "mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "NormalizationStats":
        return cls(tuple(d["names"]), np.asarray(d["mean"], dtype=np.float64),
                   np.asarray(d["std"], dtype=np.float64))

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != len(self.names):
            raise SchemaMismatch(f"expected {len(self.names)} features, got {X.shape[-1]}")
        safe = np.where(self.std > 0, self.std, 1.0)
        return np.where(self.std > 0, (X - self.mean) / safe, 0.0)


def _as_matrix(rows) -> np.ndarray:
    if isinstance(rows, np.ndarray):
        return np.asarray(rows, dtype=np.float64)
    return np.array([r.as_array() if isinstance(r, FeatureVector) else r for r in rows],
                    dtype=np.float64)


def fit_normalizer(rows, names: Sequence[str] = FEATURE_NAMES) -> NormalizationStats:
    X = _as_matrix(rows)
    if X.ndim != 2 or X.shape[0] < 2:
        raise InsufficientData("normalizer needs at least 2 rows")
    if X.shape[1] != len(names):
        raise SchemaMismatch(f"{X.shape[1]} columns for {len(names)} feature names")
    mean = X.mean(axis=0)
    std = X.std(axis=0)  # population
    return NormalizationStats(tuple(names), mean, std)


def normalize(v, s: NormalizationStats) -> np.ndarray:
    """Z-score one vector. Zero-variance features map to 0."""
    if isinstance(v, FeatureVector):
        if tuple(FEATURE_NAMES) != s.names:
            raise SchemaMismatch("normalizer was fit on a different feature schema")
        x = v.as_array()
    elif isinstance(v, Mapping):
        if set(v) != set(s.names):
            raise SchemaMismatch(f"feature sets differ: {sorted(set(v) ^ set(s.names))}")
        x = np.array([v[n] for n in s.names], dtype=np.float64)
    else:
        x = np.asarray(v, dtype=np.float64)
    return s.transform(x)


# ---------------------------------------------------------------------------
# CSV inputs

PACKET_HEADER = ("ts", "src_ip", "dst_ip", "src_port", "dst_port", "proto", "len", "flags")


def write_packet_csv(path, packets: Iterable[PacketRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PACKET_HEADER)
        for p in packets:
            w.writerow([f"{p.ts:.6f}", p.src_ip, p.dst_ip, p.src_port, p.dst_port,
                        p.protocol.value, p.length, "" if p.tcp_flags is None else p.tcp_flags])


def read_packet_csv(path) -> list[PacketRecord]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in PACKET_HEADER if c not in (reader.fieldnames or ())]
        if missing:
            raise MissingColumn(f"packet trace lacks columns {missing}")
        for i, row in enumerate(reader):
            try:
                flags = row["flags"].strip()
                out.append(PacketRecord(
                    ts=float(row["ts"]), src_ip=row["src_ip"], dst_ip=row["dst_ip"],
                    src_port=int(row["src_port"]), dst_port=int(row["dst_port"]),
                    protocol=Protocol.parse(row["proto"]), length=int(row["len"]),
                    tcp_flags=int(flags) if flags else None))
            except ValueError as exc:
                raise UnparsableCell(i, "?", str(exc)) from None
    return out


@dataclasses.dataclass
class FlowSchema:
    """Column mapping from a flow CSV onto :data:`FEATURE_NAMES`.

    Each feature spec is one of::

        {"column": name, "scale": 1.0}
        {"sum": [name, ...], "scale": 1.0}
        {"ratio": [numerator, [denominator columns...]]}
        {"constant": value}

    A bare string is shorthand for ``{"column": string}``.
    """

    features: dict[str, object]
    label_column: str | None = "label"
    label_map: dict[str, str] = dataclasses.field(default_factory=dict)

    @classmethod
    def identity(cls) -> "FlowSchema":
        return cls({n: n for n in FEATURE_NAMES})

    @classmethod
    def from_dict(cls, d: Mapping) -> "FlowSchema":
        feats = dict(d.get("features", {}))
        missing = [n for n in FEATURE_NAMES if n not in feats]
        if missing:
            raise SchemaMismatch(f"schema does not map features {missing}")
        return cls(feats, d.get("label_column", "label"), dict(d.get("label_map", {})))

    @classmethod
    def load(cls, path) -> "FlowSchema":
        import yaml

        with open(path) as fh:
            return cls.from_dict(yaml.safe_load(fh))

    def columns(self) -> set[str]:
        cols = set()
        for spec in self.features.values():
            if isinstance(spec, str):
                cols.add(spec)
            elif "column" in spec:
                cols.add(spec["column"])
            elif "sum" in spec:
                cols.update(spec["sum"])
            elif "ratio" in spec:
                num, den = spec["ratio"]
                cols.add(num)
                cols.update(den)
        return cols

    def map_label(self, raw: str) -> Label:
        raw = str(raw).strip()
        return parse_label(self.label_map.get(raw, raw))


# InSDN ships CICFlowMeter CSVs; port entropy is not among their columns.
INSDN_SCHEMA = {
    "features": {
        "duration": {"column": "Flow Duration", "scale": 1e-6},
        "pkt_count": {"sum": ["Tot Fwd Pkts", "Tot Bwd Pkts"]},
        "mean_pkt_size": "Pkt Len Mean",
        "byte_rate": "Flow Byts/s",
        "mean_iat": {"column": "Flow IAT Mean", "scale": 1e-6},
        "dst_port_entropy": {"constant": 0.0},
        "size_min": "Pkt Len Min",
        "size_max": "Pkt Len Max",
        "fwd_ratio": {"ratio": ["Tot Fwd Pkts", ["Tot Fwd Pkts", "Tot Bwd Pkts"]]},
        "syn_count": "SYN Flag Cnt",
        "fin_count": "FIN Flag Cnt",
        "rst_count": "RST Flag Cnt",
    },
    "label_column": "Label",
    "label_map": {"Web-Attack": "Web", "BFA": "BruteForce", "BOTNET": "Botnet", "U2R": "Exploit"},
}


def _numeric_column(frame, col: str) -> np.ndarray:
    import pandas as pd

    raw = frame[col]
    vals = pd.to_numeric(raw, errors="coerce")
    blank = raw.isna() | (raw.astype(str).str.strip() == "")
    bad = vals.isna() & ~blank
    if bad.any():
        i = int(np.flatnonzero(bad.to_numpy())[0])
        raise UnparsableCell(i, col, str(raw.iloc[i]))
    out = vals.to_numpy(dtype=np.float64)
    out[~np.isfinite(out)] = np.nan
    if np.isnan(out).any():
        fill = np.nanmean(out) if np.isfinite(out).any() else 0.0
        out[np.isnan(out)] = fill
    return out


def load_flow_matrix(path, schema: FlowSchema | None = None) -> tuple[np.ndarray, list[Label]]:
    """Read a flow CSV into an (n, 12) matrix plus labels, in file order.

    Empty or non-finite numeric cells are replaced by their column mean.
    """
    import pandas as pd

    schema = schema or FlowSchema.identity()
    frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    frame.columns = [c.strip() for c in frame.columns]
    need = schema.columns() | ({schema.label_column} if schema.label_column else set())
    missing = sorted(need - set(frame.columns))
    if missing:
        raise MissingColumn(f"{path}: missing columns {missing}")
    cache: dict[str, np.ndarray] = {}

    def col(name: str) -> np.ndarray:
        if name not in cache:
            cache[name] = _numeric_column(frame, name)
        return cache[name]

    X = np.empty((len(frame), len(FEATURE_NAMES)), dtype=np.float64)
    for j, name in enumerate(FEATURE_NAMES):
        spec = schema.features[name]
        if isinstance(spec, str):
            spec = {"column": spec}
        scale = float(spec.get("scale", 1.0))
        if "column" in spec:
            v = col(spec["column"])
        elif "sum" in spec:
            v = sum(col(c) for c in spec["sum"])
        elif "ratio" in spec:
            num, den = spec["ratio"]
            d = sum(col(c) for c in den)
            v = np.divide(col(num), d, out=np.zeros(len(frame)), where=d != 0)
        elif "constant" in spec:
            v = np.full(len(frame), float(spec["constant"]))
        else:
            raise SchemaMismatch(f"feature {name!r}: unrecognised mapping {spec!r}")
        X[:, j] = v * scale
    labels: list[Label] = []
    if schema.label_column:
        for i, raw in enumerate(frame[schema.label_column]):
            try:
                labels.append(schema.map_label(raw))
            except ValueError:
                raise UnparsableCell(i, schema.label_column, raw) from None
    return X, labels


def load_flow_csv(path, schema: FlowSchema | None = None) -> tuple[list[FeatureVector], list[Label]]:
    X, labels = load_flow_matrix(path, schema)
    return [FeatureVector.from_array(r) for r in X], labels
