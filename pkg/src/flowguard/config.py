"""Run configuration: one serializable bundle whose content hash stamps every artifact."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from pathlib import Path

from .errors import ConfigError
from .policy import PolicyConfig

HASH_CHARS = 16


@dataclasses.dataclass
class LedgerParams:
    peers: int = 2
    required: int = 2
    block_size: int = 10
    block_timeout: float = 2.0


@dataclasses.dataclass
class RunConfig:
    data: str | None = None
    schema: str | None = None
    model: str | None = None
    scenario: str | None = None
    out: str = "out"
    seed: int = 0
    weights: dict = dataclasses.field(default_factory=dict)   # member name -> weight
    fusion: str = "soft"
    theta: float = 0.5
    tau: float = 5.0
    trees: int = 100
    stages: int = 50
    policy: PolicyConfig = dataclasses.field(default_factory=PolicyConfig)
    ledger: LedgerParams = dataclasses.field(default_factory=LedgerParams)

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ConfigError(f"theta must lie in [0, 1], got {self.theta}")
        if self.tau <= 0:
            raise ConfigError("tau must be positive")
        if self.fusion not in ("soft", "hard"):
            raise ConfigError(f"fusion must be soft or hard, not {self.fusion!r}")

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        d["policy"] = self.policy.to_dict()
        d["ledger"] = dataclasses.asdict(self.ledger)
        d["weights"] = dict(sorted(self.weights.items()))
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        try:
            policy = PolicyConfig.from_dict(d.pop("policy", {}))
            ledger = LedgerParams(**d.pop("ledger", {}))
            return cls(policy=policy, ledger=ledger, **d)
        except TypeError as exc:
            raise ConfigError(f"bad run config: {exc}") from None

    @classmethod
    def load(cls, path) -> "RunConfig":
        import yaml

        try:
            doc = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"config {path} is not a mapping")
        return cls.from_dict(doc)

    def merged(self, **overrides) -> "RunConfig":
        """Copy with non-None overrides applied."""
        kw = {k: v for k, v in overrides.items() if v is not None}
        return dataclasses.replace(self, **kw)

    def canonical(self) -> str:
        """Hashed form; the output location does not influence results and is left out."""
        d = self.to_dict()
        d.pop("out")
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    def content_hash(self, *extra: str) -> str:
        """Hash of the config plus any extra identifying text (e.g. input file digests)."""
        h = hashlib.sha256(self.canonical().encode())
        for e in extra:
            h.update(b"\0" + e.encode())
        return h.hexdigest()[:HASH_CHARS]


def file_digest(path) -> str:
    """SHA-256 of a file, or of every CSV (name and bytes) in a directory."""
    path = Path(path)
    files = sorted(path.glob("*.csv")) if path.is_dir() else [path]
    h = hashlib.sha256()
    for f in files:
        if path.is_dir():
            h.update(f.name.encode() + b"\0")
        with open(f, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
    return h.hexdigest()
