"""Threshold-gated, tamper-evident alert ledger with simulated endorsement."""
from .chain import (
    GENESIS,
    Accepted,
    AlertTransaction,
    BelowThreshold,
    Block,
    EndorsementPolicy,
    Ledger,
    Ok,
    Peer,
    QueryRecord,
    Rejected,
    SigningIdentity,
    TamperedAt,
    compute_digest,
    export_json_lines,
    load_chain,
    query,
    read_chain,
    seal_transaction,
    verify_bytes,
    verify_chain,
    verify_file,
    write_chain,
)
from .codec import decode_payload, encode_payload
from .latency import LatencyModel, LatencyRow, measure_txn_latency

__all__ = [
    "GENESIS",
    "Accepted",
    "AlertTransaction",
    "BelowThreshold",
    "Block",
    "EndorsementPolicy",
    "Ledger",
    "Ok",
    "Peer",
    "QueryRecord",
    "Rejected",
    "SigningIdentity",
    "TamperedAt",
    "compute_digest",
    "export_json_lines",
    "load_chain",
    "query",
    "read_chain",
    "seal_transaction",
    "verify_bytes",
    "verify_chain",
    "verify_file",
    "write_chain",
    "decode_payload",
    "encode_payload",
    "LatencyModel",
    "LatencyRow",
    "measure_txn_latency",
]
