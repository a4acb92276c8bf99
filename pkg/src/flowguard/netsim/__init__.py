"""Deterministic single-switch network simulator with a closed detection/enforcement loop."""
from .events import (ALERT, DELIVERED, DROPPED, PACKET_EVENTS, REDIRECTED, RULE, SKIPPED,
                     TXN_COMMITTED, TXN_SUBMITTED, EventLog, VirtualClock)
from .loop import NeverDetector, OracleDetector, SimResult, run_closed_loop
from .scenario import AppSpec, AttackSpec, DetectionConfig, ScenarioConfig, SwitchConfig, scripted_ddos
from .switch import (DEFAULT_RULE, Delivered, Dropped, InstallLatency, Redirected, SwitchModel,
                     TokenBucket)
from .traffic import OverCapacityConfig, Trace, generate_traffic, offered_mbps

__all__ = [
    "ALERT", "DELIVERED", "DROPPED", "PACKET_EVENTS", "REDIRECTED", "RULE", "SKIPPED",
    "TXN_COMMITTED", "TXN_SUBMITTED", "EventLog", "VirtualClock",
    "NeverDetector", "OracleDetector", "SimResult", "run_closed_loop",
    "AppSpec", "AttackSpec", "DetectionConfig", "ScenarioConfig", "SwitchConfig", "scripted_ddos",
    "DEFAULT_RULE", "Delivered", "Dropped", "InstallLatency", "Redirected", "SwitchModel", "TokenBucket",
    "OverCapacityConfig", "Trace", "generate_traffic", "offered_mbps",
]
