"""Closed-loop SDN intrusion detection, tamper-evident alert logging and QoS enforcement."""

__version__ = "0.1.0"
