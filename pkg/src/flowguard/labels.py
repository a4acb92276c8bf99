"""Traffic class labels and their fixed severity ranking."""
from __future__ import annotations

import enum
import re


class Label(str, enum.Enum):
    NORMAL = "Normal"
    DOS = "DoS"
    DDOS = "DDoS"
    BRUTE_FORCE = "BruteForce"
    WEB = "Web"
    EXPLOIT = "Exploit"
    PROBE = "Probe"
    BOTNET = "Botnet"

    def __str__(self) -> str:
        return self.value


NORMAL = Label.NORMAL.value

# Higher wins argmax ties. Unknown labels rank below Normal.
SEVERITY_RANK = {
    "DDoS": 7,
    "DoS": 6,
    "Botnet": 5,
    "Exploit": 4,
    "BruteForce": 3,
    "Web": 2,
    "Probe": 1,
    "Normal": 0,
}

# Raw dataset spellings (InSDN, CIC tools, free text) folded onto the enum.
_ALIASES = {
    "normal": Label.NORMAL,
    "benign": Label.NORMAL,
    "dos": Label.DOS,
    "ddos": Label.DDOS,
    "bruteforce": Label.BRUTE_FORCE,
    "bfa": Label.BRUTE_FORCE,
    "web": Label.WEB,
    "webattack": Label.WEB,
    "webattacks": Label.WEB,
    "exploit": Label.EXPLOIT,
    "exploits": Label.EXPLOIT,
    "u2r": Label.EXPLOIT,
    "probe": Label.PROBE,
    "probing": Label.PROBE,
    "botnet": Label.BOTNET,
}


def severity_rank(label: str) -> int:
    return SEVERITY_RANK.get(str(label), -1)


def parse_label(raw: str) -> Label:
    """Map a dataset label string onto :class:`Label`.

    Matching ignores case, spaces, dashes and underscores, so
    ``"Web-Attack"``, ``"Brute Force"`` and ``"BOTNET"`` all resolve.
    """
    key = re.sub(r"[\s\-_]", "", str(raw)).lower()
    try:
        return _ALIASES[key]
    except KeyError:
        raise ValueError(f"unknown traffic label {raw!r}") from None


def is_attack(label: str) -> bool:
    return str(label) != NORMAL
