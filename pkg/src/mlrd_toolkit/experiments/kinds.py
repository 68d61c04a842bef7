from __future__ import annotations

from enum import Enum


class Experiment(str, Enum):
    CLT = "clt"
    FCLT = "fclt"
    SUBORDINATION = "subordination"
    AUTOCOV = "autocov"
