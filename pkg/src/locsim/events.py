"""Event payloads shared by the mobility, traffic and engine modules."""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Move:
    t: float
    user: int
    src: str
    dst: str


@dataclass(frozen=True)
class CallArrival:
    t: float
    caller: int
    callee: int
