"""Call arrivals with a skewed callee distribution.

Each user calls a small fixed set of preferred peers with probability
``preferred_prob`` and anyone else otherwise, which is what gives the
working-set schemes something to exploit.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .events import CallArrival
from .fileio import atomic_write_text

CALLTRACE_HEADER = "#calltrace v1"


@dataclass
class CallParams:
    call_rate: float = 0.0
    preferred_size: int = 5
    preferred_prob: float = 0.8
    cmr: Optional[float] = None

    def problems(self) -> list[str]:
        out = []
        if self.call_rate < 0:
            out.append("call-rate must be non-negative")
        if self.preferred_size < 1:
            out.append("preferred-size must be at least 1")
        if not 0.0 <= self.preferred_prob <= 1.0:
            out.append("preferred-prob out of range [0, 1]")
        if self.cmr is not None and self.cmr <= 0:
            out.append("cmr must be positive")
        return out

    def rate_for(self, move_rate: float) -> float:
        """Per-user call rate; derived from the move rate when ``cmr`` is set."""
        return self.cmr * move_rate if self.cmr is not None else self.call_rate


def next_call_time(now: float, call_rate: float, rng: random.Random) -> Optional[float]:
    """Next Poisson arrival after ``now``, or ``None`` when the rate is zero."""
    if call_rate <= 0.0:
        return None
    gap = rng.expovariate(call_rate)
    while gap <= 0.0:
        gap = rng.expovariate(call_rate)
    return now + gap


def assign_preferred_sets(users: Sequence[int], k: int, rng: random.Random) -> dict[int, list[int]]:
    """Fixed per-run preferred peers; never includes the user itself."""
    out = {}
    for u in users:
        others = [v for v in users if v != u]
        out[u] = rng.sample(others, min(k, len(others)))
    return out


def pick_callee(
    caller: int,
    population: Sequence[int],
    preferred: Sequence[int],
    preferred_prob: float,
    rng: random.Random,
) -> int:
    if len(population) < 2:
        raise ValueError("need at least two users to place a call")
    if preferred and rng.random() < preferred_prob:
        return preferred[rng.randrange(len(preferred))]
    # uniform over everyone but the caller without building a new list
    i = rng.randrange(len(population) - 1)
    callee = population[i]
    if callee == caller:
        callee = population[-1]
    return callee


def write_call_trace(path, calls: Iterable[CallArrival]) -> None:
    lines = [CALLTRACE_HEADER] + [f"{c.t!r} {c.caller} {c.callee}" for c in calls]
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_call_trace(path) -> list[CallArrival]:
    calls = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"{path}:{lineno}: expected 't caller callee'")
        caller, callee = int(parts[1]), int(parts[2])
        if caller == callee:
            raise ValueError(f"{path}:{lineno}: user {caller} calls itself")
        calls.append(CallArrival(float(parts[0]), caller, callee))
    return calls
