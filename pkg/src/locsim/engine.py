"""Deterministic event loop, metrics ledger and CMR sweeps."""
from __future__ import annotations

import hashlib
import heapq
import os
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterator, Optional, Sequence, Union

from .events import CallArrival, Move
from .mobility import emit_zone_crossings, generate_trace, initial_zones, matrix_walk
from .schemes import KINDS, ConsistencyError, MessageLog, make_scheme
from .traffic import assign_preferred_sets, next_call_time, pick_callee

CSV_COLUMNS = (
    "scheme", "cmr", "seed", "db_reads", "db_writes", "messages_update", "messages_dereg",
    "messages_lookup", "messages_replica", "messages_invalidate", "hop_cost", "lookups_total",
    "lookups_local", "mean_lookup_hops", "local_ratio",
)


class SimulationAbort(RuntimeError):
    def __init__(self, index: int, event, reason: str):
        super().__init__(f"consistency violation at event {index} ({event}): {reason}")
        self.index = index
        self.event = event
        self.reason = reason


@dataclass(frozen=True)
class Event:
    time: float
    seq: int
    payload: Union[Move, CallArrival]


@dataclass
class MetricsLedger:
    db_reads: int = 0
    db_writes: int = 0
    messages: dict[str, int] = field(default_factory=lambda: dict.fromkeys(KINDS, 0))
    hop_cost: float = 0.0
    lookup_hops: float = 0.0
    calls: int = 0
    moves: int = 0
    lookups_total: int = 0
    lookups_local: int = 0
    events: int = 0
    stream_digest: str = ""

    def add(self, log: MessageLog) -> None:
        for m in log.messages:
            self.db_reads += m.reads
            self.db_writes += m.writes
            self.hop_cost += m.hops
            if m.src != m.dst:
                self.messages[m.kind] += 1
            if m.kind == "lookup":
                self.lookup_hops += m.hops
        if log.call:
            self.calls += 1
            self.lookups_total += 1
            self.lookups_local += log.local

    def totals(self) -> dict:
        """Everything except the digest, for comparing ledgers."""
        return {
            "db_reads": self.db_reads, "db_writes": self.db_writes, "messages": dict(self.messages),
            "hop_cost": self.hop_cost, "lookup_hops": self.lookup_hops, "calls": self.calls,
            "moves": self.moves, "lookups_total": self.lookups_total, "lookups_local": self.lookups_local,
        }


def lookup_cost_ratio(ledger: MetricsLedger) -> tuple[Optional[float], Optional[float]]:
    """``(mean lookup hops per call, local / total lookups)``; ``(None, None)`` without calls."""
    if ledger.calls == 0 or ledger.lookups_total == 0:
        return None, None
    return ledger.lookup_hops / ledger.calls, ledger.lookups_local / ledger.lookups_total


def ledger_row(ledger: MetricsLedger, scheme: str, cmr, seed: int) -> dict:
    mean_hops, ratio = lookup_cost_ratio(ledger)
    return {
        "scheme": scheme,
        "cmr": "" if cmr is None else repr(float(cmr)),
        "seed": seed,
        "db_reads": ledger.db_reads,
        "db_writes": ledger.db_writes,
        "messages_update": ledger.messages["update"],
        "messages_dereg": ledger.messages["deregister"],
        "messages_lookup": ledger.messages["lookup"],
        "messages_replica": ledger.messages["replicaUpdate"],
        "messages_invalidate": ledger.messages["invalidate"],
        "hop_cost": repr(float(ledger.hop_cost)),
        "lookups_total": ledger.lookups_total,
        "lookups_local": ledger.lookups_local,
        "mean_lookup_hops": "" if mean_hops is None else repr(mean_hops),
        "local_ratio": "" if ratio is None else repr(ratio),
    }


def substream(seed: int, name: str) -> random.Random:
    """Independent named stream; adding a consumer never shifts the others."""
    return random.Random(f"locsim:{seed}:{name}")


# -- event generation ----------------------------------------------------------------


@dataclass
class Setup:
    zones: dict[int, str]
    preferred: dict[int, list[int]]
    move_rate: float
    moves: Optional[list[Move]] = None
    # end of the mobility data; calls past it would see users frozen in place
    duration: Optional[float] = None


def prepare(scenario, seed: int) -> Setup:
    """Initial zones, preferred sets and (for trace or model mobility) the move list."""
    users = list(range(scenario.users))
    setup_rng = substream(seed, "setup")
    tree, grid = scenario.tree, scenario.grid
    source = scenario.mobility
    moves = None
    duration = None
    if source == "matrix-walk":
        zones = {u: tree.leaves[setup_rng.randrange(len(tree.leaves))] for u in users}
        move_rate = scenario.move_rate
    else:
        if source == "trace":
            imported = scenario.trace
            moves = imported.to_moves(grid)
            if imported.is_zone_events:
                zones = {}
                for m in moves:
                    zones.setdefault(m.user, m.src)
            else:
                zones = initial_zones(imported.records, grid)
            duration = scenario.trace_duration()
        else:
            mob_rng = substream(seed, "mobility")
            records = generate_trace(
                source, scenario.users, scenario.model_params, scenario.mobility_duration, mob_rng,
                group_size=scenario.group_size,
            )
            moves = emit_zone_crossings(records, grid)
            zones = initial_zones(records, grid)
            duration = scenario.mobility_duration
        for u in users:
            zones.setdefault(u, tree.leaves[setup_rng.randrange(len(tree.leaves))])
        # calibration pass: empirical per-user move rate
        move_rate = len(moves) / (len(users) * duration) if duration > 0 else 0.0
    preferred = assign_preferred_sets(users, scenario.calls.preferred_size, setup_rng)
    end = None
    if source == "trace":
        times = [r.t for r in scenario.trace.records] or [m.t for m in moves]
        end = max(times) if times else 0.0
    elif moves is not None:
        end = duration
    return Setup(zones, preferred, move_rate, moves, end)


def event_stream(scenario, seed: int, cmr: Optional[float] = None, setup: Optional[Setup] = None) -> Iterator[Event]:
    """Merged move and call events in ``(time, seq)`` order, scheme-independent."""
    setup = setup or prepare(scenario, seed)
    users = list(range(scenario.users))
    mob_rng = substream(seed, "mobility-walk")
    call_rng = substream(seed, "calls")
    callee_rng = substream(seed, "callee")
    calls = scenario.calls
    if cmr is not None:
        calls = replace(calls, cmr=cmr)
    call_rate = calls.rate_for(setup.move_rate)
    zones = dict(setup.zones)

    heap: list = []
    seq = 0

    def push(t: float, kind: int, data) -> None:
        nonlocal seq
        heapq.heappush(heap, (t, seq, kind, data))
        seq += 1

    # kinds: 0 = scheduled move, 1 = matrix-walk move timer, 2 = call timer, 3 = scheduled call
    if setup.moves is not None:
        for m in setup.moves:
            push(m.t, 0, m)
    else:
        for u in users:
            if setup.move_rate > 0:
                push(mob_rng.expovariate(setup.move_rate), 1, u)
    if scenario.call_trace is not None:
        for c in scenario.call_trace:
            push(c.t, 3, c)
    else:
        for u in users:
            t = next_call_time(0.0, call_rate, call_rng)
            if t is not None:
                push(t, 2, u)

    horizon_t = scenario.horizon_time
    if horizon_t is None:
        horizon_t = setup.duration
    while heap:
        t, s, kind, data = heapq.heappop(heap)
        if horizon_t is not None and t > horizon_t:
            return
        if kind == 0:
            if data.src != data.dst:
                yield Event(t, s, data)
        elif kind == 1:
            u = data
            nxt = matrix_walk(zones[u], scenario.grid, mob_rng)
            push(t + mob_rng.expovariate(setup.move_rate), 1, u)
            if nxt != zones[u]:
                ev = Move(t, u, zones[u], nxt)
                zones[u] = nxt
                yield Event(t, s, ev)
        elif kind == 2:
            u = data
            callee = pick_callee(u, users, setup.preferred[u], calls.preferred_prob, callee_rng)
            push(next_call_time(t, call_rate, call_rng), 2, u)
            yield Event(t, s, CallArrival(t, u, callee))
        else:
            yield Event(t, s, data)


# -- run -------------------------------------------------------------------------------


def run(
    scenario,
    *,
    scheme: Optional[str] = None,
    cmr: Optional[float] = None,
    seed: Optional[int] = None,
    check: str = "off",
    full_check_every: int = 1000,
    logs: Optional[list] = None,
) -> MetricsLedger:
    """Process the scenario's events through one scheme.

    ``check`` is ``"off"``, ``"touched"`` (verify the users an event touched
    after every event, plus a full sweep every ``full_check_every`` events)
    or ``"full"`` (every user after every event). ``logs`` collects each
    event's ``MessageLog`` when given.
    """
    seed = scenario.seed if seed is None else seed
    name = scheme or scenario.scheme
    if scenario.horizon_events is None and scenario.horizon_time is None and scenario.mobility == "matrix-walk":
        raise ValueError("matrix-walk mobility needs horizon_events or horizon_time")
    setup = prepare(scenario, seed)
    sch = make_scheme(name, scenario.tree, scenario.ws)
    for u in range(scenario.users):
        sch.register(u, setup.zones[u])
    ledger = MetricsLedger()
    digest = hashlib.sha256()
    limit = scenario.horizon_events
    where = dict(setup.zones)
    for i, ev in enumerate(event_stream(scenario, seed, cmr, setup)):
        if limit is not None and i >= limit:
            break
        p = ev.payload
        try:
            if isinstance(p, Move):
                if where.get(p.user) != p.src:
                    # trace moves may skip over zones the trace never reported
                    p = Move(p.t, p.user, where[p.user], p.dst)
                log = sch.on_move(p.user, p.src, p.dst, ev.time)
                where[p.user] = p.dst
                ledger.moves += bool(log.messages)
                touched = (p.user,)
                digest.update(f"{ev.time!r} {ev.seq} m {p.user} {p.src} {p.dst}\n".encode())
            else:
                log = sch.on_call(where[p.caller], p.callee, ev.time)
                touched = (p.callee,)
                digest.update(f"{ev.time!r} {ev.seq} c {p.caller} {p.callee}\n".encode())
            if check != "off":
                users = None if check == "full" or (i + 1) % full_check_every == 0 else touched
                problems = sch.violations(users)
                if problems:
                    raise ConsistencyError(problems[0])
        except ConsistencyError as exc:
            raise SimulationAbort(i, p, str(exc)) from exc
        ledger.add(log)
        ledger.events += 1
        if logs is not None:
            logs.append(log)
    if check != "off":
        problems = sch.violations()
        if problems:
            raise SimulationAbort(ledger.events, None, problems[0])
    ledger.stream_digest = digest.hexdigest()
    return ledger


def _run_cell(args) -> tuple:
    scenario, name, cmr, seed = args
    led = run(scenario, scheme=name, cmr=cmr, seed=seed)
    return name, cmr, seed, led


def sweep_cmr(
    scenario,
    cmr_values: Sequence[float],
    schemes: Sequence[str],
    seeds: Optional[Sequence[int]] = None,
    *,
    workers: Optional[int] = None,
) -> list[tuple[str, float, int, MetricsLedger]]:
    """One run per (cmr, seed, scheme), schemes sharing event streams at equal cmr and seed."""
    if not cmr_values or any(c <= 0 for c in cmr_values):
        raise ValueError("cmr values must be a non-empty list of positive numbers")
    if not schemes:
        raise ValueError("at least one scheme is required")
    seeds = list(seeds) if seeds else [scenario.seed]
    cells = [(scenario, s, c, seed) for c in cmr_values for seed in seeds for s in schemes]
    if workers is None:
        workers = int(os.environ.get("LOCSIM_THREADS", "1") or 1)
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_cell, cells))
    return [_run_cell(c) for c in cells]
