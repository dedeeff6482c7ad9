"""Trajectory sampling, zone-crossing extraction and trace file I/O."""
from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from ..events import Move
from ..fileio import atomic_write_text
from ..topology import ZoneGrid
from .entity import ENTITY_MODELS, StreetGrid, init_state, step_city_section
from .group import GROUP_MODELS, init_group, step_group
from .params import ModelParams

MOBTRACE_HEADER = "#mobtrace v1"
ZONETRACE_HEADER = "#zonetrace v1"


@dataclass(frozen=True)
class TraceRecord:
    t: float
    node: int
    x: float
    y: float


def generate_trace(
    model: str,
    n_nodes: int,
    params: ModelParams,
    duration: float,
    rng: random.Random,
    *,
    group_size: int = 5,
) -> list[TraceRecord]:
    """Sample every node's position every ``step_time`` seconds over ``[0, duration]``."""
    params.validate()
    if model not in ENTITY_MODELS and model not in GROUP_MODELS:
        raise ValueError(f"unknown mobility model {model!r}")
    steps = int(duration / params.step_time + 1e-9)
    out: list[TraceRecord] = []
    if model in ENTITY_MODELS:
        step = ENTITY_MODELS[model]
        streets = StreetGrid.from_params(params) if model == "city-section" else None
        states = [init_state(model, params, rng, streets) for _ in range(n_nodes)]
        for k in range(steps + 1):
            t = k * params.step_time
            if k:
                if streets is not None:
                    states = [step_city_section(s, params, rng, streets) for s in states]
                else:
                    states = [step(s, params, rng) for s in states]
            out.extend(TraceRecord(t, i, s.x, s.y) for i, s in enumerate(states))
        return out
    sizes = [min(group_size, n_nodes - i) for i in range(0, n_nodes, group_size)]
    groups = [init_group(model, n, params, rng) for n in sizes]
    for k in range(steps + 1):
        t = k * params.step_time
        if k:
            groups = [step_group(model, g, params, rng) for g in groups]
        node = 0
        for g in groups:
            for x, y in g.members:
                out.append(TraceRecord(t, node, x, y))
                node += 1
    return out


def emit_zone_crossings(records: Iterable[TraceRecord], grid: ZoneGrid) -> list[Move]:
    """One ``Move`` per change of zone between consecutive samples of a node."""
    last: dict[int, str] = {}
    moves: list[Move] = []
    for r in records:
        z = grid.zone_of(r.x, r.y)
        prev = last.get(r.node)
        if prev is not None and prev != z:
            moves.append(Move(r.t, r.node, prev, z))
        last[r.node] = z
    return moves


def initial_zones(records: Iterable[TraceRecord], grid: ZoneGrid) -> dict[int, str]:
    first: dict[int, str] = {}
    for r in records:
        if r.node not in first:
            first[r.node] = grid.zone_of(r.x, r.y)
    return first


def matrix_walk(zone: str, grid: ZoneGrid, rng: random.Random) -> str:
    """Draw the next zone from ``zone``'s crossing-probability row."""
    row = grid.move_matrix.get(zone)
    if not row:
        raise ValueError(f"zone {zone!r} has no movement-matrix row")
    u = rng.random()
    acc = 0.0
    for nb, p in row:
        acc += p
        if u < acc:
            return nb
    return next(nb for nb, p in reversed(row) if p > 0)


# -- files ---------------------------------------------------------------------


def write_trace(path, records: Iterable[TraceRecord], width: float, height: float) -> None:
    lines = [f"{MOBTRACE_HEADER} {width!r} {height!r}"]
    lines += [f"{r.t!r} {r.node} {r.x!r} {r.y!r}" for r in records]
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_zone_events(path, moves: Iterable[Move]) -> None:
    lines = [ZONETRACE_HEADER]
    lines += [f"{m.t!r} {m.user} {m.src} {m.dst}" for m in moves]
    atomic_write_text(path, "\n".join(lines) + "\n")


@dataclass
class ImportedTrace:
    """Either sampled positions (``records``) or ready-made zone events (``moves``)."""

    records: list[TraceRecord]
    moves: list[Move]
    width: float = 0.0
    height: float = 0.0

    @property
    def is_zone_events(self) -> bool:
        return not self.records and bool(self.moves)

    def to_moves(self, grid: ZoneGrid) -> list[Move]:
        return self.moves if self.is_zone_events else emit_zone_crossings(self.records, grid)


def read_trace(path) -> ImportedTrace:
    """Read a ``#mobtrace`` or ``#zonetrace`` file.

    Headerless files are sniffed: a line whose last two fields parse as
    floats is a position sample, otherwise a zone event.
    """
    text = Path(path).read_text()
    records: list[TraceRecord] = []
    moves: list[Move] = []
    width = height = 0.0
    kind = None
    last_t: dict[int, float] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if line.startswith(MOBTRACE_HEADER):
                kind = "pos"
                parts = line.split()
                if len(parts) >= 4:
                    width, height = float(parts[2]), float(parts[3])
            elif line.startswith(ZONETRACE_HEADER):
                kind = "zone"
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ValueError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
        if kind is None:
            try:
                float(parts[2]), float(parts[3])
                kind = "pos"
            except ValueError:
                kind = "zone"
        t, node = float(parts[0]), int(parts[1])
        if t < last_t.get(node, float("-inf")):
            raise ValueError(f"{path}:{lineno}: time goes backwards for node {node}")
        last_t[node] = t
        if kind == "pos":
            records.append(TraceRecord(t, node, float(parts[2]), float(parts[3])))
        else:
            moves.append(Move(t, node, parts[2], parts[3]))
    return ImportedTrace(records, moves, width, height)
