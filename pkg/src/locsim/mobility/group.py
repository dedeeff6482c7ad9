"""Group mobility models: members move relative to a shared reference."""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Any

from .entity import clamp_inside, random_disc, step_random_waypoint
from .params import MobilityState, ModelParams

GROUP_MODELS = ("ecr", "column", "nomadic", "pursue", "rpgm")


@dataclass
class GroupState:
    """``reference`` is the logical centre, target or line anchor depending on the model."""

    reference: MobilityState
    members: list[tuple[float, float]]
    offsets: list[tuple[float, float]] = field(default_factory=list)
    memory: dict[str, Any] = field(default_factory=dict)

    def copy(self) -> "GroupState":
        return GroupState(self.reference.copy(), list(self.members), list(self.offsets), dict(self.memory))


def _clamp(p: tuple[float, float], params: ModelParams) -> tuple[float, float]:
    return clamp_inside(p[0], params.width), clamp_inside(p[1], params.height)


def _column_offsets(n: int, spacing: float, advance: tuple[float, float]) -> list[tuple[float, float]]:
    ang = math.atan2(advance[1], advance[0]) + math.pi / 2
    ux, uy = math.cos(ang), math.sin(ang)
    mid = (n - 1) / 2
    return [((k - mid) * spacing * ux, (k - mid) * spacing * uy) for k in range(n)]


def reference_points(g: GroupState, params: ModelParams) -> list[tuple[float, float]]:
    """Per-member reference points (clamped into the area)."""
    return [_clamp((g.reference.x + ox, g.reference.y + oy), params) for ox, oy in g.offsets]


def init_group(model: str, n_members: int, params: ModelParams, rng: random.Random) -> GroupState:
    if model not in GROUP_MODELS:
        raise ValueError(f"unknown group model {model!r}")
    if n_members < 1:
        raise ValueError("a group needs at least one member")
    cx, cy = params.width / 2, params.height / 2
    if model == "ecr":
        ref = MobilityState(cx, cy)
        g = GroupState(ref, [(cx, cy)] * n_members, [(0.0, 0.0)] * n_members, {"centre_offset": (0.0, 0.0)})
    elif model == "column":
        offsets = _column_offsets(n_members, params.group_radius, params.advance_vector)
        span = max([math.hypot(*o) for o in offsets] + [0.0]) + params.group_radius
        ref = MobilityState(
            rng.uniform(min(span, cx), max(params.width - span, cx)),
            rng.uniform(min(span, cy), max(params.height - span, cy)),
        )
        g = GroupState(ref, [], offsets, {"advance": tuple(params.advance_vector)})
    else:
        ref = MobilityState(rng.uniform(0.0, params.width), rng.uniform(0.0, params.height))
        if model == "rpgm":
            offsets = [
                (params.group_radius * math.cos(2 * math.pi * k / n_members),
                 params.group_radius * math.sin(2 * math.pi * k / n_members)) if n_members > 1 else (0.0, 0.0)
                for k in range(n_members)
            ]
        else:
            offsets = [(0.0, 0.0)] * n_members
        g = GroupState(ref, [], offsets)
    if not g.members:
        g.members = reference_points(g, params)
    return g


def step_group(model: str, group: GroupState, params: ModelParams, rng: random.Random) -> GroupState:
    if model not in GROUP_MODELS:
        raise ValueError(f"unknown group model {model!r}")
    if not group.members:
        raise ValueError("a group needs at least one member")
    g = group.copy()
    if model == "ecr":
        return _step_ecr(g, params, rng)
    if model == "column":
        return _step_column(g, params, rng)
    g.reference = step_random_waypoint(g.reference, params, rng)
    target = (g.reference.x, g.reference.y)
    if model == "nomadic":
        stride = 0.25 * params.group_radius
        offsets = []
        for ox, oy in g.offsets:
            dx, dy = random_disc(stride, rng)
            ox, oy = ox + dx, oy + dy
            r = math.hypot(ox, oy)
            if r > params.group_radius:
                ox, oy = ox * params.group_radius / r, oy * params.group_radius / r
            offsets.append((ox, oy))
        g.offsets = offsets
        g.members = reference_points(g, params)
    elif model == "pursue":
        k = params.pursuit_gain
        members = []
        for mx, my in g.members:
            nx_, ny_ = random_disc(params.pursuit_noise, rng)
            members.append(_clamp((mx + k * (target[0] - mx) + nx_, my + k * (target[1] - my) + ny_), params))
        g.members = members
    else:  # rpgm
        members = []
        for rx, ry in reference_points(g, params):
            dx, dy = random_disc(params.rpgm_deviation_max, rng)
            members.append(_clamp((rx + dx, ry + dy), params))
        g.members = members
    return g


def _step_ecr(g: GroupState, params: ModelParams, rng: random.Random) -> GroupState:
    decay = math.exp(-1.0 / params.ecr_tau)
    spread = math.sqrt(1.0 - math.exp(-2.0 / params.ecr_tau))

    def ou(v: float, sigma: float) -> float:
        return v * decay + sigma * spread * rng.gauss(0.0, 1.0)

    cx0, cy0 = params.width / 2, params.height / 2
    ox, oy = g.memory["centre_offset"]
    ox, oy = ou(ox, params.ecr_sigma), ou(oy, params.ecr_sigma)
    g.memory["centre_offset"] = (ox, oy)
    g.reference.x, g.reference.y = _clamp((cx0 + ox, cy0 + oy), params)
    g.offsets = [(ou(a, params.ecr_member_sigma), ou(b, params.ecr_member_sigma)) for a, b in g.offsets]
    g.members = [_clamp((cx0 + ox + a, cy0 + oy + b), params) for a, b in g.offsets]
    return g


def _step_column(g: GroupState, params: ModelParams, rng: random.Random) -> GroupState:
    ax, ay = g.memory["advance"]
    ref = g.reference
    nxt = [(ref.x + ax + ox, ref.y + ay + oy) for ox, oy in g.offsets]
    if any(not (0.0 <= x < params.width and 0.0 <= y < params.height) for x, y in nxt):
        ax, ay = -ax, -ay
        g.memory["advance"] = (ax, ay)
    ref.x = clamp_inside(ref.x + ax, params.width)
    ref.y = clamp_inside(ref.y + ay, params.height)
    members = []
    for rx, ry in reference_points(g, params):
        dx, dy = random_disc(params.group_radius, rng)
        members.append(_clamp((rx + dx, ry + dy), params))
    g.members = members
    return g
