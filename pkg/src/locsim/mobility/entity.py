"""Entity mobility models: every node moves independently.

Each ``step_*`` function advances one node by ``params.step_time`` seconds
and returns a new state; the input state is left untouched. ``rng`` is a
``random.Random`` owned by the caller.
"""
from __future__ import annotations

import math
import random
import warnings
from typing import Callable

import networkx as nx

from .params import MobilityState, ModelParams

TWO_PI = 2.0 * math.pi


def _below(hi: float) -> float:
    return math.nextafter(hi, 0.0)


def clamp_inside(v: float, hi: float) -> float:
    """Clamp to the half-open interval ``[0, hi)``."""
    if v < 0.0:
        return 0.0
    if v >= hi:
        return _below(hi)
    return v


def _fold(v: float, hi: float) -> tuple[float, bool]:
    """Mirror ``v`` back into ``[0, hi]``; report whether it was mirrored an odd number of times."""
    flipped = False
    while v < 0.0 or v > hi:
        v = -v if v < 0.0 else 2.0 * hi - v
        flipped = not flipped
    return v, flipped


def reflect_move(s: MobilityState, dist: float, params: ModelParams) -> None:
    """Advance ``s`` by ``dist`` along its heading, bouncing off the walls."""
    x = s.x + dist * math.cos(s.direction)
    y = s.y + dist * math.sin(s.direction)
    x, fx = _fold(x, params.width)
    y, fy = _fold(y, params.height)
    d = s.direction
    if fx:
        d = math.pi - d
    if fy:
        d = -d
    s.direction = d % TWO_PI
    s.x = clamp_inside(x, params.width)
    s.y = clamp_inside(y, params.height)


def random_disc(radius: float, rng: random.Random) -> tuple[float, float]:
    r = radius * math.sqrt(rng.random())
    a = rng.uniform(0.0, TWO_PI)
    return r * math.cos(a), r * math.sin(a)


# -- random walk ---------------------------------------------------------------


def step_random_walk(state: MobilityState, params: ModelParams, rng: random.Random) -> MobilityState:
    s = state.copy()
    m = s.memory
    if m.get("leg_left", 0.0) <= 0.0:
        s.speed = rng.uniform(params.min_speed, params.max_speed)
        s.direction = rng.uniform(0.0, TWO_PI)
        m["leg_start"] = (s.x, s.y)
        if params.leg_distance is not None and s.speed > 0:
            m["leg_left"] = params.leg_distance / s.speed
        else:
            m["leg_left"] = params.leg_time
    reflect_move(s, s.speed * params.step_time, params)
    m["leg_left"] -= params.step_time
    return s


# -- random waypoint -----------------------------------------------------------


def step_random_waypoint(state: MobilityState, params: ModelParams, rng: random.Random) -> MobilityState:
    if params.min_speed == 0.0:
        warnings.warn("random waypoint with min_speed = 0 suffers speed decay", RuntimeWarning, stacklevel=2)
    s = state.copy()
    m = s.memory
    budget = params.step_time
    for _ in range(10_000):
        if budget <= 0.0:
            break
        pause = m.get("pause_left", 0.0)
        if pause > 0.0:
            used = min(pause, budget)
            m["pause_left"] = pause - used
            budget -= used
            continue
        wp = m.get("waypoint")
        if wp is None:
            wp = (rng.uniform(0.0, params.width), rng.uniform(0.0, params.height))
            m["waypoint"] = wp
            s.speed = rng.uniform(params.min_speed, params.max_speed)
            s.direction = math.atan2(wp[1] - s.y, wp[0] - s.x) % TWO_PI
        dist = math.hypot(wp[0] - s.x, wp[1] - s.y)
        if s.speed <= 0.0:
            break
        if s.speed * budget >= dist:
            s.x = clamp_inside(wp[0], params.width)
            s.y = clamp_inside(wp[1], params.height)
            budget -= dist / s.speed
            m["waypoint"] = None
            m["pause_left"] = params.pause_time
        else:
            frac = s.speed * budget / dist
            s.x = clamp_inside(s.x + frac * (wp[0] - s.x), params.width)
            s.y = clamp_inside(s.y + frac * (wp[1] - s.y), params.height)
            budget = 0.0
    return s


# -- random direction ----------------------------------------------------------


def _inward_normal(s: MobilityState, params: ModelParams) -> tuple[float, float]:
    eps_x = 1e-9 * params.width
    eps_y = 1e-9 * params.height
    nx_, ny_ = 0.0, 0.0
    if s.x <= eps_x:
        nx_ = 1.0
    elif s.x >= params.width - eps_x:
        nx_ = -1.0
    if s.y <= eps_y:
        ny_ = 1.0
    elif s.y >= params.height - eps_y:
        ny_ = -1.0
    return nx_, ny_


def interior_direction(s: MobilityState, params: ModelParams, rng: random.Random) -> float:
    """Uniform heading into the open half-plane (quarter-plane at a corner)."""
    nx_, ny_ = _inward_normal(s, params)
    if nx_ == 0.0 and ny_ == 0.0:
        return rng.uniform(0.0, TWO_PI)
    spread = math.pi / 4 if (nx_ and ny_) else math.pi / 2
    return (math.atan2(ny_, nx_) + rng.uniform(-spread, spread)) % TWO_PI


def _time_to_wall(s: MobilityState, params: ModelParams) -> float:
    if s.speed <= 0.0:
        return math.inf
    vx = s.speed * math.cos(s.direction)
    vy = s.speed * math.sin(s.direction)
    t = math.inf
    if vx > 0:
        t = min(t, (params.width - s.x) / vx)
    elif vx < 0:
        t = min(t, s.x / -vx)
    if vy > 0:
        t = min(t, (params.height - s.y) / vy)
    elif vy < 0:
        t = min(t, s.y / -vy)
    return max(t, 0.0)


def step_random_direction(state: MobilityState, params: ModelParams, rng: random.Random) -> MobilityState:
    s = state.copy()
    m = s.memory
    budget = params.step_time
    for _ in range(10_000):
        if budget <= 0.0:
            break
        pause = m.get("pause_left", 0.0)
        if pause > 0.0:
            used = min(pause, budget)
            m["pause_left"] = pause - used
            budget -= used
            if m["pause_left"] > 0.0:
                break
        if m.get("at_wall"):
            s.direction = interior_direction(s, params, rng)
            s.speed = rng.uniform(params.min_speed, params.max_speed)
            m["at_wall"] = False
        t_wall = _time_to_wall(s, params)
        if t_wall == math.inf:
            break
        if t_wall <= budget:
            s.x = clamp_inside(s.x + s.speed * t_wall * math.cos(s.direction), params.width)
            s.y = clamp_inside(s.y + s.speed * t_wall * math.sin(s.direction), params.height)
            budget -= t_wall
            m["at_wall"] = True
            m["pause_left"] = params.pause_time
        else:
            d = s.speed * budget
            s.x = clamp_inside(s.x + d * math.cos(s.direction), params.width)
            s.y = clamp_inside(s.y + d * math.sin(s.direction), params.height)
            budget = 0.0
    return s


# -- boundless simulation area -------------------------------------------------


def _wrap(v: float, hi: float) -> float:
    v = v % hi
    return 0.0 if v >= hi else v


def step_boundless(state: MobilityState, params: ModelParams, rng: random.Random) -> MobilityState:
    s = state.copy()
    dt = params.step_time
    dv = rng.uniform(-params.max_accel * dt, params.max_accel * dt)
    da = rng.uniform(-params.max_angular_change * dt, params.max_angular_change * dt)
    s.speed = min(max(s.speed + dv, 0.0), params.max_speed)
    s.direction = (s.direction + da) % TWO_PI
    s.x = _wrap(s.x + s.speed * dt * math.cos(s.direction), params.width)
    s.y = _wrap(s.y + s.speed * dt * math.sin(s.direction), params.height)
    return s


# -- Gauss-Markov ----------------------------------------------------------------


def gauss_markov_mean_direction(s: MobilityState, params: ModelParams) -> float:
    """Configured mean heading, or a heading at the area centre near an edge."""
    mgn = params.gm_edge_margin
    if s.x < mgn or s.y < mgn or s.x > params.width - mgn or s.y > params.height - mgn:
        return math.atan2(params.height / 2 - s.y, params.width / 2 - s.x)
    return params.gm_mean_direction


def step_gauss_markov(state: MobilityState, params: ModelParams, rng: random.Random) -> MobilityState:
    a = params.gm_alpha
    if not 0.0 <= a <= 1.0:
        raise ValueError(f"gm_alpha {a} outside [0, 1]")
    s = state.copy()
    noise = math.sqrt(1.0 - a * a)
    g_speed = rng.gauss(0.0, 1.0)
    g_dir = rng.gauss(0.0, 1.0)
    mean_dir = gauss_markov_mean_direction(state, params)
    s.speed = a * state.speed + (1.0 - a) * params.gm_mean_speed + noise * params.gm_speed_std * g_speed
    s.direction = a * state.direction + (1.0 - a) * mean_dir + noise * params.gm_direction_std * g_dir
    # negative speed moves backwards; the process value is kept unclamped
    dist = s.speed * params.step_time
    x = s.x + dist * math.cos(s.direction)
    y = s.y + dist * math.sin(s.direction)
    x, fx = _fold(x, params.width)
    y, fy = _fold(y, params.height)
    if fx:
        s.direction = math.pi - s.direction
    if fy:
        s.direction = -s.direction
    s.x = clamp_inside(x, params.width)
    s.y = clamp_inside(y, params.height)
    s.memory["prev_speed"] = state.speed
    return s


# -- probabilistic random walk -----------------------------------------------------


_AXIS_DELTA = (0, -1, 1)


def _next_axis_state(row, u: float) -> int:
    acc = 0.0
    for k, p in enumerate(row):
        acc += p
        if u < acc:
            return k
    # u landed in the rounding slack above the row sum
    return max(k for k, p in enumerate(row) if p > 0)


def step_probabilistic_walk(state: MobilityState, params: ModelParams, rng: random.Random) -> MobilityState:
    m = params.prob_matrix
    if len(m) != 3 or any(len(r) != 3 or not math.isclose(sum(r), 1.0, abs_tol=1e-9) or min(r) < 0 for r in m):
        raise ValueError("prob_matrix must be 3x3 with non-negative rows summing to 1")
    s = state.copy()
    sx = _next_axis_state(m[s.memory.get("state_x", 0)], rng.random())
    sy = _next_axis_state(m[s.memory.get("state_y", 0)], rng.random())
    s.memory["state_x"] = sx
    s.memory["state_y"] = sy
    step = params.prob_cell_step
    s.x = clamp_inside(s.x + _AXIS_DELTA[sx] * step, params.width)
    s.y = clamp_inside(s.y + _AXIS_DELTA[sy] * step, params.height)
    return s


def stationary_distribution(matrix) -> list[float]:
    """Stationary distribution of a row-stochastic matrix via its left eigenvector."""
    import numpy as np

    p = np.asarray(matrix, dtype=float)
    vals, vecs = np.linalg.eig(p.T)
    v = np.real(vecs[:, np.argmin(np.abs(vals - 1.0))])
    v = v / v.sum()
    return [float(x) for x in v]


# -- city section ------------------------------------------------------------------


class StreetGrid:
    """Lattice of streets; intersections are ``(i, j)`` grid indices.

    Horizontal street ``j`` and vertical street ``i`` carry speed limits
    drawn cyclically from ``speeds``.
    """

    def __init__(self, blocks: tuple[int, int], block_size: float, speeds: tuple[float, ...]):
        nx_, ny_ = blocks
        self.block_size = block_size
        self.graph = nx.Graph()
        for i in range(nx_ + 1):
            for j in range(ny_ + 1):
                self.graph.add_node((i, j))
                if i < nx_:
                    self.graph.add_edge((i, j), (i + 1, j), length=block_size, speed=speeds[j % len(speeds)])
                if j < ny_:
                    self.graph.add_edge((i, j), (i, j + 1), length=block_size, speed=speeds[i % len(speeds)])
        if not nx.is_connected(self.graph):
            raise ValueError("street grid is not connected")
        self.intersections = sorted(self.graph.nodes)

    @classmethod
    def from_params(cls, params: ModelParams) -> "StreetGrid":
        nx_, ny_ = params.street_blocks
        if nx_ * params.street_block_size >= params.width or ny_ * params.street_block_size >= params.height:
            raise ValueError("street grid does not fit inside the simulation area")
        speeds = params.street_speeds or (params.max_speed,)
        return cls(params.street_blocks, params.street_block_size, tuple(speeds))

    def position(self, node: tuple[int, int]) -> tuple[float, float]:
        return node[0] * self.block_size, node[1] * self.block_size

    def route(self, src, dst) -> list[tuple[int, int]]:
        try:
            return nx.shortest_path(self.graph, src, dst, weight="length")
        except nx.NetworkXNoPath:
            raise RuntimeError(f"no street path from {src} to {dst}") from None

    def on_street(self, x: float, y: float, tol: float = 1e-9) -> bool:
        b = self.block_size
        xmax = max(i for i, _ in self.intersections) * b
        ymax = max(j for _, j in self.intersections) * b
        if not (-tol <= x <= xmax + tol and -tol <= y <= ymax + tol):
            return False
        on_v = abs(x / b - round(x / b)) * b <= tol
        on_h = abs(y / b - round(y / b)) * b <= tol
        return on_v or on_h


def step_city_section(
    state: MobilityState, params: ModelParams, rng: random.Random, streets: StreetGrid
) -> MobilityState:
    s = state.copy()
    m = s.memory
    budget = params.step_time
    for _ in range(10_000):
        if budget <= 0.0:
            break
        pause = m.get("pause_left", 0.0)
        if pause > 0.0:
            used = min(pause, budget)
            m["pause_left"] = pause - used
            budget -= used
            continue
        route = m.get("route")
        if not route:
            dest = streets.intersections[rng.randrange(len(streets.intersections))]
            route = streets.route(m["at"], dest)[1:]
            m["route"] = route
            if not route:
                m["pause_left"] = params.pause_time
                if params.pause_time <= 0.0:
                    break
                continue
        nxt = route[0]
        tx, ty = streets.position(nxt)
        s.speed = streets.graph.edges[m["at"], nxt]["speed"]
        dist = abs(tx - s.x) + abs(ty - s.y)
        if s.speed <= 0.0:
            break
        if s.speed * budget >= dist:
            s.x, s.y = tx, ty
            budget -= dist / s.speed
            m["at"] = nxt
            route.pop(0)
            if not route:
                m["pause_left"] = params.pause_time
        else:
            frac = s.speed * budget / dist
            s.x += frac * (tx - s.x)
            s.y += frac * (ty - s.y)
            s.direction = math.atan2(ty - s.y, tx - s.x) % TWO_PI
            budget = 0.0
    m["route"] = list(m.get("route") or [])
    return s


ENTITY_MODELS: dict[str, Callable] = {
    "random-walk": step_random_walk,
    "random-waypoint": step_random_waypoint,
    "random-direction": step_random_direction,
    "boundless": step_boundless,
    "gauss-markov": step_gauss_markov,
    "probabilistic-walk": step_probabilistic_walk,
    "city-section": step_city_section,
}


def init_state(model: str, params: ModelParams, rng: random.Random, streets: StreetGrid | None = None) -> MobilityState:
    """Uniform random starting state for ``model``."""
    if model == "city-section":
        node = streets.intersections[rng.randrange(len(streets.intersections))]
        x, y = streets.position(node)
        return MobilityState(x, y, 0.0, 0.0, {"at": node, "route": []})
    x = rng.uniform(0.0, params.width)
    y = rng.uniform(0.0, params.height)
    if model == "gauss-markov":
        return MobilityState(x, y, params.gm_mean_speed, rng.uniform(0.0, TWO_PI))
    if model == "probabilistic-walk":
        return MobilityState(x, y, 0.0, 0.0, {"state_x": 0, "state_y": 0})
    speed = rng.uniform(params.min_speed, params.max_speed)
    if model == "boundless":
        speed = min(speed, params.max_speed)
    return MobilityState(x, y, speed, rng.uniform(0.0, TWO_PI))
