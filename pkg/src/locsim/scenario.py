"""Scenario files: ``[section]`` headers with ``key = value`` lines.

Sections are ``topology``, ``mobility``, ``traffic``, ``scheme`` and
``run``. Relative paths resolve against the scenario file's directory.
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .mobility import MODELS, ImportedTrace, ModelParams, read_trace
from .schemes import SCHEMES, WsConfig
from .topology import HierarchyTree, TopologyError, ZoneGrid, build_canonical_fixture, load_topology
from .traffic import CallParams, read_call_trace


class ScenarioError(ValueError):
    """Bad scenario; the message names the offending key."""


@dataclass
class Scenario:
    tree: HierarchyTree
    grid: ZoneGrid
    seed: int
    users: int = 20
    scheme: str = "hlr"
    mobility: str = "matrix-walk"
    move_rate: float = 1.0 / 300.0
    model_params: ModelParams = field(default_factory=ModelParams)
    mobility_duration: float = 3600.0
    group_size: int = 5
    trace: Optional[ImportedTrace] = None
    calls: CallParams = field(default_factory=lambda: CallParams(cmr=1.0))
    call_trace: Optional[list] = None
    ws: WsConfig = field(default_factory=WsConfig)
    horizon_events: Optional[int] = 100_000
    horizon_time: Optional[float] = None
    topology_source: str = "canonical"
    output: Optional[str] = None

    def trace_duration(self) -> float:
        if self.trace is None:
            return 0.0
        times = [r.t for r in self.trace.records] or [m.t for m in self.trace.moves]
        return max(times) - min(times) if times else 0.0

    def with_(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)


def canonical_scenario(seed: int = 1, **overrides) -> Scenario:
    """Canonical fixture, 20 users on the movement matrix, k=5, p=0.8."""
    tree, grid = build_canonical_fixture()
    sc = Scenario(tree=tree, grid=grid, seed=seed, calls=CallParams(preferred_size=5, preferred_prob=0.8, cmr=1.0))
    return sc.with_(**overrides) if overrides else sc


_MODEL_KEYS = {f.name for f in dataclasses.fields(ModelParams)}


def _num(section, key, conv, default=None):
    raw = section.get(key)
    if raw is None:
        return default
    try:
        return conv(raw)
    except ValueError:
        raise ScenarioError(f"{section.name}.{key}: cannot parse {raw!r}") from None


def _bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(raw)


def model_value(key: str, raw: str):
    if key in ("prob_matrix",):
        rows = [tuple(float(v) for v in r.split()) for r in raw.split(";")]
        return tuple(rows)
    if key in ("street_blocks",):
        return tuple(int(v) for v in raw.split(","))
    if key in ("advance_vector", "street_speeds"):
        return tuple(float(v) for v in raw.split(","))
    return float(raw)


def parse_scenario(text: str, base: Path = Path("."), *, check: bool = True) -> Scenario:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ScenarioError(f"scenario syntax: {exc}") from None
    known = {"topology", "mobility", "traffic", "scheme", "run"}
    for name in cp.sections():
        if name not in known:
            raise ScenarioError(f"unknown section [{name}]")
    sec = {name: cp[name] if cp.has_section(name) else cp["DEFAULT"] for name in known}

    def resolve(p: str) -> str:
        path = Path(p)
        return str(path if path.is_absolute() else base / path)

    run = sec["run"]
    if "seed" not in run:
        raise ScenarioError("run.seed is required")
    seed = _num(run, "seed", int)

    topo_src = sec["topology"].get("source", "canonical")
    try:
        tree, grid = load_topology(topo_src if topo_src == "canonical" else resolve(topo_src))
    except (OSError, TopologyError) as exc:
        raise ScenarioError(f"topology.source: {exc}") from None

    mob = sec["mobility"]
    mobility = mob.get("source", "matrix-walk")
    params = {}
    for key, raw in mob.items():
        k = key.replace("-", "_")
        if k in _MODEL_KEYS:
            try:
                params[k] = model_value(k, raw)
            except ValueError:
                raise ScenarioError(f"mobility.{key}: cannot parse {raw!r}") from None
    model_params = ModelParams(**params)
    trace = None
    if mobility == "trace":
        if "trace" not in mob:
            raise ScenarioError("mobility.trace is required when mobility.source = trace")
        try:
            trace = read_trace(resolve(mob["trace"]))
        except (OSError, ValueError) as exc:
            raise ScenarioError(f"mobility.trace: {exc}") from None
    elif mobility != "matrix-walk" and mobility not in MODELS:
        raise ScenarioError(f"mobility.source: unknown source {mobility!r}")

    traf = sec["traffic"]
    call_src = traf.get("source", "synthetic")
    calls = CallParams(
        call_rate=_num(traf, "call_rate", float, 0.0),
        preferred_size=_num(traf, "preferred_size", int, 5),
        preferred_prob=_num(traf, "preferred_prob", float, 0.8),
        cmr=_num(traf, "cmr", float, None),
    )
    if calls.cmr is None and "call_rate" not in traf:
        calls.cmr = 1.0
    call_trace = None
    if call_src == "trace":
        if "trace" not in traf:
            raise ScenarioError("traffic.trace is required when traffic.source = trace")
        try:
            call_trace = read_call_trace(resolve(traf["trace"]))
        except (OSError, ValueError) as exc:
            raise ScenarioError(f"traffic.trace: {exc}") from None
    elif call_src != "synthetic":
        raise ScenarioError(f"traffic.source: unknown source {call_src!r}")

    sch = sec["scheme"]
    try:
        ws = WsConfig(
            enabled=_bool(sch.get("ws.enabled", "true")),
            ewma_alpha=_num(sch, "ws.ewma_alpha", float, None),
            u_cost_mode=sch.get("ws.u_cost_mode", "symmetric"),
            strict_boundary=_bool(sch.get("ws.strict_boundary", "true")),
        )
    except ValueError as exc:
        raise ScenarioError(f"scheme.ws: {exc}") from None

    users = _num(run, "users", int, 20)
    if trace is not None:
        ids = [r.node for r in trace.records] + [m.user for m in trace.moves]
        users = max(users, max(ids) + 1) if ids else users
    if call_trace:
        users = max(users, 1 + max(max(c.caller, c.callee) for c in call_trace))

    sc = Scenario(
        tree=tree,
        grid=grid,
        seed=seed,
        users=users,
        scheme=sch.get("scheme", "hlr"),
        mobility=mobility,
        move_rate=_num(mob, "move_rate", float, 1.0 / 300.0),
        model_params=model_params,
        mobility_duration=_num(mob, "duration", float, 3600.0),
        group_size=_num(mob, "group_size", int, 5),
        trace=trace,
        calls=calls,
        call_trace=call_trace,
        ws=ws,
        horizon_events=_num(run, "horizon_events", int, None),
        horizon_time=_num(run, "horizon_time", float, None),
        topology_source=topo_src,
        output=resolve(run["output"]) if "output" in run else None,
    )
    if sc.horizon_events is None and sc.horizon_time is None and mobility == "matrix-walk":
        sc.horizon_events = 100_000
    problems = scenario_problems(sc) if check else []
    if problems:
        raise ScenarioError(problems[0])
    return sc


def load_scenario(path, *, check: bool = True) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc}") from None
    return parse_scenario(text, path.parent, check=check)


def scenario_problems(sc: Scenario) -> list[str]:
    """Parameter-range problems; topology structure is reported separately."""
    out = []
    if sc.scheme not in SCHEMES:
        out.append(f"scheme.scheme: unknown scheme {sc.scheme!r}")
    if sc.users < 2:
        out.append("run.users: need at least two users")
    if sc.move_rate <= 0 and sc.mobility == "matrix-walk":
        out.append("mobility.move_rate must be positive")
    if sc.horizon_events is not None and sc.horizon_events < 0:
        out.append("run.horizon_events must be non-negative")
    if sc.horizon_time is not None and sc.horizon_time < 0:
        out.append("run.horizon_time must be non-negative")
    if sc.mobility in MODELS:
        out += [f"mobility.{p}" for p in sc.model_params.problems()]
        if sc.mobility_duration <= 0:
            out.append("mobility.duration must be positive")
        if (sc.grid.width, sc.grid.height) != (sc.model_params.width, sc.model_params.height):
            out.append("mobility.width/height must match the topology grid")
    out += [f"traffic.{p}" for p in sc.calls.problems()]
    return out
