"""Location-management schemes behind one event interface.

``HlrScheme`` is the two-tier home/visitor register baseline and
``HierScheme`` the pointer hierarchy. Their working-set variants replicate
a user's exact zone at sources whose call (or lookup) benefit outweighs
the cost of keeping the replica fresh, re-deciding on every move and on
every call from that source.

Accounting is uniform across schemes: every register touched by a lookup
costs one read, every record written or deleted costs one write, and a
message costs the summed link cost of the path it travels. Entries with
``src == dst`` are local database operations, not network messages.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

from .topology import HierarchyTree, NodeId

KINDS = ("update", "deregister", "lookup", "replicaUpdate", "invalidate", "callDelivery")
SCHEMES = ("hlr", "ws-hlr", "hier", "ws-hier")


class ConsistencyError(RuntimeError):
    """Directory state no longer matches where users actually are."""


@dataclass(frozen=True)
class Message:
    kind: str
    src: NodeId
    dst: NodeId
    hops: float
    reads: int = 0
    writes: int = 0
    path: tuple = ()


@dataclass
class MessageLog:
    """Everything one event cost. ``call`` marks call events; ``local`` a local lookup."""

    messages: list[Message] = field(default_factory=list)
    call: bool = False
    local: bool = False

    @property
    def hops(self) -> float:
        return sum(m.hops for m in self.messages)

    @property
    def lookup_hops(self) -> float:
        return sum(m.hops for m in self.messages if m.kind == "lookup")

    @property
    def reads(self) -> int:
        return sum(m.reads for m in self.messages)

    @property
    def writes(self) -> int:
        return sum(m.writes for m in self.messages)

    def of_kind(self, kind: str) -> list[Message]:
        return [m for m in self.messages if m.kind == kind]


# -- working-set decision ------------------------------------------------------------


def ws_delta_hlr(tree: HierarchyTree, s: NodeId, home: NodeId, callee_zone: NodeId) -> float:
    """Extra routing cost a call from ``s`` pays for detouring through the HLR."""
    return tree.cost(s, home) + tree.cost(home, callee_zone) - tree.cost(s, callee_zone)


def ws_delta_hier(tree: HierarchyTree, s: NodeId, callee_zone: NodeId) -> float:
    """Lookup messages saved by holding the exact location at ``s``.

    A hierarchical lookup from ``s`` walks the unique routing path one
    register at a time; with a replica it needs only the read at ``s``
    and the one at the callee's zone.
    """
    return tree.hop_count(s, callee_zone) - 2


def ws_decide(f_s: float, delta_s: float, f_update: float, u_s: float, *, strict: bool = True) -> bool:
    """Replicate at ``s`` when the routing saving beats the maintenance cost."""
    lhs, rhs = f_s * delta_s, f_update * u_s
    return lhs > rhs if strict else lhs >= rhs


@dataclass
class WsConfig:
    enabled: bool = True
    ewma_alpha: Optional[float] = None
    u_cost_mode: str = "symmetric"
    strict_boundary: bool = True

    def __post_init__(self):
        if self.u_cost_mode not in ("symmetric", "announce_only"):
            raise ValueError(f"unknown u_cost_mode {self.u_cost_mode!r}")
        if self.ewma_alpha is not None and not 0.0 < self.ewma_alpha <= 1.0:
            raise ValueError("ewma_alpha must lie in (0, 1]")


class _Rate:
    __slots__ = ("count", "last", "ewma")

    def __init__(self):
        self.count = 0
        self.last: Optional[float] = None
        self.ewma: Optional[float] = None


class WorkingSetLedger:
    """Per-(user, source) call counters and per-user move counters.

    Rates are cumulative counts over the time since activation, or with
    ``ewma_alpha`` the inverse of a smoothed inter-event interval. A rate
    is unavailable until at least one event has been seen.
    """

    def __init__(self, ewma_alpha: Optional[float] = None, t0: float = 0.0):
        self.ewma_alpha = ewma_alpha
        self.t0 = t0
        self.calls: dict[int, dict[NodeId, _Rate]] = {}
        self.moves: dict[int, _Rate] = {}

    def _bump(self, r: _Rate, t: float) -> None:
        r.count += 1
        if self.ewma_alpha is not None:
            gap = t - (self.t0 if r.last is None else r.last)
            r.ewma = gap if r.ewma is None else self.ewma_alpha * gap + (1 - self.ewma_alpha) * r.ewma
        r.last = t

    def record_call(self, user: int, source: NodeId, t: float) -> None:
        self._bump(self.calls.setdefault(user, {}).setdefault(source, _Rate()), t)

    def record_move(self, user: int, t: float) -> None:
        self._bump(self.moves.setdefault(user, _Rate()), t)

    def sources(self, user: int) -> list[NodeId]:
        return list(self.calls.get(user, ()))

    def call_count(self, user: int, source: NodeId) -> int:
        r = self.calls.get(user, {}).get(source)
        return r.count if r else 0

    def move_count(self, user: int) -> int:
        r = self.moves.get(user)
        return r.count if r else 0

    def _rate(self, r: Optional[_Rate], t: float) -> Optional[float]:
        if r is None or r.count == 0:
            return None
        if self.ewma_alpha is None:
            elapsed = t - self.t0
            return r.count / elapsed if elapsed > 0 else None
        return 1.0 / r.ewma if r.ewma and r.ewma > 0 else None

    def move_rate(self, user: int, t: float) -> Optional[float]:
        return self._rate(self.moves.get(user), t)

    def source_rates(self, user: int, t: float) -> list[tuple[NodeId, float]]:
        """``(source, f_s)`` for every source past warm-up."""
        out = []
        for s, r in self.calls.get(user, {}).items():
            f = self._rate(r, t)
            if f is not None:
                out.append((s, f))
        return out

    def rates(self, user: int, source: NodeId, t: float) -> Optional[tuple[float, float]]:
        """``(f_s, f_update)`` or ``None`` during warm-up."""
        f_s = self._rate(self.calls.get(user, {}).get(source), t)
        f_u = self._rate(self.moves.get(user), t)
        if f_s is None or f_u is None:
            return None
        return f_s, f_u


# -- schemes ---------------------------------------------------------------------------


class Scheme:
    name = "base"

    def __init__(self, tree: HierarchyTree):
        self.tree = tree
        self.current: dict[int, NodeId] = {}

    def register(self, user: int, zone: NodeId) -> None:
        raise NotImplementedError

    def on_move(self, user: int, src: NodeId, dst: NodeId, t: float = 0.0) -> MessageLog:
        raise NotImplementedError

    def on_call(self, caller_zone: NodeId, callee: int, t: float = 0.0) -> MessageLog:
        raise NotImplementedError

    def violations(self, users: Optional[Iterable[int]] = None) -> list[str]:
        raise NotImplementedError

    def _zone(self, user: int) -> NodeId:
        try:
            return self.current[user]
        except KeyError:
            raise ConsistencyError(f"lookup failure: user {user} is not registered") from None

    def _check_move(self, user: int, src: NodeId, dst: NodeId) -> bool:
        if src == dst:
            return False
        if self._zone(user) != src:
            raise ConsistencyError(f"user {user} moves from {src} but is registered at {self.current[user]}")
        if not (self.tree.is_leaf(src) and self.tree.is_leaf(dst)):
            raise ValueError(f"moves happen between leaf zones, got {src} -> {dst}")
        return True


class HlrScheme(Scheme):
    """Home register per user; visitor register per zone."""

    name = "hlr"

    def __init__(self, tree: HierarchyTree):
        super().__init__(tree)
        self.home: dict[int, NodeId] = {}
        self.hlr: dict[int, NodeId] = {}
        self.vlr: dict[NodeId, set[int]] = {z: set() for z in tree.leaves}

    def register(self, user: int, zone: NodeId, home: Optional[NodeId] = None) -> None:
        self.home[user] = zone if home is None else home
        self.current[user] = zone
        self.hlr[user] = zone
        self.vlr[zone].add(user)

    def hlr_on_move(self, user: int, src: NodeId, dst: NodeId) -> MessageLog:
        if not self._check_move(user, src, dst):
            return MessageLog()
        home = self.home[user]
        cost = self.tree.cost
        self.vlr[dst].add(user)
        self.hlr[user] = dst
        self.vlr[src].discard(user)
        self.current[user] = dst
        return MessageLog([
            Message("update", dst, dst, 0.0, writes=1),
            Message("update", dst, home, cost(dst, home), writes=1),
            Message("deregister", home, src, cost(home, src), writes=1),
        ])

    def hlr_on_call(self, caller_zone: NodeId, callee: int) -> MessageLog:
        zone = self._zone(callee)
        home = self.home[callee]
        if self.hlr[callee] != zone:
            raise ConsistencyError(f"lookup failure: HLR of user {callee} points at {self.hlr[callee]}")
        cost = self.tree.cost
        return MessageLog(
            [
                Message("lookup", caller_zone, caller_zone, 0.0, reads=1),
                Message("lookup", caller_zone, home, cost(caller_zone, home), reads=1),
                Message("lookup", home, zone, cost(home, zone), reads=1),
            ],
            call=True,
            local=caller_zone == home,
        )

    def on_move(self, user, src, dst, t=0.0):
        return self.hlr_on_move(user, src, dst)

    def on_call(self, caller_zone, callee, t=0.0):
        return self.hlr_on_call(caller_zone, callee)

    def violations(self, users=None) -> list[str]:
        out = []
        for u in self.current if users is None else users:
            z = self.current[u]
            if self.hlr[u] != z:
                out.append(f"HLR of user {u} stores {self.hlr[u]}, user is at {z}")
            holders = [zone for zone, us in self.vlr.items() if u in us]
            if holders != [z]:
                out.append(f"user {u} registered at VLRs {holders}, expected [{z}]")
        return out


class _WorkingSetMixin:
    """Replica bookkeeping shared by both working-set variants."""

    tree: HierarchyTree
    current: dict[int, NodeId]

    def _ws_init(self, ws: Optional[WsConfig]) -> None:
        self.ws = ws or WsConfig()
        self.ledger = WorkingSetLedger(self.ws.ewma_alpha)
        self.replicas: dict[int, dict[NodeId, NodeId]] = {}
        self._terms_cache: dict[tuple, tuple[bool, float, float]] = {}

    def _terms_key(self, user: int) -> object:
        return None

    def _terms(self, user: int, s: NodeId, zone: NodeId) -> tuple[bool, float, float]:
        """``(is candidate, delta_s, U_s)``; all depend only on topology."""
        key = (self._terms_key(user), s, zone)
        hit = self._terms_cache.get(key)
        if hit is None:
            ok = self.is_candidate(user, s, zone)
            hit = (ok, self.delta(user, s, zone) if ok else 0.0, self.u_cost(zone, s))
            self._terms_cache[key] = hit
        return hit

    def u_cost(self, zone: NodeId, s: NodeId) -> float:
        c = self.tree.cost(zone, s)
        return 2.0 * c if self.ws.u_cost_mode == "symmetric" else c

    def delta(self, user: int, s: NodeId, zone: NodeId) -> float:
        raise NotImplementedError

    def is_candidate(self, user: int, s: NodeId, zone: NodeId) -> bool:
        raise NotImplementedError

    def decide(self, user: int, s: NodeId, zone: NodeId, t: float) -> bool:
        if not self.is_candidate(user, s, zone):
            return False
        rates = self.ledger.rates(user, s, t)
        if rates is None:
            return False
        f_s, f_u = rates
        return ws_decide(f_s, self.delta(user, s, zone), f_u, self.u_cost(zone, s), strict=self.ws.strict_boundary)

    def _refresh_replicas(self, user: int, t: float) -> list[Message]:
        """Re-decide every source on record after ``user`` moved; eager updates."""
        zone = self.current[user]
        held = self.replicas.setdefault(user, {})
        keep = []
        f_u = self.ledger.move_rate(user, t)
        if f_u is not None:
            strict = self.ws.strict_boundary
            for s, f_s in self.ledger.source_rates(user, t):
                if s == zone:
                    continue  # the serving register already holds the record
                ok, d, u = self._terms(user, s, zone)
                if ok and ws_decide(f_s, d, f_u, u, strict=strict):
                    keep.append(s)
        msgs = []
        cost = self.tree.cost
        for s in sorted(keep):
            held[s] = zone
            msgs.append(Message("replicaUpdate", zone, s, cost(zone, s), writes=1))
        keep_set = set(keep)
        for s in sorted(set(held) - keep_set):
            del held[s]
            msgs.append(Message("invalidate", zone, s, cost(zone, s), writes=1))
        return msgs

    def _redecide_source(self, user: int, s: NodeId, t: float) -> list[Message]:
        zone = self.current[user]
        if s == zone:
            return []
        held = self.replicas.setdefault(user, {})
        want = self.decide(user, s, zone, t)
        if want and s not in held:
            held[s] = zone
            return [Message("replicaUpdate", zone, s, self.tree.cost(zone, s), writes=1)]
        if not want and s in held:
            del held[s]
            return [Message("invalidate", zone, s, self.tree.cost(zone, s), writes=1)]
        return []

    def replica_violations(self, users) -> list[str]:
        out = []
        for u in users:
            z = self.current[u]
            for s, loc in self.replicas.get(u, {}).items():
                if loc != z:
                    out.append(f"replica of user {u} at {s} says {loc}, user is at {z}")
                if s == z:
                    out.append(f"replica of user {u} duplicates its serving register {s}")
                elif not self.is_candidate(u, s, z):
                    out.append(f"replica of user {u} at barred site {s}")
        return out


class WsHlrScheme(_WorkingSetMixin, HlrScheme):
    name = "ws-hlr"

    def __init__(self, tree: HierarchyTree, ws: Optional[WsConfig] = None):
        HlrScheme.__init__(self, tree)
        self._ws_init(ws)

    def delta(self, user, s, zone):
        return ws_delta_hlr(self.tree, s, self.home[user], zone)

    def _terms_key(self, user):
        return self.home[user]

    def is_candidate(self, user, s, zone):
        return self.tree.is_leaf(s)

    def on_move(self, user, src, dst, t=0.0):
        log = self.hlr_on_move(user, src, dst)
        if not log.messages or not self.ws.enabled:
            return log
        self.ledger.record_move(user, t)
        log.messages.extend(self._refresh_replicas(user, t))
        return log

    def on_call(self, caller_zone, callee, t=0.0):
        if not self.ws.enabled:
            return self.hlr_on_call(caller_zone, callee)
        zone = self._zone(callee)
        # the serving VLR is a working-set member whose record costs nothing to
        # maintain (U = 0), so it qualifies as soon as the rule says so
        if caller_zone in self.replicas.get(callee, ()) or (
            caller_zone == zone and self.decide(callee, zone, zone, t)
        ):
            log = MessageLog(
                [
                    Message("lookup", caller_zone, caller_zone, 0.0, reads=1),
                    Message("callDelivery", caller_zone, zone, self.tree.cost(caller_zone, zone), reads=1),
                ],
                call=True,
                local=True,
            )
        else:
            log = self.hlr_on_call(caller_zone, callee)
        self.ledger.record_call(callee, caller_zone, t)
        log.messages.extend(self._redecide_source(callee, caller_zone, t))
        return log

    def violations(self, users=None):
        users = list(self.current if users is None else users)
        return HlrScheme.violations(self, users) + self.replica_violations(users)


class HierScheme(Scheme):
    """Pointer hierarchy with a root bus.

    ``pointers[node][user]`` is the child whose subtree serves the user,
    the leaf itself at the user's zone, or at a root the root whose
    subtree serves the user.
    """

    name = "hier"

    def __init__(self, tree: HierarchyTree):
        super().__init__(tree)
        self.pointers: dict[NodeId, dict[int, NodeId]] = {n: {} for n in tree.nodes}
        self._root_set = frozenset(tree.roots)

    def register(self, user: int, zone: NodeId, home: Optional[NodeId] = None) -> None:
        chain = self.tree.ancestors(zone)
        self.pointers[zone][user] = zone
        for child, node in zip(chain, chain[1:]):
            self.pointers[node][user] = child
        root = chain[-1]
        for r in self.tree.roots:
            if r != root:
                self.pointers[r][user] = root
        self.current[user] = zone

    def hier_on_move(self, user: int, src: NodeId, dst: NodeId) -> MessageLog:
        if not self._check_move(user, src, dst):
            return MessageLog()
        tree = self.tree
        ptrs = self.pointers
        top = tree.lca(src, dst)
        up = tree.ancestors(dst)
        if top is not None:
            up = up[: up.index(top) + 1]
        msgs = []
        ptrs[dst][user] = dst
        for child, node in zip(up, up[1:]):
            ptrs[node][user] = child
        msgs.append(Message("update", dst, up[-1], tree.path_cost(up), writes=len(up), path=tuple(up)))

        old_chain = tree.ancestors(src)
        if top is None:
            new_root = up[-1]
            i = tree.roots.index(new_root)
            # right-hand roots first, then left-hand roots, each hop by hop
            for side in (tree.roots[i + 1 :], tree.roots[:i][::-1]):
                if not side:
                    continue
                for r in side:
                    ptrs[r][user] = new_root
                p = (new_root, *side)
                msgs.append(Message("update", new_root, side[-1], tree.path_cost(list(p)), writes=len(side), path=p))
            top = old_chain[-1]
        below = old_chain[: old_chain.index(top)]
        for n in below:
            del ptrs[n][user]
        down = (top, *below[::-1])
        msgs.append(Message("deregister", top, src, tree.path_cost(list(down)), writes=len(below), path=down))
        self.current[user] = dst
        return MessageLog(msgs)

    def _lookup(self, caller_zone: NodeId, callee: int, replica_sites=()) -> tuple[MessageLog, list[NodeId]]:
        """Walk the pointers from ``caller_zone``; stop early at a replica.

        Returns the log and every register that faced the lookup.
        """
        target = self._zone(callee)
        tree = self.tree
        ptrs = self.pointers
        if caller_zone == target:
            log = MessageLog([Message("lookup", caller_zone, caller_zone, 0.0, reads=1, path=(caller_zone,))], True, True)
            return log, [caller_zone]
        msgs: list[Message] = []
        hit = None
        node = caller_zone
        seg = [node]
        while True:
            if node in replica_sites:
                hit = node
                break
            if callee in ptrs[node]:
                break
            parent = tree.parent.get(node)
            if parent is None:
                raise ConsistencyError(f"lookup failure: root {node} has no entry for user {callee}")
            node = parent
            seg.append(node)
        faced = list(seg)
        msgs.append(Message("lookup", seg[0], seg[-1], tree.path_cost(seg), reads=len(seg), path=tuple(seg)))
        if hit is None:
            nxt = ptrs[node][callee]
            if node in self._root_set and nxt in self._root_set and nxt != node:
                bus = tree.bus_path(node, nxt)
                msgs.append(Message("lookup", node, nxt, tree.path_cost(bus), reads=1, path=tuple(bus)))
                node = nxt
                faced.append(node)
                if node in replica_sites:
                    hit = node
            seg = [node]
            while hit is None:
                nxt = ptrs[node].get(callee)
                if nxt is None:
                    raise ConsistencyError(f"lookup failure: {node} lost the pointer for user {callee}")
                if nxt == node:
                    break
                node = nxt
                seg.append(node)
                faced.append(node)
                if node in replica_sites:
                    hit = node
            if len(seg) > 1:
                msgs.append(Message("lookup", seg[0], seg[-1], tree.path_cost(seg), reads=len(seg) - 1, path=tuple(seg)))
            if hit is None and node != target:
                raise ConsistencyError(f"lookup failure: pointers for user {callee} end at {node}, not {target}")
        if hit is not None and hit != target:
            route = tree.path(hit, target)
            msgs.append(Message("callDelivery", hit, target, tree.path_cost(route), reads=1, path=tuple(route)))
            faced.append(target)
        return MessageLog(msgs, call=True, local=hit == caller_zone), faced

    def hier_on_call(self, caller_zone: NodeId, callee: int) -> MessageLog:
        return self._lookup(caller_zone, callee)[0]

    def on_move(self, user, src, dst, t=0.0):
        return self.hier_on_move(user, src, dst)

    def on_call(self, caller_zone, callee, t=0.0):
        return self.hier_on_call(caller_zone, callee)

    def resolve_from_root(self, root: NodeId, user: int) -> NodeId:
        node = root
        for _ in range(len(self.tree.nodes) + 2):
            nxt = self.pointers[node].get(user)
            if nxt is None:
                raise ConsistencyError(f"{node} has no entry for user {user}")
            if nxt == node:
                return node
            node = nxt
        raise ConsistencyError(f"pointer cycle for user {user} starting at {root}")

    def violations(self, users=None) -> list[str]:
        out = []
        tree = self.tree
        for u in self.current if users is None else users:
            z = self.current[u]
            for r in tree.roots:
                try:
                    got = self.resolve_from_root(r, u)
                except ConsistencyError as exc:
                    out.append(str(exc))
                    continue
                if got != z:
                    out.append(f"pointers from {r} lead user {u} to {got}, user is at {z}")
            here = [leaf for leaf in tree.leaves if self.pointers[leaf].get(u) == leaf]
            if here != [z]:
                out.append(f"user {u} has 'here' records at {here}, expected [{z}]")
            chain = set(tree.ancestors(z))
            for n in tree.nodes:
                if n in self._root_set:
                    if u not in self.pointers[n]:
                        out.append(f"root {n} lacks an entry for user {u}")
                elif (u in self.pointers[n]) != (n in chain):
                    out.append(f"stale or missing entry for user {u} at {n}")
        return out


class WsHierScheme(_WorkingSetMixin, HierScheme):
    name = "ws-hier"

    def __init__(self, tree: HierarchyTree, ws: Optional[WsConfig] = None):
        HierScheme.__init__(self, tree)
        self._ws_init(ws)

    def delta(self, user, s, zone):
        return ws_delta_hier(self.tree, s, zone)

    def is_candidate(self, user, s, zone):
        return s != zone and s != self.tree.parent.get(zone)

    def candidates(self, user: int) -> set[NodeId]:
        zone = self._zone(user)
        return {n for n in self.tree.nodes if self.is_candidate(user, n, zone)}

    def on_move(self, user, src, dst, t=0.0):
        log = self.hier_on_move(user, src, dst)
        if not log.messages or not self.ws.enabled:
            return log
        self.ledger.record_move(user, t)
        log.messages.extend(self._refresh_replicas(user, t))
        return log

    def on_call(self, caller_zone, callee, t=0.0):
        if not self.ws.enabled:
            return self.hier_on_call(caller_zone, callee)
        log, faced = self._lookup(caller_zone, callee, self.replicas.get(callee, {}))
        zone = self.current[callee]
        for s in dict.fromkeys(faced):
            if self.is_candidate(callee, s, zone):
                self.ledger.record_call(callee, s, t)
                log.messages.extend(self._redecide_source(callee, s, t))
        return log

    def violations(self, users=None):
        users = list(self.current if users is None else users)
        return HierScheme.violations(self, users) + self.replica_violations(users)


def make_scheme(name: str, tree: HierarchyTree, ws: Optional[WsConfig] = None) -> Scheme:
    if name == "hlr":
        return HlrScheme(tree)
    if name == "ws-hlr":
        return WsHlrScheme(tree, ws)
    if name == "hier":
        return HierScheme(tree)
    if name == "ws-hier":
        return WsHierScheme(tree, ws)
    raise ValueError(f"unknown scheme {name!r}; expected one of {', '.join(SCHEMES)}")
