"""Zone geography and the location-register hierarchy.

The hierarchy is a forest of location registers whose roots are chained
on a bus.  Tree edges plus bus edges form the routing graph used by every
scheme, so hop costs stay comparable between HLR/VLR and hierarchical
schemes.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

NodeId = str


class TopologyError(ValueError):
    """Raised for malformed trees, grids or topology files."""


class HierarchyTree:
    """Location-register tree with a root-level bus.

    ``children`` keeps insertion order; ``roots`` is the bus order.
    ``link_cost`` is keyed by unordered node pair; missing edges cost 1.
    """

    def __init__(
        self,
        roots: Iterable[NodeId],
        children: dict[NodeId, list[NodeId]],
        link_cost: Optional[dict[frozenset, float]] = None,
        *,
        validate: bool = True,
    ):
        self.roots: list[NodeId] = list(roots)
        self.children: dict[NodeId, list[NodeId]] = {k: list(v) for k, v in children.items()}
        self.parent: dict[NodeId, NodeId] = {}
        for p, kids in self.children.items():
            for c in kids:
                if c in self.parent:
                    raise TopologyError(f"node {c} has two parents")
                self.parent[c] = p
        nodes = set(self.roots) | set(self.parent) | set(self.children)
        for n in nodes:
            self.children.setdefault(n, [])
        self.nodes: frozenset[NodeId] = frozenset(nodes)
        self.link_cost: dict[frozenset, float] = dict(link_cost or {})
        self._root_index = {r: i for i, r in enumerate(self.roots)}
        self.depth: dict[NodeId, int] = {}
        self.root_of: dict[NodeId, NodeId] = {}
        self._index()
        if validate:
            problems = self.problems()
            if problems:
                raise TopologyError("; ".join(problems))
        self._cost_cache: dict[tuple[NodeId, NodeId], float] = {}
        self._hop_cache: dict[tuple[NodeId, NodeId], int] = {}
        self.leaves: list[NodeId] = [n for n in self._dfs_order() if not self.children[n]]

    def _index(self) -> None:
        for r in self.roots:
            if r in self.parent:
                raise TopologyError(f"root {r} has a parent")
            stack = [(r, 0)]
            while stack:
                n, d = stack.pop()
                if n in self.depth:
                    raise TopologyError(f"cycle through {n}")
                self.depth[n] = d
                self.root_of[n] = r
                stack.extend((c, d + 1) for c in self.children[n])

    def _dfs_order(self) -> list[NodeId]:
        out: list[NodeId] = []
        for r in self.roots:
            stack = [r]
            while stack:
                n = stack.pop()
                out.append(n)
                stack.extend(reversed(self.children[n]))
        return out

    def problems(self) -> list[str]:
        """Structural rule violations, empty when the tree is well formed."""
        out = []
        if not self.roots:
            out.append("no roots declared")
        if len(set(self.roots)) != len(self.roots):
            out.append("duplicate root ids on the bus")
        unreached = sorted(self.nodes - set(self.depth))
        if unreached:
            out.append(f"connectivity violated at {', '.join(unreached)}")
        for n in sorted(self.nodes):
            k = len(self.children[n])
            if k == 1:
                out.append(f"min-children violated at {n}")
        return out

    # -- queries ---------------------------------------------------------

    def _check(self, *xs: NodeId) -> None:
        for x in xs:
            if x not in self.nodes:
                raise ValueError(f"unknown node id {x!r}")

    def is_leaf(self, x: NodeId) -> bool:
        return not self.children[x]

    def edge_cost(self, x: NodeId, y: NodeId) -> float:
        return self.link_cost.get(frozenset((x, y)), 1.0)

    def ancestors(self, x: NodeId) -> list[NodeId]:
        """``x`` followed by its ancestors up to and including its root."""
        self._check(x)
        out = [x]
        while out[-1] in self.parent:
            out.append(self.parent[out[-1]])
        return out

    def lca(self, x: NodeId, y: NodeId) -> Optional[NodeId]:
        self._check(x, y)
        if self.root_of[x] != self.root_of[y]:
            return None
        dx, dy = self.depth[x], self.depth[y]
        while dx > dy:
            x = self.parent[x]
            dx -= 1
        while dy > dx:
            y = self.parent[y]
            dy -= 1
        while x != y:
            x, y = self.parent[x], self.parent[y]
        return x

    def bus_path(self, r1: NodeId, r2: NodeId) -> list[NodeId]:
        i, j = self._root_index[r1], self._root_index[r2]
        step = 1 if j >= i else -1
        return self.roots[i : j + step : step] if j + step >= 0 else self.roots[i::step]

    def path(self, x: NodeId, y: NodeId) -> list[NodeId]:
        """Unique simple path in the routing graph, both endpoints included."""
        self._check(x, y)
        top = self.lca(x, y)
        if top is not None:
            up = self.ancestors(x)
            up = up[: up.index(top) + 1]
            down = self.ancestors(y)
            down = down[: down.index(top)]
            return up + down[::-1]
        up = self.ancestors(x)
        down = self.ancestors(y)
        return up[:-1] + self.bus_path(up[-1], down[-1]) + down[-2::-1]

    def path_cost(self, nodes: list[NodeId]) -> float:
        return sum(self.edge_cost(a, b) for a, b in zip(nodes, nodes[1:]))

    def cost(self, x: NodeId, y: NodeId) -> float:
        key = (x, y)
        hit = self._cost_cache.get(key)
        if hit is None:
            hit = self.path_cost(self.path(x, y))
            self._cost_cache[key] = hit
            self._cost_cache[(y, x)] = hit
        return hit

    def hop_count(self, x: NodeId, y: NodeId) -> int:
        """Number of edges on ``path(x, y)``, whatever the link costs."""
        key = (x, y)
        hit = self._hop_cache.get(key)
        if hit is None:
            hit = len(self.path(x, y)) - 1
            self._hop_cache[key] = hit
            self._hop_cache[(y, x)] = hit
        return hit

    def routing_edges(self) -> list[tuple[NodeId, NodeId]]:
        edges = [(p, c) for c, p in self.parent.items()]
        edges += list(zip(self.roots, self.roots[1:]))
        return edges


@dataclass
class ZoneGrid:
    """Cell raster over the simulation area, mapped onto leaf zones.

    Cells are half-open squares: a point on a boundary belongs to the
    cell with the lower index on the far side, i.e. ``floor(x / cell)``.
    """

    width: float
    height: float
    cell_size: float
    zone_of_cell: dict[tuple[int, int], NodeId]
    move_matrix: dict[NodeId, list[tuple[NodeId, float]]] = field(default_factory=dict)

    @property
    def rows(self) -> int:
        return math.ceil(self.height / self.cell_size)

    @property
    def cols(self) -> int:
        return math.ceil(self.width / self.cell_size)

    def zones(self) -> list[NodeId]:
        return sorted(set(self.zone_of_cell.values()))

    def zone_of(self, x: float, y: float) -> NodeId:
        if not (0.0 <= x < self.width and 0.0 <= y < self.height):
            raise ValueError(f"position ({x}, {y}) outside the {self.width}x{self.height} area")
        return self.zone_of_cell[(int(y // self.cell_size), int(x // self.cell_size))]

    def cell_centre(self, row: int, col: int) -> tuple[float, float]:
        return ((col + 0.5) * self.cell_size, (row + 0.5) * self.cell_size)

    def zone_cells(self, zone: NodeId) -> list[tuple[int, int]]:
        return sorted(c for c, z in self.zone_of_cell.items() if z == zone)

    def adjacency(self) -> dict[NodeId, list[NodeId]]:
        """Zones sharing a cell edge, in sorted order."""
        nbrs: dict[NodeId, set] = {z: set() for z in self.zones()}
        for (r, c), z in self.zone_of_cell.items():
            for rr, cc in ((r + 1, c), (r, c + 1)):
                other = self.zone_of_cell.get((rr, cc))
                if other is not None and other != z:
                    nbrs[z].add(other)
                    nbrs[other].add(z)
        return {z: sorted(v) for z, v in nbrs.items()}

    def problems(self, leaves: Optional[Iterable[NodeId]] = None) -> list[str]:
        out = []
        for r in range(self.rows):
            for c in range(self.cols):
                if (r, c) not in self.zone_of_cell:
                    out.append(f"cell ({r},{c}) has no zone")
        if leaves is not None:
            leaves = set(leaves)
            owned = set(self.zone_of_cell.values())
            for z in sorted(leaves - owned):
                out.append(f"zone {z} owns no cell")
            for z in sorted(owned - leaves):
                out.append(f"zone {z} is not a leaf of the hierarchy")
        for z, row in sorted(self.move_matrix.items()):
            if any(p < 0 for _, p in row):
                out.append(f"negative probability at {z}")
            if not math.isclose(sum(p for _, p in row), 1.0, abs_tol=1e-9):
                out.append(f"probability sum violated at {z}")
        return out


def uniform_move_matrix(grid: ZoneGrid) -> dict[NodeId, list[tuple[NodeId, float]]]:
    """Equal crossing probability to every geographically adjacent zone."""
    return {z: [(n, 1.0 / len(nb)) for n in nb] for z, nb in grid.adjacency().items() if nb}


def tile_leaves(
    leaves: list[NodeId], *, block: int = 2, cell_size: float = 100.0, blocks_per_row: int = 5
) -> ZoneGrid:
    """Tile leaves as ``block``x``block`` cell squares in boustrophedon order.

    Consecutive leaves (tree order) end up geographically adjacent. If the
    last block row is ragged, the final leaf absorbs the leftover slots.
    """
    n = len(leaves)
    brows = math.ceil(n / blocks_per_row)
    slots: dict[tuple[int, int], NodeId] = {}
    for i in range(brows * blocks_per_row):
        br, k = divmod(i, blocks_per_row)
        bc = k if br % 2 == 0 else blocks_per_row - 1 - k
        slots[(br, bc)] = leaves[min(i, n - 1)]
    cells = {}
    for (br, bc), z in slots.items():
        for dr in range(block):
            for dc in range(block):
                cells[(br * block + dr, bc * block + dc)] = z
    grid = ZoneGrid(
        width=blocks_per_row * block * cell_size,
        height=brows * block * cell_size,
        cell_size=cell_size,
        zone_of_cell=cells,
    )
    grid.move_matrix = uniform_move_matrix(grid)
    return grid


def build_canonical_fixture() -> tuple[HierarchyTree, ZoneGrid]:
    """The four-root demonstration hierarchy with a tiled zone grid."""
    children = {
        "R1": ["i", "j"],
        "i": ["f", "g"],
        "f": ["a", "b"],
        "g": ["c", "c2"],
        "j": ["h", "h2"],
        "h": ["d", "d2"],
        "R4": ["k", "k2"],
        "k": ["l", "l2"],
        "l": ["e", "e2"],
    }
    for r in ("R2", "R3"):
        x = r.lower()
        children[r] = [f"{x}a", f"{x}b"]
        children[f"{x}a"] = [f"{x}a1", f"{x}a2"]
        children[f"{x}b"] = [f"{x}b1", f"{x}b2"]
    tree = HierarchyTree(["R1", "R2", "R3", "R4"], children)
    return tree, tile_leaves(tree.leaves)


# -- topology file -----------------------------------------------------------


def parse_topology(text: str) -> tuple[HierarchyTree, ZoneGrid]:
    """Parse the line-based topology format.

    Recognised lines: ``root``, ``edge``, ``zone``, ``move`` and an optional
    ``grid <width> <height> <cell_size>``. Without ``zone`` lines the leaves
    are auto-tiled; without ``move`` lines crossing probabilities are
    uniform over adjacent zones.
    """
    roots: list[NodeId] = []
    children: dict[NodeId, list[NodeId]] = {}
    costs: dict[frozenset, float] = {}
    zones: list[tuple[NodeId, int, int, int, int]] = []
    moves: dict[NodeId, list[tuple[NodeId, float]]] = {}
    grid_dims: Optional[tuple[float, float, float]] = None
    bus_edges: list[tuple[NodeId, NodeId, float]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, *rest = line.split()
        try:
            if head == "root":
                roots.extend(rest)
            elif head == "edge":
                p, c = rest[0], rest[1]
                cost = float(rest[2]) if len(rest) > 2 else 1.0
                if len(rest) > 3:
                    raise ValueError("too many fields")
                bus_edges.append((p, c, cost))
            elif head == "zone":
                z, *nums = rest
                r0, c0, r1, c1 = (int(v) for v in nums)
                zones.append((z, r0, c0, r1, c1))
            elif head == "move":
                z, *pairs = rest
                row = []
                for pair in pairs:
                    nb, prob = pair.rsplit(":", 1)
                    row.append((nb, float(prob)))
                moves[z] = row
            elif head == "grid":
                w, h, cs = (float(v) for v in rest)
                grid_dims = (w, h, cs)
            else:
                raise ValueError(f"unknown directive {head!r}")
        except (ValueError, IndexError) as exc:
            raise TopologyError(f"line {lineno}: {exc}") from None

    root_set = set(roots)
    for p, c, cost in bus_edges:
        if p in root_set and c in root_set:
            costs[frozenset((p, c))] = cost
            continue
        children.setdefault(p, []).append(c)
        if cost != 1.0:
            costs[frozenset((p, c))] = cost
    tree = HierarchyTree(roots, children, costs, validate=False)

    if zones:
        if grid_dims is None:
            raise TopologyError("zone lines require a grid line")
        cells = {}
        for z, r0, c0, r1, c1 in zones:
            for r in range(r0, r1 + 1):
                for c in range(c0, c1 + 1):
                    if (r, c) in cells:
                        raise TopologyError(f"cell ({r},{c}) assigned twice")
                    cells[(r, c)] = z
        grid = ZoneGrid(*grid_dims, zone_of_cell=cells)
    else:
        grid = tile_leaves(tree.leaves) if tree.leaves else ZoneGrid(0, 0, 1, {})
    grid.move_matrix = moves or uniform_move_matrix(grid)
    return tree, grid


def load_topology(source: str) -> tuple[HierarchyTree, ZoneGrid]:
    if source == "canonical":
        return build_canonical_fixture()
    return parse_topology(Path(source).read_text())


def dump_topology(tree: HierarchyTree, grid: ZoneGrid) -> str:
    lines = ["root " + " ".join(tree.roots)]
    for a, b in zip(tree.roots, tree.roots[1:]):
        if tree.edge_cost(a, b) != 1.0:
            lines.append(f"edge {a} {b} {tree.edge_cost(a, b):g}")
    for n in tree._dfs_order():
        for c in tree.children[n]:
            cost = tree.edge_cost(n, c)
            lines.append(f"edge {n} {c}" + (f" {cost:g}" if cost != 1.0 else ""))
    lines.append(f"grid {grid.width:g} {grid.height:g} {grid.cell_size:g}")
    for (r, c), z in sorted(grid.zone_of_cell.items()):
        lines.append(f"zone {z} {r} {c} {r} {c}")
    for z, row in sorted(grid.move_matrix.items()):
        lines.append(f"move {z} " + " ".join(f"{n}:{p!r}" for n, p in row))
    return "\n".join(lines) + "\n"


def bfs_distances(tree: HierarchyTree, source: NodeId) -> dict[NodeId, int]:
    """Hop distances over the routing graph; used by validation reports."""
    adj: dict[NodeId, list[NodeId]] = {n: [] for n in tree.nodes}
    for a, b in tree.routing_edges():
        adj[a].append(b)
        adj[b].append(a)
    dist = {source: 0}
    q = deque([source])
    while q:
        u = q.popleft()
        for v in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                q.append(v)
    return dist
