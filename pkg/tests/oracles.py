"""Independent reference implementations used by the tests.

Nothing here calls into the routing code of ``locsim.topology``; the
oracles rebuild the routing graph with networkx and answer the same
questions by plain graph search.
"""
from __future__ import annotations

import random

import networkx as nx
import numpy as np

from locsim.topology import HierarchyTree


def random_tree(rng: random.Random, max_nodes: int = 50, roots: tuple[int, int] = (2, 4), costs: bool = True) -> HierarchyTree:
    """Random hierarchy obeying the two-children rule, with optional link costs."""
    n_roots = rng.randint(*roots)
    names = [f"R{i}" for i in range(n_roots)]
    children: dict[str, list[str]] = {}
    leaves = list(names)
    budget = rng.randint(n_roots, max_nodes)
    count = n_roots
    while count + 2 <= budget:
        leaf = leaves.pop(rng.randrange(len(leaves)))
        k = rng.randint(2, min(4, budget - count))
        kids = [f"n{count + i}" for i in range(k)]
        children[leaf] = kids
        leaves.extend(kids)
        count += k
    link_cost = {}
    if costs:
        for p, kids in children.items():
            for c in kids:
                link_cost[frozenset((p, c))] = float(rng.randint(1, 5))
        for a, b in zip(names, names[1:]):
            link_cost[frozenset((a, b))] = float(rng.randint(1, 5))
    return HierarchyTree(names, children, link_cost)


def routing_graph(tree: HierarchyTree) -> nx.Graph:
    g = nx.Graph()
    g.add_nodes_from(tree.nodes)
    for p, kids in tree.children.items():
        for c in kids:
            g.add_edge(p, c, weight=tree.link_cost.get(frozenset((p, c)), 1.0))
    for a, b in zip(tree.roots, tree.roots[1:]):
        g.add_edge(a, b, weight=tree.link_cost.get(frozenset((a, b)), 1.0))
    return g


def bfs_path(g: nx.Graph, x: str, y: str) -> list[str]:
    # the routing graph is a tree, so the unweighted BFS path is the only path
    return nx.shortest_path(g, x, y)


def oracle_lca(tree: HierarchyTree, x: str, y: str):
    """Deepest common ancestor via a directed graph per root, ``None`` across roots."""
    dg = nx.DiGraph()
    dg.add_nodes_from(tree.nodes)
    for p, kids in tree.children.items():
        dg.add_edges_from((p, c) for c in kids)
    ax = nx.ancestors(dg, x) | {x}
    ay = nx.ancestors(dg, y) | {y}
    common = ax & ay
    if not common:
        return None
    # the deepest common ancestor is the one with the most ancestors of its own
    return max(common, key=lambda n: len(nx.ancestors(dg, n)))


def chain_stationary(matrix) -> np.ndarray:
    """Left eigenvector for eigenvalue 1, normalised to a distribution."""
    m = np.asarray(matrix, dtype=float)
    vals, vecs = np.linalg.eig(m.T)
    v = np.real(vecs[:, np.argmin(np.abs(vals - 1.0))])
    return v / v.sum()


def fixture_paths():
    """Literal message paths on the demonstration hierarchy."""
    return {
        "move_a_d_update": ("d", "h", "j", "R1"),
        "move_a_d_dereg": ("R1", "i", "f", "a"),
        "move_a_e_update": ("e", "l", "k", "R4"),
        "move_a_e_bus": ("R4", "R3", "R2", "R1"),
        "move_a_e_dereg": ("R1", "i", "f", "a"),
        "call_a_e_ascent": ("a", "f", "i", "R1"),
        "call_a_e_descent": ("R4", "k", "l", "e"),
    }
