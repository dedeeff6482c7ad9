import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from locsim.topology import (
    HierarchyTree,
    TopologyError,
    ZoneGrid,
    bfs_distances,
    build_canonical_fixture,
    dump_topology,
    parse_topology,
    tile_leaves,
)

from oracles import bfs_path, oracle_lca, random_tree, routing_graph


@pytest.fixture(scope="module")
def fixture():
    return build_canonical_fixture()


def test_fixture_is_well_formed(fixture):
    tree, grid = fixture
    assert tree.problems() == []
    assert grid.problems(tree.leaves) == []
    assert len(tree.leaves) == 19
    assert tree.roots == ["R1", "R2", "R3", "R4"]


@pytest.mark.parametrize(
    "x, y, expected",
    [("a", "b", "f"), ("a", "c", "i"), ("a", "d", "R1"), ("a", "e", None), ("a", "a", "a"), ("f", "a", "f")],
)
def test_lca_examples(fixture, x, y, expected):
    assert fixture[0].lca(x, y) == expected


def test_paths_on_fixture(fixture):
    tree, _ = fixture
    assert tree.path("d", "R1") == ["d", "h", "j", "R1"]
    assert tree.path("R4", "R1") == ["R4", "R3", "R2", "R1"]
    assert tree.path("a", "e") == ["a", "f", "i", "R1", "R2", "R3", "R4", "k", "l", "e"]
    assert tree.cost("a", "e") == 9
    assert tree.cost("a", "d") == 6
    assert tree.cost("a", "a") == 0
    assert tree.hop_count("a", "e") == 9


def test_unknown_node_rejected(fixture):
    with pytest.raises(ValueError, match="unknown node"):
        fixture[0].lca("a", "zz")


def test_min_children_violation_reported():
    tree = HierarchyTree(["R"], {"R": ["x", "y"], "x": ["z"]}, validate=False)
    assert "min-children violated at x" in tree.problems()
    with pytest.raises(TopologyError, match="min-children violated at x"):
        HierarchyTree(["R"], {"R": ["x", "y"], "x": ["z"]})


def test_unreachable_subtree_reported():
    tree = HierarchyTree(["R"], {"R": ["x", "y"], "q": ["u", "v"]}, validate=False)
    assert any(p.startswith("connectivity violated") for p in tree.problems())


def test_weighted_cost_uses_link_costs():
    tree = HierarchyTree(
        ["A", "B"],
        {"A": ["a1", "a2"], "B": ["b1", "b2"]},
        {frozenset(("A", "B")): 4.0, frozenset(("A", "a1")): 2.5},
    )
    assert tree.cost("a1", "b1") == 2.5 + 4.0 + 1.0
    assert tree.hop_count("a1", "b1") == 3


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_random_trees_match_bfs_oracle(seed):
    rng = random.Random(seed)
    tree = random_tree(rng)
    g = routing_graph(tree)
    nodes = sorted(tree.nodes)
    for _ in range(20):
        x, y = rng.choice(nodes), rng.choice(nodes)
        p = bfs_path(g, x, y)
        assert tree.path(x, y) == p
        assert tree.cost(x, y) == pytest.approx(sum(g[u][v]["weight"] for u, v in zip(p, p[1:])))
        assert tree.lca(x, y) == oracle_lca(tree, x, y)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_cost_is_a_tree_metric(seed):
    rng = random.Random(seed)
    tree = random_tree(rng)
    nodes = sorted(tree.nodes)
    for _ in range(15):
        x, y, z = (rng.choice(nodes) for _ in range(3))
        assert tree.cost(x, y) == tree.cost(y, x)
        assert tree.cost(x, z) <= tree.cost(x, y) + tree.cost(y, z) + 1e-9
        lca = tree.lca(x, y)
        if lca is not None:
            assert tree.cost(x, y) == pytest.approx(tree.cost(x, lca) + tree.cost(lca, y))


def test_bfs_distances_agree_with_hop_count(fixture):
    tree, _ = fixture
    dist = bfs_distances(tree, "a")
    assert all(dist[n] == tree.hop_count("a", n) for n in tree.nodes)


def test_zone_of_half_open_cells(fixture):
    _, grid = fixture
    assert grid.zone_of(0.0, 0.0) == grid.zone_of_cell[(0, 0)]
    assert grid.zone_of(100.0, 0.0) == grid.zone_of_cell[(0, 1)]
    assert grid.zone_of(99.999, 99.999) == grid.zone_of_cell[(0, 0)]
    with pytest.raises(ValueError):
        grid.zone_of(grid.width, 0.0)
    with pytest.raises(ValueError):
        grid.zone_of(-0.1, 5.0)


def test_tiling_covers_every_cell_once(fixture):
    tree, grid = fixture
    assert set(grid.zone_of_cell) == {(r, c) for r in range(grid.rows) for c in range(grid.cols)}
    assert set(grid.zone_of_cell.values()) == set(tree.leaves)


def test_uniform_move_matrix_rows(fixture):
    _, grid = fixture
    adj = grid.adjacency()
    for z, row in grid.move_matrix.items():
        assert sum(p for _, p in row) == pytest.approx(1.0)
        assert [n for n, _ in row] == adj[z]


def test_probability_sum_violation_reported(fixture):
    _, grid = fixture
    bad = ZoneGrid(grid.width, grid.height, grid.cell_size, dict(grid.zone_of_cell), dict(grid.move_matrix))
    z = "a"
    row = bad.move_matrix[z]
    bad.move_matrix[z] = [(n, p * 0.9) for n, p in row]
    assert f"probability sum violated at {z}" in bad.problems()


def test_topology_file_round_trip(fixture):
    tree, grid = fixture
    text = dump_topology(tree, grid)
    tree2, grid2 = parse_topology(text)
    assert tree2.roots == tree.roots
    assert tree2.children == tree.children
    assert grid2.zone_of_cell == grid.zone_of_cell
    assert grid2.move_matrix == grid.move_matrix
    assert dump_topology(tree2, grid2) == text


def test_parse_minimal_file_auto_tiles():
    text = """
    # two roots, one bus link of cost 3
    root A B
    edge A B 3
    edge A a1
    edge A a2
    edge B b1
    edge B b2 2
    """
    tree, grid = parse_topology(text)
    assert tree.cost("a1", "b2") == 1 + 3 + 2
    assert grid.problems(tree.leaves) == []


def test_parse_errors_name_the_line():
    with pytest.raises(TopologyError, match="line 2"):
        parse_topology("root A\nbogus x y\n")


def test_tile_leaves_small_count():
    grid = tile_leaves(["x", "y", "z"])
    assert set(grid.zone_of_cell.values()) == {"x", "y", "z"}
    assert grid.problems(["x", "y", "z"]) == []
