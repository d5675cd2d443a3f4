"""Data model validation, partitioning, subscription convexity, JSON round trip."""

import dataclasses

import numpy as np
import pytest

from gridflex import fixtures
from gridflex.netmodel import (BiddingZone, Fsp, Generator, InterfaceSubstation,
                               Line, Network, Node, Operator, SubscriptionLevel,
                               UnvalidatedNetwork, World, full_grid, load_world,
                               partition_by_operator, save_world,
                               subscription_cost, validate_network,
                               validate_world, world_from_dict, world_to_dict)


def test_minimal_network_validates_clean():
    world = fixtures.two_node_world()
    assert validate_network(world.net).empty
    assert validate_world(world).empty


def test_dangling_endpoint_finding():
    world = fixtures.two_node_world()
    net = world.net
    net.lines.append(Line("bad", "a", "zz", 0.1))
    rep = validate_network(net)
    codes = [f.code for f in rep.findings]
    assert "dangling-endpoint" in codes


def test_disconnected_operator_subgraph():
    h = 2
    nodes = [Node(i, (0.0,) * h) for i in ("d1", "d2", "d3", "t1")]
    net = Network(
        nodes=nodes,
        lines=[Line("l1", "d1", "d2", 0.1), Line("lb", "t1", "d1", 0.1)],
        zones=[BiddingZone("z")],
        operators=[Operator("tso", "TSO"), Operator("dso", "DSO")],
        interfaces=[InterfaceSubstation("i1", "t1", "d1")],
        ownership={"d1": "dso", "d2": "dso", "d3": "dso", "t1": "tso"},
        zone_of={k: "z" for k in ("d1", "d2", "d3", "t1")},
    )
    rep = validate_network(net)
    assert any(f.code == "operator-disconnected" for f in rep.findings)


def test_bad_reactance_and_flow_bounds():
    world = fixtures.two_node_world()
    net = world.net
    net.lines[0] = dataclasses.replace(net.lines[0], reactance=-1.0, flow_min=5.0)
    codes = {f.code for f in validate_network(net)}.union()
    codes = {f.code for f in validate_network(net).findings}
    assert "bad-reactance" in codes and "flow-bounds" in codes


def test_subscription_schedule_findings():
    world = fixtures.tso_dso_small(h=2)
    itf = world.net.interfaces[0]
    itf.levels = (SubscriptionLevel(10.0, 5.0), SubscriptionLevel(20.0, 1.0))
    rep = validate_network(world.net)
    assert any(f.code == "level-costs" for f in rep.findings)


def test_partition_small_world():
    world = fixtures.tso_dso_small(h=2)
    grids = partition_by_operator(world.net)
    assert set(grids) == {"tso", "dso"}
    assert sorted(grids["tso"].nodes) == ["t1", "t2"]
    assert sorted(grids["dso"].nodes) == ["d1", "d2"]
    assert [l.id for l in grids["tso"].internal_lines] == ["lt"]
    assert [l.id for l in grids["dso"].internal_lines] == ["ld"]
    # the boundary line is tagged in both subgrids
    assert [l.id for l in grids["tso"].boundary_lines] == ["lb"]
    assert [l.id for l in grids["dso"].boundary_lines] == ["lb"]


def test_partition_is_a_partition_on_meshed_desk():
    world = fixtures.meshed_desk(seed=3, h=2)
    grids = partition_by_operator(world.net)
    all_nodes = sorted(n.id for n in world.net.nodes)
    partitioned = sorted(nd for g in grids.values() for nd in g.nodes)
    assert partitioned == all_nodes
    internal = [l.id for g in grids.values() for l in g.internal_lines]
    assert len(internal) == len(set(internal))
    boundary_ids = {l.id for g in grids.values() for l in g.boundary_lines}
    expected_boundary = {l.id for l in world.net.lines if world.net.is_boundary(l)}
    assert boundary_ids == expected_boundary
    assert sorted(internal) + sorted(boundary_ids) == sorted(
        l.id for l in world.net.lines)


def test_partition_requires_clean_validation():
    world = fixtures.two_node_world()
    world.net.lines.append(Line("bad", "a", "zz", 0.1))
    with pytest.raises(UnvalidatedNetwork):
        partition_by_operator(world.net)


def test_two_dso_partition():
    h = 1
    nodes = [Node("t1", (0.0,) * h), Node("da", (1.0,) * h), Node("db", (1.0,) * h)]
    net = Network(
        nodes=nodes,
        lines=[Line("la", "t1", "da", 0.1), Line("lb", "t1", "db", 0.1)],
        zones=[BiddingZone("z")],
        operators=[Operator("tso", "TSO"), Operator("dsoA", "DSO"), Operator("dsoB", "DSO")],
        interfaces=[InterfaceSubstation("ia", "t1", "da"),
                    InterfaceSubstation("ib", "t1", "db")],
        ownership={"t1": "tso", "da": "dsoA", "db": "dsoB"},
        zone_of={k: "z" for k in ("t1", "da", "db")},
    )
    grids = partition_by_operator(net)
    assert len(grids) == 3


def test_subscription_cost_convex_piecewise():
    levels = (SubscriptionLevel(50.0, 0.0), SubscriptionLevel(30.0, 40.0),
              SubscriptionLevel(None, 100.0))
    assert subscription_cost(levels, 30.0) == 0.0
    assert subscription_cost(levels, 60.0) == pytest.approx(400.0)
    assert subscription_cost(levels, 100.0) == pytest.approx(30 * 40 + 20 * 100)
    assert subscription_cost(levels, -5.0) == 0.0
    # midpoint convexity on sampled powers
    xs = np.linspace(0.0, 150.0, 61)
    cost = np.array([subscription_cost(levels, x) for x in xs])
    mid = 0.5 * (cost[:-2] + cost[2:])
    assert np.all(cost[1:-1] <= mid + 1e-9)


def test_json_round_trip(tmp_path):
    world = fixtures.meshed_desk(seed=1, h=3)
    path = tmp_path / "net.json"
    save_world(world, path)
    back = load_world(path)
    assert world_to_dict(back) == world_to_dict(world)
    assert validate_world(back).empty


def test_scalar_series_expansion():
    doc = world_to_dict(fixtures.two_node_world(h=3))
    doc["nodes"][1]["demand_mw"] = 30.0     # scalar becomes a constant series
    world = world_from_dict(doc)
    assert world.net.node("b").demand == (30.0, 30.0, 30.0)


def test_world_participant_findings():
    world = fixtures.two_node_world(h=2)
    world.generators.append(Generator("gX", "nope", "z1", 10.0, 5.0))
    world.fsps.append(Fsp("fX", "a", "ESS", (1.0, 1.0), (1.0, 1.0), 5.0,
                          efficiency=1.4, energy_capacity=0.0))
    codes = {f.code for f in validate_world(world).findings}
    assert "generator-node" in codes
    assert "fsp-efficiency" in codes and "fsp-energy" in codes


def test_full_grid_covers_everything():
    world = fixtures.tso_dso_small(h=1)
    grid = full_grid(world.net)
    assert sorted(grid.nodes) == sorted(n.id for n in world.net.nodes)
    assert len(grid.all_lines) == len(world.net.lines)
