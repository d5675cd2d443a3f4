"""DC sensitivities against an independent dense susceptance-solve oracle."""

import numpy as np
import pytest

from gridflex import fixtures
from gridflex.dcflow import (DimensionMismatch, DisconnectedGrid, EmptyDsoNodeSet,
                             ZeroReactance, compute_impact_factors, compute_ptdf,
                             dc_flows, fill_impact_factors, flow_from_angles,
                             import_sensitivities, interface_flow_from_injections)
from gridflex.netmodel import (BiddingZone, InterfaceSubstation, Line, Network,
                               Node, Operator, SubGrid, full_grid)


def grid_of(lines, *nodes):
    return SubGrid("g", "ALL", tuple(nodes), tuple(lines), ())


def dense_oracle_flows(grid, injections, slack):
    """Independent dense solve: Laplacian, pinned slack, flows from angles."""
    nodes = list(grid.nodes)
    idx = {n: i for i, n in enumerate(nodes)}
    n = len(nodes)
    b = np.zeros((n, n))
    lines = [l for l in grid.all_lines if l.from_node in idx and l.to_node in idx]
    for ln in lines:
        y = 1.0 / ln.reactance
        i, j = idx[ln.from_node], idx[ln.to_node]
        b[i, i] += y
        b[j, j] += y
        b[i, j] -= y
        b[j, i] -= y
    p = np.zeros(n)
    for nd, mw in injections.items():
        p[idx[nd]] += mw
    keep = [i for i in range(n) if i != idx[slack]]
    theta = np.zeros(n)
    theta[keep] = np.linalg.solve(b[np.ix_(keep, keep)], p[keep])
    return {ln.id: (theta[idx[ln.from_node]] - theta[idx[ln.to_node]]) / ln.reactance
            for ln in lines}


def test_flow_from_angles_hand_values():
    ln = Line("l", "a", "b", 0.1)
    assert flow_from_angles(ln, 0.01, 0.0, 100.0) == pytest.approx(10.0)
    assert flow_from_angles(ln, 0.5, 0.5, 100.0) == 0.0
    # swapping endpoints negates the flow
    assert flow_from_angles(ln, 0.0, 0.01, 100.0) == pytest.approx(-10.0)
    with pytest.raises(ZeroReactance):
        flow_from_angles(Line("z", "a", "b", 0.0), 0.1, 0.0, 100.0)


def test_ptdf_two_node():
    grid = grid_of([Line("l12", "n1", "n2", 0.2)], "n1", "n2")
    ptdf = compute_ptdf(grid, slack="n1")
    assert ptdf.entry("l12", "n1") == 0.0
    assert ptdf.entry("l12", "n2") == pytest.approx(-1.0)


def test_ptdf_triangle_symmetry():
    lines = [Line("l12", "n1", "n2", 0.1), Line("l13", "n1", "n3", 0.1),
             Line("l23", "n2", "n3", 0.1)]
    grid = grid_of(lines, "n1", "n2", "n3")
    ptdf = compute_ptdf(grid, slack="n1")
    assert abs(ptdf.entry("l12", "n2")) == pytest.approx(2.0 / 3.0)
    assert abs(ptdf.entry("l13", "n2")) == pytest.approx(1.0 / 3.0)
    assert abs(ptdf.entry("l23", "n2")) == pytest.approx(1.0 / 3.0)
    assert ptdf.entry("l12", "n1") == 0.0
    assert ptdf.entry("l13", "n1") == 0.0


def test_ptdf_rows_bounded():
    world = fixtures.meshed_desk(seed=2, h=1)
    ptdf = compute_ptdf(full_grid(world.net))
    assert np.all(np.abs(ptdf.matrix) <= 1.0 + 1e-9)


def bundled_small_grids():
    worlds = [fixtures.two_node_world(h=1), fixtures.tso_dso_small(h=1),
              fixtures.congestible_dso(h=1), fixtures.subscription_world(h=1)]
    return [(type(w).__name__ + str(i), full_grid(w.net)) for i, w in enumerate(worlds)]


def test_ptdf_matches_dense_oracle_on_bundled_grids():
    rng = np.random.default_rng(0)
    for name, grid in bundled_small_grids():
        assert len(grid.nodes) <= 10
        slack = min(grid.nodes)
        ptdf = compute_ptdf(grid, slack)
        for _ in range(5):
            inj = {nd: float(rng.normal(0, 20)) for nd in grid.nodes if nd != slack}
            inj[slack] = -sum(inj.values())
            flows = ptdf.flows(inj)
            oracle = dense_oracle_flows(grid, inj, slack)
            for lid, f in oracle.items():
                assert flows[lid] == pytest.approx(f, abs=1e-8), (name, lid)


def test_slack_invariance_of_flows():
    rng = np.random.default_rng(1)
    for name, grid in bundled_small_grids():
        nodes = sorted(grid.nodes)
        inj = {nd: float(rng.normal(0, 10)) for nd in nodes[1:]}
        inj[nodes[0]] = -sum(inj.values())
        base = compute_ptdf(grid, nodes[0]).flows(inj)
        for slack in nodes[1:]:
            alt = compute_ptdf(grid, slack).flows(inj)
            for lid in base:
                assert alt[lid] == pytest.approx(base[lid], abs=1e-8), (name, slack)


def test_superposition_exact():
    grid = bundled_small_grids()[1][1]
    ptdf = compute_ptdf(grid)
    nodes = sorted(grid.nodes)
    a = {nodes[1]: 7.0, nodes[0]: -7.0}
    b = {nodes[2]: -3.0, nodes[0]: 3.0}
    ab = {nd: a.get(nd, 0.0) + b.get(nd, 0.0) for nd in nodes}
    fa, fb, fab = ptdf.flows(a), ptdf.flows(b), ptdf.flows(ab)
    for lid in fab:
        assert fab[lid] == pytest.approx(fa[lid] + fb[lid], abs=1e-12)


def test_disconnected_grid_raises():
    grid = grid_of([Line("l", "a", "b", 0.1)], "a", "b", "c")
    with pytest.raises(DisconnectedGrid):
        compute_ptdf(grid, slack="a")


def test_impact_single_interface_is_one():
    world = fixtures.tso_dso_small(h=1)
    fill_impact_factors(world.net)
    assert world.net.interfaces[0].impact == pytest.approx(1.0, abs=1e-12)


def symmetric_two_interface_net(x_right=0.1):
    h = 1
    nodes = [Node(n, (10.0,) * h) if n.startswith("d") else Node(n, (0.0,) * h)
             for n in ("d1", "d2", "t1", "t2", "t3")]
    lines = [Line("tt1", "t1", "t2", 0.1), Line("tt2", "t1", "t3", 0.1),
             Line("b1", "t2", "d1", 0.1), Line("b2", "t3", "d2", x_right),
             Line("dd", "d1", "d2", 0.1)]
    return Network(
        nodes=nodes, lines=lines, zones=[BiddingZone("z")],
        operators=[Operator("tso", "TSO"), Operator("dso", "DSO")],
        interfaces=[InterfaceSubstation("i1", "t2", "d1"),
                    InterfaceSubstation("i2", "t3", "d2")],
        ownership={"t1": "tso", "t2": "tso", "t3": "tso", "d1": "dso", "d2": "dso"},
        zone_of={k: "z" for k in ("d1", "d2", "t1", "t2", "t3")},
    )


def test_impact_symmetric_split():
    net = symmetric_two_interface_net()
    fill_impact_factors(net)
    shares = {i.id: i.impact for i in net.interfaces}
    assert shares["i1"] == pytest.approx(0.5, abs=1e-9)
    assert shares["i2"] == pytest.approx(0.5, abs=1e-9)
    assert sum(shares.values()) == pytest.approx(1.0, abs=1e-12)


def test_impact_prefers_low_reactance_corridor():
    net = symmetric_two_interface_net(x_right=0.5)   # corridor 2 is long
    fill_impact_factors(net)
    shares = {i.id: i.impact for i in net.interfaces}
    assert shares["i1"] > shares["i2"]
    assert sum(shares.values()) == pytest.approx(1.0, abs=1e-12)


def test_impact_raw_averages_switch():
    net = symmetric_two_interface_net()
    ptdf = compute_ptdf(full_grid(net), slack="t1")
    raw = compute_impact_factors(ptdf, net.interfaces, net.nodes_of("dso"), net,
                                 normalize=False)
    norm = compute_impact_factors(ptdf, net.interfaces, net.nodes_of("dso"), net)
    assert sum(norm.values()) == pytest.approx(1.0, abs=1e-12)
    scale = sum(raw.values())
    for k in raw:
        assert norm[k] == pytest.approx(raw[k] / scale, abs=1e-12)
    with pytest.raises(EmptyDsoNodeSet):
        compute_impact_factors(ptdf, net.interfaces, [], net)


def test_interface_flow_from_injections():
    world = fixtures.tso_dso_small(h=1)
    net = world.net
    ptdf = compute_ptdf(full_grid(net), slack="t1")
    itf = net.interfaces[0]
    assert interface_flow_from_injections({}, ptdf, itf, net) == 0.0
    # a 10 MW load at one DSO node of a single-interface DSO is all imported
    flow = interface_flow_from_injections({"d2": -10.0}, ptdf, itf, net)
    assert flow == pytest.approx(10.0, abs=1e-9)
    with pytest.raises(DimensionMismatch):
        interface_flow_from_injections({"nope": 1.0}, ptdf, itf, net)


def test_interface_flow_matches_full_dc_solve():
    net = symmetric_two_interface_net(x_right=0.17)
    rng = np.random.default_rng(4)
    grid = full_grid(net)
    ptdf = compute_ptdf(grid, slack="t1")
    inj = {nd: float(rng.normal(0, 5)) for nd in grid.nodes if nd != "t1"}
    inj["t1"] = -sum(inj.values())
    _, flows = dc_flows(grid, inj, slack="t1", base_power=net.base_power)
    for itf in net.interfaces:
        got = interface_flow_from_injections(inj, ptdf, itf, net)
        line = net.boundary_line(itf)
        orient = 1.0 if line.from_node == itf.tso_node else -1.0
        # dc_flows works in MW with base power folded in; PTDF path is p.u.-free
        assert got == pytest.approx(orient * flows[line.id] / net.base_power * net.base_power,
                                    abs=1e-6)


def test_ptdf_csv_dump(tmp_path):
    grid = bundled_small_grids()[0][1]
    ptdf = compute_ptdf(grid)
    path = tmp_path / "ptdf.csv"
    ptdf.to_csv(path)
    header = path.read_text().splitlines()[0].split(",")
    assert header[0] == "line"
    assert header[1:] == sorted(grid.nodes)
