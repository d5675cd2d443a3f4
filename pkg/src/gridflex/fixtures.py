"""Bundled synthetic desk-scale networks.

The engine is exercised on small worlds that keep the topological features
of the target setting: meshed transmission and meshed distribution grids,
multiple interface substations, four bidding zones, subscription schedules
at the interfaces, and a mixed FSP fleet (storage, demand response,
renewables, generic units).
"""

from __future__ import annotations

import math

import numpy as np

from .netmodel import (BiddingZone, Fsp, Generator, InterfaceSubstation, Line,
                       Network, Node, Operator, SubscriptionLevel, World)


def _const(v: float, h: int) -> tuple[float, ...]:
    return tuple(float(v) for _ in range(h))


def _shape(base: float, h: int, peak: float = 1.25, phase: float = 0.0) -> tuple[float, ...]:
    """Smooth daily demand shape around ``base`` MW with an afternoon peak."""
    return tuple(float(base * (1.0 + (peak - 1.0) * 0.5 *
                               (1.0 - math.cos(2.0 * math.pi * (t + phase) / h))))
                 for t in range(h))


def two_node_world(h: int = 2) -> World:
    """Minimal valid network: two TSO nodes, one line, one zone, one generator."""
    nodes = [Node("a", _const(0.0, h)), Node("b", _const(30.0, h))]
    net = Network(
        nodes=nodes,
        lines=[Line("ab", "a", "b", 0.1, -100.0, 100.0)],
        zones=[BiddingZone("z1")],
        operators=[Operator("tso", "TSO")],
        interfaces=[],
        ownership={"a": "tso", "b": "tso"},
        zone_of={"a": "z1", "b": "z1"},
    )
    gens = [Generator("g1", "a", "z1", 100.0, 12.0)]
    return World(net, gens, [])


def tso_dso_small(h: int = 24, dso_demand: float = 50.0,
                  band_mw: float = 60.0, band_cost: float = 100.0,
                  fsp_up_mw: float = 10.0, fsp_bid: float = 20.0) -> World:
    """2 TSO + 2 DSO nodes, one interface with a two-band subscription."""
    nodes = [Node("d1", _const(dso_demand * 0.4, h)),
             Node("d2", _const(dso_demand * 0.6, h)),
             Node("t1", _const(0.0, h)),
             Node("t2", _const(50.0, h))]
    lines = [Line("lt", "t1", "t2", 0.1, -400.0, 400.0),
             Line("lb", "t2", "d1", 0.05, -200.0, 200.0),
             Line("ld", "d1", "d2", 0.1, -150.0, 150.0)]
    net = Network(
        nodes=nodes, lines=lines, zones=[BiddingZone("z1")],
        operators=[Operator("tso", "TSO"), Operator("dso", "DSO")],
        interfaces=[InterfaceSubstation(
            "if1", "t2", "d1",
            (SubscriptionLevel(band_mw, 0.0), SubscriptionLevel(None, band_cost)))],
        ownership={"t1": "tso", "t2": "tso", "d1": "dso", "d2": "dso"},
        zone_of={k: "z1" for k in ("t1", "t2", "d1", "d2")},
    )
    gens = [Generator("g1", "t1", "z1", 400.0, 10.0)]
    fsps = [Fsp("flex-d2", "d2", "GENERIC", _const(fsp_up_mw, h), _const(fsp_up_mw, h), fsp_bid),
            Fsp("flex-t2", "t2", "GENERIC", _const(30.0, h), _const(30.0, h), 40.0)]
    return World(net, gens, fsps)


def meshed_desk(seed: int = 0, h: int = 24) -> World:
    """Randomized meshed-to-meshed instance: 8 TSO nodes in four bidding
    zones, 6 DSO nodes, two interface substations, mixed FSP kinds."""
    rng = np.random.default_rng(1000 + seed)
    tso_nodes = [f"t{k}" for k in range(1, 9)]
    dso_nodes = [f"d{k}" for k in range(1, 7)]
    zones = ["z1", "z2", "z3", "z4"]
    zone_of = {}
    for k, nd in enumerate(tso_nodes):
        zone_of[nd] = zones[k // 2]
    for nd in dso_nodes:
        zone_of[nd] = "z2"          # distribution pocket sits in zone 2
    nodes = []
    for nd in tso_nodes:
        base = float(rng.uniform(25.0, 55.0))
        nodes.append(Node(nd, _shape(base, h, peak=1.2, phase=float(rng.integers(0, h)))))
    for nd in dso_nodes:
        base = float(rng.uniform(10.0, 24.0))
        nodes.append(Node(nd, _shape(base, h, peak=1.3, phase=float(rng.integers(0, h)))))

    def line(i, a, b, x, cap):
        return Line(f"l{i}", a, b, x, -cap, cap)

    lines = []
    ring = tso_nodes + [tso_nodes[0]]
    for k in range(8):
        lines.append(line(k, ring[k], ring[k + 1],
                          float(rng.uniform(0.06, 0.14)), float(rng.uniform(180.0, 280.0))))
    lines.append(line(8, "t1", "t5", float(rng.uniform(0.08, 0.16)), 220.0))
    lines.append(line(9, "t2", "t6", float(rng.uniform(0.08, 0.16)), 220.0))
    dring = dso_nodes + [dso_nodes[0]]
    for k in range(6):
        lines.append(line(10 + k, dring[k], dring[k + 1],
                          float(rng.uniform(0.05, 0.12)), float(rng.uniform(120.0, 200.0))))
    lines.append(line(16, "d2", "d5", float(rng.uniform(0.06, 0.12)), 150.0))
    lines.append(line(17, "t3", "d1", 0.03, 160.0))
    lines.append(line(18, "t6", "d4", 0.03, 160.0))

    band1 = float(rng.uniform(35.0, 55.0))
    band2 = float(rng.uniform(30.0, 50.0))
    interfaces = [
        InterfaceSubstation("if1", "t3", "d1",
                            (SubscriptionLevel(band1, 0.0), SubscriptionLevel(None, float(rng.uniform(60.0, 120.0))))),
        InterfaceSubstation("if2", "t6", "d4",
                            (SubscriptionLevel(band2, 0.0), SubscriptionLevel(None, float(rng.uniform(60.0, 120.0))))),
    ]
    ownership = {nd: "tso" for nd in tso_nodes}
    ownership.update({nd: "dso" for nd in dso_nodes})
    net = Network(
        nodes=nodes, lines=lines, zones=[BiddingZone(z) for z in zones],
        operators=[Operator("tso", "TSO"), Operator("dso", "DSO")],
        interfaces=interfaces, ownership=ownership, zone_of=zone_of,
        ntc={("z1", "z2"): (-250.0, 250.0), ("z2", "z3"): (-250.0, 250.0),
             ("z3", "z4"): (-250.0, 250.0), ("z4", "z1"): (-250.0, 250.0)},
    )
    bids = rng.permutation(np.linspace(8.0, 42.0, 9))
    gens = []
    for k, z in enumerate(zones):
        at = tso_nodes[2 * k]
        gens.append(Generator(f"g{z}a", at, z, float(rng.uniform(150.0, 240.0)),
                              float(bids[2 * k]), technology="hydro"))
        gens.append(Generator(f"g{z}b", tso_nodes[2 * k + 1], z,
                              float(rng.uniform(90.0, 150.0)), float(bids[2 * k + 1]),
                              technology="thermal"))
    wind_profile = tuple(float(0.35 + 0.3 * math.sin(2 * math.pi * (t + 3) / h) ** 2)
                         for t in range(h))
    gens.append(Generator("wind-d6", "d6", "z2", 40.0, 1.0, is_res=True,
                          profile=wind_profile, technology="wind"))
    fsps = [
        Fsp("ess-d2", "d2", "ESS", _const(5.0, h), _const(5.0, h),
            float(rng.uniform(7.0, 10.0)), soc_init=0.5, soc_min=0.1, soc_max=0.9,
            efficiency=0.8, energy_capacity=20.0),
        Fsp("dr-d3", "d3", "DR", _const(4.0, h), _const(2.0, h),
            float(rng.uniform(10.0, 14.0)), dr_max_hours=0.25),
        Fsp("gen-d5", "d5", "GENERIC", _const(6.0, h), _const(6.0, h),
            float(rng.uniform(14.0, 20.0))),
        Fsp("res-d6", "d6", "RES", _const(40.0, h), _const(40.0, h),
            float(rng.uniform(2.0, 5.0)), max_flex_up=0.05, max_flex_down=1.0,
            source_generator="wind-d6"),
        Fsp("gen-t2", "t2", "GENERIC", _const(25.0, h), _const(25.0, h),
            float(rng.uniform(18.0, 26.0))),
        Fsp("gen-t7", "t7", "GENERIC", _const(25.0, h), _const(25.0, h),
            float(rng.uniform(22.0, 30.0))),
    ]
    return World(net, gens, fsps)


def subscription_world(h: int = 24, import_mw: float = 58.0, band_mw: float = 50.0,
                       penalty: float = 100.0, fsp_mw: float = 5.0,
                       fsp_bid: float = 15.0) -> World:
    """One-interface DSO whose import exceeds the free subscription band.

    The cheap distribution FSP can displace part of the costly band, which
    is the penalty-relief pattern the local flexibility market exists for.
    """
    world = tso_dso_small(h, dso_demand=import_mw, band_mw=band_mw,
                          band_cost=penalty, fsp_up_mw=fsp_mw, fsp_bid=fsp_bid)
    return world


def congestible_dso(h: int = 24, feeder_cap: float = 40.0, demand: float = 38.0,
                    fsp_mw: float = 5.0, fsp_bid: float = 25.0) -> World:
    """DSO with an internal feeder limit; load beyond it needs local FSPs.

    Node d2 hangs off d1 behind a single line of ``feeder_cap`` MW; local
    flexibility at d2 covers overloads until it runs out, after which the
    market records non-supplied flexibility.
    """
    nodes = [Node("d1", _const(5.0, h)), Node("d2", _const(demand, h)),
             Node("t1", _const(0.0, h)), Node("t2", _const(40.0, h))]
    lines = [Line("lt", "t1", "t2", 0.1, -500.0, 500.0),
             Line("lb", "t2", "d1", 0.05, -300.0, 300.0),
             Line("feeder", "d1", "d2", 0.1, -feeder_cap, feeder_cap)]
    net = Network(
        nodes=nodes, lines=lines, zones=[BiddingZone("z1")],
        operators=[Operator("tso", "TSO"), Operator("dso", "DSO")],
        interfaces=[InterfaceSubstation("if1", "t2", "d1",
                                        (SubscriptionLevel(None, 0.0),))],
        ownership={"t1": "tso", "t2": "tso", "d1": "dso", "d2": "dso"},
        zone_of={k: "z1" for k in ("t1", "t2", "d1", "d2")},
    )
    gens = [Generator("g1", "t1", "z1", 500.0, 10.0)]
    fsps = [Fsp("flex-d2", "d2", "GENERIC", _const(fsp_mw, h), _const(fsp_mw, h), fsp_bid)]
    return World(net, gens, fsps)


def demo_world(h: int = 24) -> World:
    """Four-zone demo system with a Nordic-flavoured generation mix.

    Technologies and merit order: wind (profile-limited, ~1 EUR/MWh),
    must-run nuclear, hydro as the marginal workhorse, thermal peakers.
    """
    world = meshed_desk(seed=42, h=h)
    net = world.net
    gens = []
    wind_profile = tuple(float(0.3 + 0.25 * math.sin(2 * math.pi * (t + 5) / h) ** 2)
                         for t in range(h))
    total_base = sum(n.demand[0] for n in net.nodes)
    for k, z in enumerate(("z1", "z2", "z3", "z4")):
        at = f"t{2 * k + 1}"
        gens.append(Generator(f"hydro-{z}", at, z, 170.0, 15.0, technology="hydro"))
        gens.append(Generator(f"thermal-{z}", f"t{2 * k + 2}", z, 80.0, 40.0,
                              cycling_cost=5.0, min_uptime=3, min_dispatch=0.3,
                              technology="thermal"))
    gens.append(Generator("nuclear-z1", "t2", "z1", 120.0, 8.0, must_run=True,
                          min_dispatch=0.5, technology="nuclear"))
    gens.append(Generator("wind-z3", "t5", "z3", 140.0, 1.0, is_res=True,
                          profile=wind_profile, technology="wind"))
    gens.append(Generator("wind-d6", "d6", "z2", 30.0, 1.0, is_res=True,
                          profile=wind_profile, technology="wind"))
    return World(net, gens, list(world.fsps))


def synthetic_year_demand(net: Network, seed: int = 0, n_days: int = 365) -> np.ndarray:
    """Hourly nodal demand for a year: seasonal swing, weekday/weekend split."""
    rng = np.random.default_rng(seed)
    bases = np.array([n.demand[0] for n in net.nodes])
    hours = np.arange(24)
    daily = 1.0 + 0.2 * np.sin((hours - 6) / 24 * 2 * np.pi)
    out = np.zeros((n_days * 24, len(bases)))
    for d in range(n_days):
        seasonal = 1.0 + 0.3 * math.cos(2 * math.pi * d / 365.0)   # winter peak
        weekend = 0.82 if d % 7 in (5, 6) else 1.0
        noise = rng.normal(1.0, 0.02, size=len(bases))
        out[d * 24:(d + 1) * 24, :] = np.outer(daily, bases * seasonal * weekend * noise)
    return np.maximum(out, 0.0)
