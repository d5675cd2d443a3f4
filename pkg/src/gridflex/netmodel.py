"""Grid and participant data model, validation and operator partitioning.

Conventions used across the whole engine:

* Every node belongs to exactly one operator (TSO or DSO) and one bidding
  zone.  Each TSO-DSO interface substation is a coupled node pair, one node
  per side, joined by exactly one boundary line; the boundary line is how
  power crosses between the grids.
* Downward capacities are stored as magnitudes: ``cap_down[h] = 5`` means
  the resource can reduce its net injection by up to 5 MW in hour ``h``.
* ESS state of charge is tracked in MWh internally; bounds and the initial
  state are given per unit of the energy capacity.
* The horizon is the length of the nodal demand series (24 for a
  representative day; shorter in unit fixtures).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

TSO = "TSO"
DSO = "DSO"

FSP_KINDS = ("DR", "RES", "ESS", "GENERIC")


class UnvalidatedNetwork(Exception):
    """Raised when an operation requires a clean validation report."""


@dataclass(frozen=True)
class Operator:
    id: str
    kind: str  # TSO or DSO


@dataclass(frozen=True)
class BiddingZone:
    id: str


@dataclass(frozen=True)
class Node:
    id: str
    demand: tuple[float, ...]        # MW per hour
    theta_min: float = -0.5          # radians
    theta_max: float = 0.5


@dataclass(frozen=True)
class Line:
    id: str
    from_node: str
    to_node: str
    reactance: float                 # p.u.
    flow_min: float = -1e4           # MW (<= 0)
    flow_max: float = 1e4            # MW (>= 0)

    def other(self, node_id: str) -> str:
        return self.to_node if node_id == self.from_node else self.from_node


@dataclass(frozen=True)
class SubscriptionLevel:
    width: float | None              # MW; None = open-ended last band
    cost: float                      # EUR/MWh


@dataclass
class InterfaceSubstation:
    """Coupled TSO/DSO node pair with a subscription schedule.

    ``impact`` is the per-interface share of the owning DSO's net exchange;
    it is filled by :mod:`gridflex.dcflow` and must sum to 1 over each DSO's
    interfaces.
    """
    id: str
    tso_node: str
    dso_node: str
    levels: tuple[SubscriptionLevel, ...] = ()
    impact: float | None = None


@dataclass(frozen=True)
class Generator:
    id: str
    node: str
    zone: str
    capacity: float                  # MW
    bid: float                       # EUR/MWh
    cycling_cost: float = 0.0        # EUR/MW per start
    min_uptime: int = 0              # hours
    min_dispatch: float = 0.0        # p.u. of capacity while committed
    is_res: bool = False
    profile: tuple[float, ...] | None = None   # p.u., required when is_res
    must_run: bool = False
    technology: str = "other"

    @property
    def needs_commitment(self) -> bool:
        """Commitment binaries are only created when they can matter."""
        if self.must_run:
            return False  # committed by definition
        return self.cycling_cost > 0 or self.min_uptime > 1 or self.min_dispatch > 0


@dataclass(frozen=True)
class Fsp:
    id: str
    node: str
    kind: str                        # DR | RES | ESS | GENERIC
    cap_up: tuple[float, ...]        # MW per hour
    cap_down: tuple[float, ...]      # MW per hour, magnitude
    bid: float                       # EUR/MWh
    dr_max_hours: float = 0.0        # fraction multiplying the capacity sum
    max_flex_up: float = 0.0         # p.u. of day-ahead schedule (RES)
    max_flex_down: float = 0.0
    qda: tuple[float, ...] | None = None
    soc_init: float = 0.5            # p.u. of energy capacity (ESS)
    soc_min: float = 0.0
    soc_max: float = 1.0
    efficiency: float = 1.0
    energy_capacity: float = 0.0     # MWh
    source_generator: str | None = None


@dataclass
class Network:
    nodes: list[Node]
    lines: list[Line]
    zones: list[BiddingZone]
    operators: list[Operator]
    interfaces: list[InterfaceSubstation]
    ownership: dict[str, str]        # node id -> operator id
    zone_of: dict[str, str]          # node id -> zone id
    ntc: dict[tuple[str, str], tuple[float, float]] = field(default_factory=dict)
    base_power: float = 100.0        # MW

    def __post_init__(self):
        self._node_by_id = {n.id: n for n in self.nodes}
        self._op_by_id = {o.id: o for o in self.operators}

    def node(self, node_id: str) -> Node:
        return self._node_by_id[node_id]

    def operator(self, op_id: str) -> Operator:
        return self._op_by_id[op_id]

    def operator_kind_of_node(self, node_id: str) -> str:
        return self._op_by_id[self.ownership[node_id]].kind

    @property
    def horizon(self) -> int:
        return len(self.nodes[0].demand) if self.nodes else 0

    @property
    def tso_ids(self) -> list[str]:
        return [o.id for o in self.operators if o.kind == TSO]

    @property
    def dso_ids(self) -> list[str]:
        return [o.id for o in self.operators if o.kind == DSO]

    def nodes_of(self, op_id: str) -> list[str]:
        return [n.id for n in self.nodes if self.ownership.get(n.id) == op_id]

    def interfaces_of(self, dso_id: str) -> list[InterfaceSubstation]:
        dso_nodes = set(self.nodes_of(dso_id))
        return [itf for itf in self.interfaces if itf.dso_node in dso_nodes]

    def boundary_line(self, itf: InterfaceSubstation) -> Line:
        for ln in self.lines:
            if {ln.from_node, ln.to_node} == {itf.tso_node, itf.dso_node}:
                return ln
        raise KeyError(f"no boundary line for interface {itf.id}")

    def is_boundary(self, line: Line) -> bool:
        a = self.ownership.get(line.from_node)
        b = self.ownership.get(line.to_node)
        return a is not None and b is not None and a != b


@dataclass
class World:
    """A network together with its market participants."""
    net: Network
    generators: list[Generator]
    fsps: list[Fsp]

    def fsps_at(self, node_ids: Iterable[str]) -> list[Fsp]:
        wanted = set(node_ids)
        return [f for f in self.fsps if f.node in wanted]

    def distribution_fsps(self) -> list[Fsp]:
        return [f for f in self.fsps
                if self.net.operator_kind_of_node(f.node) == DSO]


# -- validation ---------------------------------------------------------

@dataclass(frozen=True)
class Finding:
    code: str
    message: str


@dataclass
class ValidationReport:
    findings: list[Finding] = field(default_factory=list)

    def add(self, code: str, message: str) -> None:
        self.findings.append(Finding(code, message))

    @property
    def empty(self) -> bool:
        return not self.findings

    def __str__(self) -> str:
        return "\n".join(f"[{f.code}] {f.message}" for f in self.findings) or "ok"


def _connected(node_ids: set[str], lines: Iterable[Line]) -> bool:
    if not node_ids:
        return True
    adj: dict[str, list[str]] = {n: [] for n in node_ids}
    for ln in lines:
        if ln.from_node in node_ids and ln.to_node in node_ids:
            adj[ln.from_node].append(ln.to_node)
            adj[ln.to_node].append(ln.from_node)
    seen = set()
    stack = [next(iter(sorted(node_ids)))]
    while stack:
        cur = stack.pop()
        if cur in seen:
            continue
        seen.add(cur)
        stack.extend(adj[cur])
    return seen == node_ids


def validate_network(net: Network) -> ValidationReport:
    """Collect every invariant violation; an empty report means usable."""
    rep = ValidationReport()
    node_ids = {n.id for n in net.nodes}
    if len(node_ids) != len(net.nodes):
        rep.add("dup-node", "duplicate node ids")
    op_ids = {o.id for o in net.operators}
    zone_ids = {z.id for z in net.zones}
    for o in net.operators:
        if o.kind not in (TSO, DSO):
            rep.add("bad-operator-kind", f"operator {o.id} has kind {o.kind!r}")

    horizon = net.horizon
    for n in net.nodes:
        if n.id not in net.ownership:
            rep.add("no-owner", f"node {n.id} has no operator")
        elif net.ownership[n.id] not in op_ids:
            rep.add("bad-owner", f"node {n.id} owned by unknown operator {net.ownership[n.id]}")
        if n.id not in net.zone_of:
            rep.add("no-zone", f"node {n.id} has no bidding zone")
        elif net.zone_of[n.id] not in zone_ids:
            rep.add("bad-zone", f"node {n.id} in unknown zone {net.zone_of[n.id]}")
        if not n.theta_min < n.theta_max:
            rep.add("angle-bounds", f"node {n.id} angle bounds not ordered")
        if len(n.demand) != horizon:
            rep.add("demand-length", f"node {n.id} demand series length {len(n.demand)} != {horizon}")

    line_ids = set()
    for ln in net.lines:
        if ln.id in line_ids:
            rep.add("dup-line", f"duplicate line id {ln.id}")
        line_ids.add(ln.id)
        for end in (ln.from_node, ln.to_node):
            if end not in node_ids:
                rep.add("dangling-endpoint", f"line {ln.id} references missing node {end}")
        if ln.reactance <= 0:
            rep.add("bad-reactance", f"line {ln.id} reactance {ln.reactance} <= 0")
        if not (ln.flow_min <= 0.0 <= ln.flow_max):
            rep.add("flow-bounds", f"line {ln.id} bounds do not bracket zero")

    # operator subgraphs must be internally connected
    for op in net.operators:
        members = {n.id for n in net.nodes if net.ownership.get(n.id) == op.id}
        internal = [ln for ln in net.lines
                    if net.ownership.get(ln.from_node) == op.id
                    and net.ownership.get(ln.to_node) == op.id]
        if members and not _connected(members, internal):
            rep.add("operator-disconnected",
                    f"operator {op.id} subgraph is disconnected")

    # interfaces: TSO side / DSO side consistent, one boundary line each,
    # every cross-operator line registered as an interface
    itf_pairs = set()
    for itf in net.interfaces:
        ok = True
        for side, want in ((itf.tso_node, TSO), (itf.dso_node, DSO)):
            if side not in node_ids:
                rep.add("interface-node", f"interface {itf.id} references missing node {side}")
                ok = False
            elif net.ownership.get(side) in op_ids and net.operator(net.ownership[side]).kind != want:
                rep.add("interface-side", f"interface {itf.id} node {side} is not on the {want} side")
        if ok:
            pair = frozenset((itf.tso_node, itf.dso_node))
            itf_pairs.add(pair)
            n_bound = sum(1 for ln in net.lines if {ln.from_node, ln.to_node} == set(pair))
            if n_bound != 1:
                rep.add("interface-line",
                        f"interface {itf.id} needs exactly one boundary line, found {n_bound}")
        widths = [lv.width for lv in itf.levels]
        costs = [lv.cost for lv in itf.levels]
        for k, w in enumerate(widths):
            if w is None and k != len(widths) - 1:
                rep.add("level-width", f"interface {itf.id} open band must be last")
            elif w is not None and w <= 0:
                rep.add("level-width", f"interface {itf.id} level {k} width {w} <= 0")
        if any(b < a for a, b in zip(costs, costs[1:])):
            rep.add("level-costs", f"interface {itf.id} level costs must be non-decreasing")
    for ln in net.lines:
        if net.is_boundary(ln) and frozenset((ln.from_node, ln.to_node)) not in itf_pairs:
            rep.add("unregistered-boundary",
                    f"cross-operator line {ln.id} has no interface substation")

    for (za, zb), (lo, hi) in net.ntc.items():
        if za not in zone_ids or zb not in zone_ids:
            rep.add("ntc-zone", f"transfer corridor ({za},{zb}) references unknown zone")
        if lo > hi:
            rep.add("ntc-bounds", f"corridor ({za},{zb}) has lower bound above upper")

    # impact factors, when present, must sum to 1 per DSO
    for dso in net.dso_ids:
        itfs = net.interfaces_of(dso)
        vals = [i.impact for i in itfs if i.impact is not None]
        if vals and len(vals) == len(itfs) and abs(sum(vals) - 1.0) > 1e-9:
            rep.add("impact-sum", f"impact factors of DSO {dso} sum to {sum(vals)}")
    return rep


def validate_world(world: World) -> ValidationReport:
    """Network validation plus participant consistency checks."""
    rep = validate_network(world.net)
    node_ids = {n.id for n in world.net.nodes}
    zone_ids = {z.id for z in world.net.zones}
    horizon = world.net.horizon
    seen = set()
    for g in world.generators:
        if g.id in seen:
            rep.add("dup-generator", f"duplicate generator id {g.id}")
        seen.add(g.id)
        if g.node not in node_ids:
            rep.add("generator-node", f"generator {g.id} at unknown node {g.node}")
        if g.zone not in zone_ids:
            rep.add("generator-zone", f"generator {g.id} in unknown zone {g.zone}")
        elif g.node in node_ids and world.net.zone_of.get(g.node) != g.zone:
            rep.add("generator-zone", f"generator {g.id} zone differs from its node's zone")
        if not 0.0 <= g.min_dispatch <= 1.0:
            rep.add("generator-mindispatch", f"generator {g.id} min_dispatch outside [0,1]")
        if g.min_uptime < 0 or int(g.min_uptime) != g.min_uptime:
            rep.add("generator-minup", f"generator {g.id} min_uptime must be a whole number of hours")
        if g.is_res:
            if g.profile is None or len(g.profile) != horizon:
                rep.add("generator-profile", f"RES generator {g.id} needs a {horizon}-hour profile")
            elif any(not 0.0 <= v <= 1.0 for v in g.profile):
                rep.add("generator-profile", f"generator {g.id} profile values outside [0,1]")
    seen = set()
    for f in world.fsps:
        if f.id in seen:
            rep.add("dup-fsp", f"duplicate FSP id {f.id}")
        seen.add(f.id)
        if f.node not in node_ids:
            rep.add("fsp-node", f"FSP {f.id} at unknown node {f.node}")
        if f.kind not in FSP_KINDS:
            rep.add("fsp-kind", f"FSP {f.id} kind {f.kind!r} unknown")
        if len(f.cap_up) != horizon or len(f.cap_down) != horizon:
            rep.add("fsp-caps", f"FSP {f.id} capacity series length != horizon")
        if any(v < 0 for v in f.cap_up) or any(v < 0 for v in f.cap_down):
            rep.add("fsp-caps", f"FSP {f.id} capacities must be non-negative magnitudes")
        if f.kind == "ESS":
            if not 0.0 < f.efficiency <= 1.0:
                rep.add("fsp-efficiency", f"ESS {f.id} efficiency outside (0,1]")
            if not f.soc_min <= f.soc_init <= f.soc_max:
                rep.add("fsp-soc", f"ESS {f.id} initial state of charge outside bounds")
            if f.energy_capacity <= 0:
                rep.add("fsp-energy", f"ESS {f.id} needs a positive energy capacity")
        if f.kind == "RES" and f.qda is not None and len(f.qda) != horizon:
            rep.add("fsp-qda", f"RES FSP {f.id} day-ahead series length != horizon")
    return rep


# -- partitioning --------------------------------------------------------

@dataclass
class SubGrid:
    operator: str
    kind: str
    nodes: tuple[str, ...]
    internal_lines: tuple[Line, ...]
    boundary_lines: tuple[Line, ...]

    @property
    def all_lines(self) -> tuple[Line, ...]:
        return self.internal_lines + self.boundary_lines


def partition_by_operator(net: Network, report: ValidationReport | None = None) -> dict[str, SubGrid]:
    """Split the network per system operator.

    Boundary lines (those incident to interface substations) are tagged in
    both adjoining subgrids; everything else appears exactly once.
    """
    report = validate_network(net) if report is None else report
    if not report.empty:
        raise UnvalidatedNetwork(str(report))
    out: dict[str, SubGrid] = {}
    for op in net.operators:
        members = tuple(n.id for n in net.nodes if net.ownership[n.id] == op.id)
        mset = set(members)
        internal = tuple(ln for ln in net.lines
                         if ln.from_node in mset and ln.to_node in mset)
        boundary = tuple(ln for ln in net.lines if net.is_boundary(ln)
                         and (ln.from_node in mset or ln.to_node in mset))
        out[op.id] = SubGrid(op.id, op.kind, members, internal, boundary)
    return out


def full_grid(net: Network) -> SubGrid:
    """The whole coupled network as a single grid (for combined sensitivities)."""
    return SubGrid("all", "ALL", tuple(n.id for n in net.nodes),
                   tuple(ln for ln in net.lines if not net.is_boundary(ln)),
                   tuple(ln for ln in net.lines if net.is_boundary(ln)))


def subscription_cost(levels: tuple[SubscriptionLevel, ...], power: float) -> float:
    """Cumulative cost of importing ``power`` MW through a subscription schedule.

    Bands fill in order; convex piecewise-linear because level costs are
    non-decreasing.  Exports (negative power) cost nothing.
    """
    remaining = max(power, 0.0)
    cost = 0.0
    for lv in levels:
        take = remaining if lv.width is None else min(remaining, lv.width)
        cost += take * lv.cost
        remaining -= take
        if remaining <= 0:
            break
    return cost


# -- JSON serialization ---------------------------------------------------

SCHEMA_VERSION = 1


def _series(value, horizon: int, what: str) -> tuple[float, ...]:
    if isinstance(value, (int, float)):
        return tuple(float(value) for _ in range(horizon))
    out = tuple(float(v) for v in value)
    if len(out) != horizon:
        raise ValueError(f"{what}: series length {len(out)} != horizon {horizon}")
    return out


def world_to_dict(world: World) -> dict:
    net = world.net
    return {
        "schema_version": SCHEMA_VERSION,
        "base_power_mw": net.base_power,
        "horizon": net.horizon,
        "operators": [{"id": o.id, "kind": o.kind} for o in net.operators],
        "zones": [{"id": z.id} for z in net.zones],
        "ntc": [{"from_zone": a, "to_zone": b, "min_mw": lo, "max_mw": hi}
                for (a, b), (lo, hi) in sorted(net.ntc.items())],
        "nodes": [{"id": n.id, "operator": net.ownership[n.id],
                   "zone": net.zone_of[n.id], "demand_mw": list(n.demand),
                   "theta_min_rad": n.theta_min, "theta_max_rad": n.theta_max}
                  for n in net.nodes],
        "lines": [{"id": l.id, "from_node": l.from_node, "to_node": l.to_node,
                   "reactance_pu": l.reactance, "flow_min_mw": l.flow_min,
                   "flow_max_mw": l.flow_max} for l in net.lines],
        "interfaces": [{"id": i.id, "tso_node": i.tso_node, "dso_node": i.dso_node,
                        "impact": i.impact,
                        "levels": [{"width_mw": lv.width, "cost_eur_per_mwh": lv.cost}
                                   for lv in i.levels]} for i in net.interfaces],
        "generators": [{"id": g.id, "node": g.node, "zone": g.zone,
                        "capacity_mw": g.capacity, "bid_eur_per_mwh": g.bid,
                        "cycling_cost_eur_per_mw": g.cycling_cost,
                        "min_uptime_h": g.min_uptime, "min_dispatch_pu": g.min_dispatch,
                        "is_res": g.is_res,
                        "profile_pu": list(g.profile) if g.profile else None,
                        "must_run": g.must_run, "technology": g.technology}
                       for g in world.generators],
        "fsps": [{"id": f.id, "node": f.node, "kind": f.kind,
                  "cap_up_mw": list(f.cap_up), "cap_down_mw": list(f.cap_down),
                  "bid_eur_per_mwh": f.bid, "dr_max_hours": f.dr_max_hours,
                  "max_flex_up_pu": f.max_flex_up, "max_flex_down_pu": f.max_flex_down,
                  "qda_mw": list(f.qda) if f.qda else None,
                  "soc_init_pu": f.soc_init, "soc_min_pu": f.soc_min,
                  "soc_max_pu": f.soc_max, "efficiency": f.efficiency,
                  "energy_capacity_mwh": f.energy_capacity,
                  "source_generator": f.source_generator} for f in world.fsps],
    }


def world_from_dict(doc: Mapping) -> World:
    horizon = int(doc.get("horizon", 24))
    nodes, ownership, zone_of = [], {}, {}
    for nd in doc["nodes"]:
        nodes.append(Node(nd["id"], _series(nd["demand_mw"], horizon, f"node {nd['id']}"),
                          float(nd.get("theta_min_rad", -0.5)),
                          float(nd.get("theta_max_rad", 0.5))))
        ownership[nd["id"]] = nd["operator"]
        zone_of[nd["id"]] = nd["zone"]
    lines = [Line(ld["id"], ld["from_node"], ld["to_node"], float(ld["reactance_pu"]),
                  float(ld.get("flow_min_mw", -1e4)), float(ld.get("flow_max_mw", 1e4)))
             for ld in doc["lines"]]
    interfaces = []
    for idoc in doc.get("interfaces", []):
        levels = tuple(SubscriptionLevel(None if lv["width_mw"] is None else float(lv["width_mw"]),
                                         float(lv["cost_eur_per_mwh"]))
                       for lv in idoc.get("levels", []))
        interfaces.append(InterfaceSubstation(idoc["id"], idoc["tso_node"],
                                              idoc["dso_node"], levels,
                                              idoc.get("impact")))
    net = Network(
        nodes=nodes, lines=lines,
        zones=[BiddingZone(z["id"]) for z in doc["zones"]],
        operators=[Operator(o["id"], o["kind"]) for o in doc["operators"]],
        interfaces=interfaces, ownership=ownership, zone_of=zone_of,
        ntc={(c["from_zone"], c["to_zone"]): (float(c["min_mw"]), float(c["max_mw"]))
             for c in doc.get("ntc", [])},
        base_power=float(doc.get("base_power_mw", 100.0)),
    )
    gens = [Generator(gd["id"], gd["node"], gd["zone"], float(gd["capacity_mw"]),
                      float(gd["bid_eur_per_mwh"]),
                      float(gd.get("cycling_cost_eur_per_mw", 0.0)),
                      int(gd.get("min_uptime_h", 0)),
                      float(gd.get("min_dispatch_pu", 0.0)),
                      bool(gd.get("is_res", False)),
                      tuple(gd["profile_pu"]) if gd.get("profile_pu") else None,
                      bool(gd.get("must_run", False)),
                      gd.get("technology", "other"))
            for gd in doc.get("generators", [])]
    fsps = [Fsp(fd["id"], fd["node"], fd["kind"],
                _series(fd["cap_up_mw"], horizon, f"fsp {fd['id']}"),
                _series(fd["cap_down_mw"], horizon, f"fsp {fd['id']}"),
                float(fd["bid_eur_per_mwh"]),
                float(fd.get("dr_max_hours", 0.0)),
                float(fd.get("max_flex_up_pu", 0.0)),
                float(fd.get("max_flex_down_pu", 0.0)),
                tuple(fd["qda_mw"]) if fd.get("qda_mw") else None,
                float(fd.get("soc_init_pu", 0.5)),
                float(fd.get("soc_min_pu", 0.0)),
                float(fd.get("soc_max_pu", 1.0)),
                float(fd.get("efficiency", 1.0)),
                float(fd.get("energy_capacity_mwh", 0.0)),
                fd.get("source_generator"))
            for fd in doc.get("fsps", [])]
    return World(net, gens, fsps)


def save_world(world: World, path) -> None:
    with open(path, "w") as fh:
        json.dump(world_to_dict(world), fh, indent=1, sort_keys=True)


def load_world(path) -> World:
    with open(path) as fh:
        return world_from_dict(json.load(fh))
