"""Input synthesis and study orchestration.

Representative days from a year of hourly demand, imbalance synthesis from
day-ahead results, sensitivity scaling, replication injections, and the
sweep driver that runs full market pipelines over a factor grid.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .markets import (EngineOptions, ImbalanceSeries, SchemeResult,
                      clear_day_ahead, run_scheme)
from .markets.dayahead import DayAheadOutcome
from .netmodel import DSO, Fsp, Generator, Network, Node, World

HOURS_PER_DAY = 24
MONTH_DAYS = (31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31)
SEASON_OF_MONTH = {12: "winter", 1: "winter", 2: "winter",
                   3: "spring", 4: "spring", 5: "spring",
                   6: "summer", 7: "summer", 8: "summer",
                   9: "autumn", 10: "autumn", 11: "autumn"}
SEASONS = ("winter", "spring", "summer", "autumn")


class InsufficientData(Exception):
    pass


class ZeroDispatch(Exception):
    pass


class UnknownNode(Exception):
    pass


@dataclass
class RepresentativeDay:
    label: str                           # e.g. "winter-high"
    profiles: dict[str, np.ndarray]      # node id -> 24 h MW
    weight: float                        # days per year represented


def single_representative_day(net: Network, weight: float = 365.0,
                              label: str = "base") -> RepresentativeDay:
    """Wrap a network's own demand series as one representative day."""
    return RepresentativeDay(label, {n.id: np.asarray(n.demand, float) for n in net.nodes},
                             weight)


def _day_seasons(n_days: int) -> list[str]:
    """Season per calendar day, Jan 1 start; Feb gets the leap day if present."""
    month_days = list(MONTH_DAYS)
    if n_days == 366:
        month_days[1] = 29
    seasons = []
    for month, days in enumerate(month_days, start=1):
        seasons.extend([SEASON_OF_MONTH[month]] * days)
    return seasons[:n_days]


def _two_means(vectors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic 2-means: farthest-point init, lexicographic tie-breaks.

    Returns (assignments in {0,1}, centroids (2, dim)).
    """
    n = len(vectors)
    norms = np.linalg.norm(vectors, axis=1)
    c0 = int(np.argmax(norms))                       # argmax takes the lowest index on ties
    d0 = np.linalg.norm(vectors - vectors[c0], axis=1)
    c1 = int(np.argmax(d0))
    centroids = np.stack([vectors[c0], vectors[c1]])
    assign = np.zeros(n, dtype=int)
    for _ in range(100):
        d = np.stack([np.linalg.norm(vectors - centroids[k], axis=1) for k in range(2)])
        new_assign = (d[1] < d[0]).astype(int)       # ties go to cluster 0
        if np.array_equal(new_assign, assign) and _ > 0:
            break
        assign = new_assign
        for k in range(2):
            members = vectors[assign == k]
            if len(members):
                centroids[k] = members.mean(axis=0)
    return assign, centroids


def cluster_representative_days(demand: np.ndarray, node_ids: Sequence[str],
                                seasons: Sequence[str] | None = None
                                ) -> list[RepresentativeDay]:
    """Eight representative days: two per season, split by 2-means on load.

    ``demand`` is (hours, nodes) covering a full year.  Per season the days
    cluster on their 24-hour total-load vectors; the representative profile
    per node is the average over the cluster members and the weight is the
    cluster size, so weights sum to the number of days in the year.
    """
    demand = np.asarray(demand, float)
    if demand.ndim != 2 or demand.shape[1] != len(node_ids):
        raise InsufficientData("demand must be (hours, nodes)")
    n_days = demand.shape[0] // HOURS_PER_DAY
    if n_days < 365 or demand.shape[0] % HOURS_PER_DAY:
        raise InsufficientData(f"need a full year of hourly data, got {demand.shape[0]} hours")
    by_day = demand[:n_days * HOURS_PER_DAY].reshape(n_days, HOURS_PER_DAY, len(node_ids))
    total = by_day.sum(axis=2)                       # (days, 24)
    day_season = list(seasons) if seasons is not None else _day_seasons(n_days)
    if len(day_season) != n_days:
        raise InsufficientData("season labels must cover every day")
    out: list[RepresentativeDay] = []
    for season in SEASONS:
        idx = np.array([d for d in range(n_days) if day_season[d] == season])
        if idx.size == 0:
            continue
        assign, _ = _two_means(total[idx])
        sizes = [int((assign == k).sum()) for k in range(2)]
        if 0 in sizes:                               # degenerate: identical days
            mean_profiles = by_day[idx].mean(axis=0)
            w_hi = (len(idx) + 1) // 2
            for lab, w in (("high", w_hi), ("low", len(idx) - w_hi)):
                out.append(RepresentativeDay(
                    f"{season}-{lab}",
                    {nd: mean_profiles[:, j].copy() for j, nd in enumerate(node_ids)},
                    float(w)))
            continue
        reps = []
        for k in range(2):
            members = idx[assign == k]
            prof = by_day[members].mean(axis=0)      # (24, nodes)
            reps.append((float(total[members].mean()), k, prof, float(len(members))))
        reps.sort(key=lambda r: -r[0])               # higher mean load first
        for lab, (_, _, prof, weight) in zip(("high", "low"), reps):
            out.append(RepresentativeDay(
                f"{season}-{lab}",
                {nd: prof[:, j].copy() for j, nd in enumerate(node_ids)}, weight))
    return out


def world_for_day(world: World, day: RepresentativeDay) -> World:
    """Re-target the world's nodal demand at one representative day."""
    nodes = [replace(n, demand=tuple(float(v) for v in day.profiles[n.id]))
             for n in world.net.nodes]
    net = Network(nodes=nodes, lines=world.net.lines, zones=world.net.zones,
                  operators=world.net.operators, interfaces=world.net.interfaces,
                  ownership=dict(world.net.ownership), zone_of=dict(world.net.zone_of),
                  ntc=dict(world.net.ntc), base_power=world.net.base_power)
    return World(net, list(world.generators), list(world.fsps))


# -- imbalances ---------------------------------------------------------------


def synthesize_imbalances(da: DayAheadOutcome, annual_volume: float, seed: int = 0,
                          weight: float = 365.0, total_weight: float = 365.0,
                          node_of: Mapping[str, str] | None = None,
                          pattern: str = "alternating") -> ImbalanceSeries:
    """Per-generator imbalances scaled so the weighted year hits the target.

    Each represented calendar day carries ``annual_volume / total_weight``
    MWh of absolute imbalance, allocated over generator-hours by dispatch
    share.  Half of the hours are net deficit and half net surplus, either
    alternating deterministically or shuffled by the seed.
    """
    h_n = da.horizon
    if annual_volume <= 0:
        return ImbalanceSeries({g: np.zeros(h_n) for g in da.dispatch},
                               dict(node_of or {}))
    total_dispatch = sum(float(q.sum()) for q in da.dispatch.values())
    if total_dispatch <= 0:
        raise ZeroDispatch("cannot allocate imbalances without day-ahead dispatch")
    day_volume = annual_volume / total_weight
    signs = np.array([1.0 if h % 2 == 0 else -1.0 for h in range(h_n)])
    if pattern == "seeded":
        rng = np.random.default_rng(seed)
        signs = rng.permutation(signs)
    per_gen: dict[str, np.ndarray] = {}
    for gen, q in da.dispatch.items():
        share = np.asarray(q, float) / total_dispatch
        per_gen[gen] = signs * day_volume * share
    if node_of is None:
        node_of = {}
    return ImbalanceSeries(per_gen, dict(node_of))


def imbalances_for_world(world: World, da: DayAheadOutcome, annual_volume: float,
                         seed: int = 0, weight: float = 365.0,
                         total_weight: float = 365.0,
                         pattern: str = "alternating") -> ImbalanceSeries:
    node_of = {g.id: g.node for g in world.generators}
    return synthesize_imbalances(da, annual_volume, seed, weight, total_weight,
                                 node_of, pattern)


# -- sensitivities and replication --------------------------------------------

TABLE_FSP_RANGE = tuple(round(0.2 * k, 1) for k in range(16))        # 0.0 .. 3.0
TABLE_DEMAND_RANGE = tuple(round(0.8 + 0.1 * k, 1) for k in range(13))  # 0.8 .. 2.0


@dataclass(frozen=True)
class SensitivityFactors:
    fsp_size: float = 1.0
    fsp_bid: float = 1.0
    demand: float = 1.0

    def as_dict(self) -> dict[str, float]:
        return {"fsp_size": self.fsp_size, "fsp_bid": self.fsp_bid, "demand": self.demand}


def apply_sensitivity(world: World, factors: SensitivityFactors) -> World:
    """Scale distribution-side FSPs and demand; transmission data untouched."""
    for name, val in factors.as_dict().items():
        if val < 0:
            raise ValueError(f"sensitivity factor {name} must be >= 0")
    net = world.net
    dso_nodes = {n.id for n in net.nodes if net.operator_kind_of_node(n.id) == DSO}
    nodes = [replace(n, demand=tuple(v * factors.demand for v in n.demand))
             if n.id in dso_nodes else n for n in net.nodes]
    fsps = []
    for f in world.fsps:
        if f.node in dso_nodes:
            fsps.append(replace(
                f,
                cap_up=tuple(v * factors.fsp_size for v in f.cap_up),
                cap_down=tuple(v * factors.fsp_size for v in f.cap_down),
                bid=f.bid * factors.fsp_bid))
        else:
            fsps.append(f)
    new_net = Network(nodes=nodes, lines=net.lines, zones=net.zones,
                      operators=net.operators, interfaces=net.interfaces,
                      ownership=dict(net.ownership), zone_of=dict(net.zone_of),
                      ntc=dict(net.ntc), base_power=net.base_power)
    return World(new_net, list(world.generators), fsps)


def inject_replication(world: World, additions: Sequence[Generator | Fsp]) -> World:
    """Append distribution-connected resources (e.g. wind farms) to the world."""
    net = world.net
    dso_nodes = {n.id for n in net.nodes if net.operator_kind_of_node(n.id) == DSO}
    gens = list(world.generators)
    fsps = list(world.fsps)
    for rec in additions:
        if rec.node not in dso_nodes:
            raise UnknownNode(f"replication target {rec.node} is not a DSO node")
        if isinstance(rec, Generator):
            gens.append(rec)
        else:
            fsps.append(rec)
    return World(net, gens, fsps)


# -- FSP catalogs from the day-ahead results -----------------------------------

WIND_UPWARD_SHARE = 0.05     # wind offers 5 % of its schedule upward
SOLAR_UPWARD_SHARE = 0.0     # solar offers downward flexibility only


def fsps_from_day_ahead(generators: Sequence[Generator], da: DayAheadOutcome
                        ) -> list[Fsp]:
    """Transmission-side FSP catalog: the day-ahead generators themselves.

    Headroom up to the committed maximum is offered upward, the cleared
    schedule (above any technical minimum) downward, at the day-ahead bid.
    Wind can only offer a small share of its schedule upward; solar none.
    """
    out = []
    for g in generators:
        q = da.dispatch[g.id]
        uc = da.uc[g.id]
        cap = g.capacity * (np.asarray(g.profile, float) if g.is_res and g.profile is not None
                            else np.ones(da.horizon))
        up = np.maximum(uc * cap - q, 0.0)
        down = np.maximum(q - uc * g.capacity * g.min_dispatch, 0.0)
        kind = "RES" if g.is_res else "GENERIC"
        max_up = {"wind": WIND_UPWARD_SHARE, "solar": SOLAR_UPWARD_SHARE}.get(
            g.technology, WIND_UPWARD_SHARE if g.is_res else 0.0)
        out.append(Fsp(
            id=f"fsp:{g.id}", node=g.node, kind=kind,
            cap_up=tuple(float(v) for v in up),
            cap_down=tuple(float(v) for v in down),
            bid=g.bid,
            max_flex_up=max_up if kind == "RES" else 0.0,
            max_flex_down=1.0 if kind == "RES" else 0.0,
            qda=tuple(float(v) for v in q) if kind == "RES" else None,
            source_generator=g.id))
    return out


def link_day_ahead(fsps: Sequence[Fsp], da: DayAheadOutcome) -> list[Fsp]:
    """Fill the day-ahead schedule of RES FSPs tied to cleared generators."""
    out = []
    for f in fsps:
        if f.kind == "RES" and f.source_generator and f.source_generator in da.dispatch:
            out.append(replace(f, qda=tuple(float(v) for v in da.dispatch[f.source_generator])))
        else:
            out.append(f)
    return out


# -- study driver --------------------------------------------------------------


@dataclass
class SensitivityAxis:
    name: str                       # fsp_size | fsp_bid | demand
    values: tuple[float, ...]


@dataclass
class StudyConfig:
    schemes: tuple[str, ...] = ("common_joint",)
    annual_imbalance_mwh: float = 0.0
    imbalance_seed: int = 7
    imbalance_pattern: str = "alternating"
    axes: tuple[SensitivityAxis, ...] = ()
    replication: tuple = ()
    derive_transmission_fsps: bool = False
    workers: int = 1
    engine: EngineOptions = field(default_factory=EngineOptions)

    def grid_points(self) -> list[SensitivityFactors]:
        if not self.axes:
            return [SensitivityFactors()]
        grids = [axis.values for axis in self.axes]
        names = [axis.name for axis in self.axes]
        points = [()]
        for vals in grids:
            points = [p + (v,) for p in points for v in vals]
        return [SensitivityFactors(**dict(zip(names, p))) for p in points]


@dataclass
class DayRun:
    label: str
    weight: float
    da_cost: float
    scheme_costs: dict[str, dict[str, float]]
    energies: list[dict]            # records: so, market, product, direction, mwh
    nsf_mwh: dict[str, float]       # per scheme
    subs_cost: dict[str, float]     # per scheme, local markets only
    gen_mwh_by_tech: dict[str, float] = field(default_factory=dict)
    interface_import_mwh: dict[str, float] = field(default_factory=dict)  # per scheme


@dataclass
class GridPointResult:
    factors: dict[str, float]
    ok: bool
    error: str | None
    days: list[DayRun] = field(default_factory=list)

    def annual(self, scheme: str, key: str = "total") -> float:
        return sum(d.weight * d.scheme_costs[scheme][key] for d in self.days)

    def annual_nsf(self, scheme: str) -> float:
        return sum(d.weight * d.nsf_mwh[scheme] for d in self.days)

    def annual_subs_cost(self, scheme: str) -> float:
        return sum(d.weight * d.subs_cost[scheme] for d in self.days)

    def annual_import_mwh(self, scheme: str) -> float:
        return sum(d.weight * d.interface_import_mwh.get(scheme, 0.0) for d in self.days)


@dataclass
class StudyResult:
    config: StudyConfig
    points: list[GridPointResult]

    def to_dict(self) -> dict:
        return {
            "schemes": list(self.config.schemes),
            "axes": [{"name": a.name, "values": list(a.values)} for a in self.config.axes],
            "points": [{
                "factors": p.factors,
                "ok": p.ok,
                "error": p.error,
                "days": [{
                    "label": d.label, "weight": d.weight, "da_cost": d.da_cost,
                    "scheme_costs": d.scheme_costs,
                    "energies": d.energies,
                    "nsf_mwh": d.nsf_mwh,
                    "subs_cost": d.subs_cost,
                    "gen_mwh_by_tech": d.gen_mwh_by_tech,
                    "interface_import_mwh": d.interface_import_mwh,
                } for d in p.days],
            } for p in self.points],
        }


def _scheme_day_summary(result: SchemeResult) -> tuple[dict[str, float], list[dict], float, float]:
    costs = {"total": result.total_cost, "local": result.local_cost,
             "tso": result.tso_cost, "nsf": result.nsf_cost,
             "subscription": result.subs_cost}
    energies = []
    nsf = 0.0
    subs_local = 0.0
    for out in result.outcomes:
        so = "DSO" if out.so != "TSO" else "TSO"
        market = "LFM" if out.so != "TSO" else "TSO Markets"
        product = "+".join(out.products)
        energies.append({"so": so, "market": market, "product": product,
                         "direction": "Up", "mwh": out.energy_up()})
        energies.append({"so": so, "market": market, "product": product,
                         "direction": "Down", "mwh": out.energy_down()})
        nsf += out.total_nsf()
        if out.so != "TSO":
            subs_local += out.subs_cost
    return costs, energies, nsf, subs_local


def run_point(world: World, config: StudyConfig, factors: SensitivityFactors,
              days: Sequence[RepresentativeDay], point_index: int) -> GridPointResult:
    """One grid point: scale, clear, synthesize, run every scheme per day."""
    scaled = apply_sensitivity(world, factors)
    if config.replication:
        scaled = inject_replication(scaled, config.replication)
    total_weight = sum(d.weight for d in days)
    runs = []
    for di, day in enumerate(days):
        w = world_for_day(scaled, day)
        da = clear_day_ahead(w.net, w.generators, opts=config.engine)
        fsps = link_day_ahead(w.fsps, da)
        if config.derive_transmission_fsps:
            tso_node_ids = {n.id for n in w.net.nodes
                            if w.net.operator_kind_of_node(n.id) == "TSO"}
            fsps = fsps + [f for f in fsps_from_day_ahead(w.generators, da)
                           if f.node in tso_node_ids]
        seed = config.imbalance_seed * 1_000_003 + point_index * 1009 + di
        imb = imbalances_for_world(w, da, config.annual_imbalance_mwh, seed,
                                   day.weight, total_weight, config.imbalance_pattern)
        scheme_costs, energies, nsf_mwh, subs_cost = {}, [], {}, {}
        imports = {}
        for scheme in config.schemes:
            res = run_scheme(w.net, da, fsps, imb, scheme, config.engine)
            costs, recs, nsf, subs = _scheme_day_summary(res)
            scheme_costs[scheme] = costs
            for r in recs:
                energies.append({**r, "scheme": scheme})
            nsf_mwh[scheme] = nsf
            subs_cost[scheme] = subs
            imports[scheme] = _scheme_import_mwh(res)
        gen_by_tech: dict[str, float] = {}
        for g in w.generators:
            mwh = float(np.sum(da.dispatch[g.id]))
            gen_by_tech[g.technology] = gen_by_tech.get(g.technology, 0.0) + mwh
        runs.append(DayRun(day.label, day.weight, da.cost, scheme_costs,
                           energies, nsf_mwh, subs_cost, gen_by_tech, imports))
    return GridPointResult(factors.as_dict(), True, None, runs)


def _scheme_import_mwh(result: SchemeResult) -> float:
    """Energy imported by distribution grids, summed over local markets."""
    total = 0.0
    for out in result.outcomes:
        if out.so == "TSO":
            continue
        for series in out.p_subs.values():
            total += float(np.maximum(series, 0.0).sum())
    return total


def study_result_from_dict(doc: Mapping) -> StudyResult:
    """Rebuild a study result from its JSON document (for reporting)."""
    axes = tuple(SensitivityAxis(a["name"], tuple(a["values"])) for a in doc.get("axes", []))
    config = StudyConfig(schemes=tuple(doc.get("schemes", ())), axes=axes)
    points = []
    for p in doc["points"]:
        days = [DayRun(d["label"], d["weight"], d["da_cost"], d["scheme_costs"],
                       d["energies"], d["nsf_mwh"], d["subs_cost"],
                       d.get("gen_mwh_by_tech", {}), d.get("interface_import_mwh", {}))
                for d in p.get("days", [])]
        points.append(GridPointResult(p["factors"], p["ok"], p.get("error"), days))
    return StudyResult(config, points)


def run_study(config: StudyConfig, world: World,
              days: Sequence[RepresentativeDay] | None = None) -> StudyResult:
    """Sweep the sensitivity grid; failures are isolated per grid point."""
    days = list(days) if days else [single_representative_day(world.net)]
    points = config.grid_points()

    def work(item):
        idx, factors = item
        try:
            return idx, run_point(world, config, factors, days, idx)
        except Exception as exc:  # isolate grid-point failures
            return idx, GridPointResult(factors.as_dict(), False,
                                        f"{type(exc).__name__}: {exc}")

    results: dict[int, GridPointResult] = {}
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            for idx, res in pool.map(work, enumerate(points)):
                results[idx] = res
    else:
        for item in enumerate(points):
            idx, res = work(item)
            results[idx] = res
    return StudyResult(config, [results[i] for i in range(len(points))])
