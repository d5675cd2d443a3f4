"""Zonal day-ahead clearing with unit commitment.

The market minimizes bid cost plus start-up (cycling) cost subject to a
per-zone energy balance with net-transfer-capacity-bounded exchanges, and
commitment logic (transition, minimum uptime, minimum technical dispatch,
renewable profiles) for the generators that need it.  Zonal prices come
from the duals of the balance constraints after fixing the commitment.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import mip
from ..netmodel import Generator, Network
from .base import EngineOptions


class InfeasibleMarket(Exception):
    pass


@dataclass
class DayAheadOutcome:
    horizon: int
    dispatch: dict[str, np.ndarray]          # per generator, MW
    dispatch_da: dict[str, np.ndarray]       # per node aggregate handoff
    uc: dict[str, np.ndarray]
    su: dict[str, np.ndarray]
    sd: dict[str, np.ndarray]
    tc: dict[tuple[str, str], np.ndarray]    # per corridor, MW
    prices: dict[str, np.ndarray]            # per zone, EUR/MWh
    cost: float

    def zone_price(self, zone: str, h: int) -> float:
        return float(self.prices[zone][h])


def clear_day_ahead(net: Network, generators: list[Generator],
                    horizon: int | None = None,
                    opts: EngineOptions | None = None) -> DayAheadOutcome:
    opts = opts or EngineOptions()
    h_n = horizon if horizon is not None else net.horizon
    prog = mip.MathProgram("day-ahead")

    committed = [g for g in generators if g.needs_commitment]
    for g in generators:
        for h in range(h_n):
            cap = g.capacity
            if g.is_res and g.profile is not None:
                cap = min(cap, g.capacity * g.profile[h])
            prog.add_var(f"qda[{g.id},{h}]", 0.0, cap)
        if g.must_run and g.min_dispatch > 0:
            for h in range(h_n):
                prog.add_constr(f"mrun[{g.id},{h}]", [(f"qda[{g.id},{h}]", 1.0)],
                                ">=", g.capacity * g.min_dispatch)
    for g in committed:
        for h in range(h_n):
            prog.add_var(f"uc[{g.id},{h}]", binary=True)
            prog.add_var(f"su[{g.id},{h}]", binary=True)
            prog.add_var(f"sd[{g.id},{h}]", binary=True)
        for h in range(h_n):
            # commitment transition; the unit starts the day offline
            terms = [(f"uc[{g.id},{h}]", 1.0), (f"su[{g.id},{h}]", -1.0),
                     (f"sd[{g.id},{h}]", 1.0)]
            if h > 0:
                terms.append((f"uc[{g.id},{h-1}]", -1.0))
            prog.add_constr(f"trans[{g.id},{h}]", terms, "=", 0.0)
            prog.add_constr(f"capuc[{g.id},{h}]",
                            [(f"qda[{g.id},{h}]", 1.0), (f"uc[{g.id},{h}]", -g.capacity)],
                            "<=", 0.0)
            if g.min_dispatch > 0:
                prog.add_constr(f"mindis[{g.id},{h}]",
                                [(f"uc[{g.id},{h}]", g.capacity * g.min_dispatch),
                                 (f"qda[{g.id},{h}]", -1.0)], "<=", 0.0)
            if g.min_uptime > 1:
                span = range(h, min(h + g.min_uptime, h_n))
                prog.add_constr(f"minup[{g.id},{h}]",
                                [(f"su[{g.id},{h}]", float(len(span)))]
                                + [(f"uc[{g.id},{hh}]", -1.0) for hh in span],
                                "<=", 0.0)
        prog.add_objective([(f"su[{g.id},{h}]", g.cycling_cost * g.capacity)
                            for h in range(h_n)])
    for g in generators:
        prog.add_objective([(f"qda[{g.id},{h}]", g.bid) for h in range(h_n)])

    corridors = sorted(net.ntc)
    for (za, zb) in corridors:
        lo, hi = net.ntc[(za, zb)]
        for h in range(h_n):
            prog.add_var(f"tc[{za},{zb},{h}]", lo, hi)

    zones = [z.id for z in net.zones]
    for z in zones:
        z_nodes = [n for n in net.nodes if net.zone_of[n.id] == z]
        z_gens = [g for g in generators if g.zone == z]
        for h in range(h_n):
            demand = sum(n.demand[h] for n in z_nodes)
            terms = [(f"qda[{g.id},{h}]", 1.0) for g in z_gens]
            for (za, zb) in corridors:
                if za == z:
                    terms.append((f"tc[{za},{zb},{h}]", -1.0))
                if zb == z:
                    terms.append((f"tc[{za},{zb},{h}]", 1.0))
            prog.add_constr(f"zb[{z},{h}]", terms, "=", demand)

    sol = mip.solve(prog, opts.solver)
    if sol.status == mip.INFEASIBLE:
        raise InfeasibleMarket("zonal demand cannot be met with the offered capacity")
    if sol.status != mip.OPTIMAL:
        raise InfeasibleMarket(f"day-ahead clearing failed: {sol.status}")

    fixed = {name: sol.values[name] for name in
             (v.name for v in prog.variables if v.binary)}
    duals = mip.relax_and_duals(prog, fixed, opts.solver)

    dispatch = {g.id: np.array([sol.values[f"qda[{g.id},{h}]"] for h in range(h_n)])
                for g in generators}
    dda: dict[str, np.ndarray] = {}
    for g in generators:
        dda.setdefault(g.node, np.zeros(h_n))
        dda[g.node] = dda[g.node] + dispatch[g.id]
    uc, su, sd = {}, {}, {}
    for g in generators:
        if g.needs_commitment:
            uc[g.id] = np.array([round(sol.values[f"uc[{g.id},{h}]"]) for h in range(h_n)])
            su[g.id] = np.array([round(sol.values[f"su[{g.id},{h}]"]) for h in range(h_n)])
            sd[g.id] = np.array([round(sol.values[f"sd[{g.id},{h}]"]) for h in range(h_n)])
        else:
            # always-on units: committed throughout, no transitions
            uc[g.id] = np.ones(h_n)
            su[g.id] = np.zeros(h_n)
            sd[g.id] = np.zeros(h_n)
    tc = {(za, zb): np.array([sol.values[f"tc[{za},{zb},{h}]"] for h in range(h_n)])
          for (za, zb) in corridors}
    prices = {z: np.array([duals.duals[f"zb[{z},{h}]"] for h in range(h_n)])
              for z in zones}
    return DayAheadOutcome(h_n, dispatch, dda, uc, su, sd, tc, prices,
                           cost=float(sol.objective))
