"""The four TSO-DSO coordination schemes and their market handoffs.

* Common joint: one market clears congestion and imbalances over the whole
  coupled network with every FSP.
* Common separate: the same network model run twice, congestion first,
  then balancing with capacities shifted by what the first stage cleared.
* Multi-level: each DSO first runs a local flexibility market (full OPF
  variant, or the PTDF variant that only watches the interface flows),
  then the TSO clears its market seeing the distribution grids as virtual
  demands allocated to the interface substations by impact factors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..dcflow import compute_ptdf, fill_impact_factors, import_sensitivities
from ..netmodel import DSO, Fsp, Network, full_grid
from .base import (EngineOptions, FlexModel, FlexOutcome, FspStage,
                   ImbalanceSeries, SolverFailure, initial_stages, shift_stage)
from .dayahead import DayAheadOutcome

SCHEMES = ("common_joint", "common_separate",
           "ml_opf_joint", "ml_opf_separate",
           "ml_ptdf_joint", "ml_ptdf_separate")


def _stages(fsps, horizon) -> dict[str, FspStage]:
    if isinstance(fsps, dict):
        return fsps
    return initial_stages(fsps, horizon)


def _fill_boundary_import(out: FlexOutcome, net: Network) -> None:
    """Report per-interface import (MW into the DSO) from solved line flows."""
    for itf in net.interfaces:
        line = net.boundary_line(itf)
        if line.id not in out.flows:
            continue
        orient = 1.0 if line.from_node == itf.tso_node else -1.0
        out.p_subs[itf.id] = orient * out.flows[line.id]


def _common_model(net: Network, da: DayAheadOutcome, stages: dict[str, FspStage],
                  imb: ImbalanceSeries, mode: str, opts: EngineOptions,
                  tag: str, products: tuple[str, ...]) -> FlexOutcome:
    h = da.horizon
    model = FlexModel(net, h, opts, tag, "TSO", products)
    all_nodes = [n.id for n in net.nodes]
    model.add_network(all_nodes, net.lines)
    for fid in sorted(stages):
        model.add_fsp(stages[fid])
    model.add_nsf(all_nodes)
    model.add_balances(all_nodes, da.dispatch_da, imb.node_aggregate(h), mode)
    out = model.solve()
    _fill_boundary_import(out, net)
    return out


def run_common_joint(net: Network, da: DayAheadOutcome, fsps,
                     imb: ImbalanceSeries, opts: EngineOptions | None = None) -> FlexOutcome:
    """Single market solving all congestion and all imbalances at once."""
    opts = opts or EngineOptions()
    stages = _stages(fsps, da.horizon)
    return _common_model(net, da, stages, imb, "full", opts,
                         "common-joint", ("CM", "B"))


def run_common_separate(net: Network, da: DayAheadOutcome, fsps,
                        imb: ImbalanceSeries,
                        opts: EngineOptions | None = None) -> tuple[FlexOutcome, FlexOutcome]:
    """Congestion management first, then balancing with shifted capacities."""
    opts = opts or EngineOptions()
    stages = _stages(fsps, da.horizon)
    cm = _common_model(net, da, stages, ImbalanceSeries.zero(), "cm", opts,
                       "common-cm", ("CM",))
    shifted = {fid: shift_stage(st, cm.q_up[fid], cm.q_dw[fid], cm.soc.get(fid))
               for fid, st in stages.items()}
    bal = _common_model(net, da, shifted, imb, "bal", opts,
                        "common-bal", ("B",))
    return cm, bal


# -- local flexibility markets -----------------------------------------------


def _ensure_impacts(net: Network, opts: EngineOptions) -> None:
    if any(itf.impact is None for itf in net.interfaces):
        fill_impact_factors(net, normalize=not opts.impact_raw_averages)


def _import_bounds(net: Network, itf) -> tuple[float, float]:
    """Bounds of the interface power, oriented import-positive."""
    line = net.boundary_line(itf)
    if line.from_node == itf.tso_node:
        return line.flow_min, line.flow_max
    return -line.flow_max, -line.flow_min


def run_lfm_opf(net: Network, da: DayAheadOutcome, fsps, dso_id: str,
                opts: EngineOptions | None = None) -> FlexOutcome:
    """DSO-run congestion market over its own grid.

    The expected exchange with the TSO is a free virtual demand allocated
    to the interfaces by impact factor; band-decomposed subscription costs
    price the interface usage.
    """
    opts = opts or EngineOptions()
    _ensure_impacts(net, opts)
    h = da.horizon
    dso_nodes = net.nodes_of(dso_id)
    if net.operator(dso_id).kind != DSO:
        raise SolverFailure(f"{dso_id} is not a DSO")
    stages = {fid: st for fid, st in _stages(fsps, h).items()
              if st.fsp.node in set(dso_nodes)}
    internal = [ln for ln in net.lines
                if ln.from_node in set(dso_nodes) and ln.to_node in set(dso_nodes)]
    model = FlexModel(net, h, opts, f"lfm-opf[{dso_id}]", dso_id, ("CM",))
    model.add_network(dso_nodes, internal)
    for fid in sorted(stages):
        model.add_fsp(stages[fid])
    model.add_nsf(dso_nodes)
    itfs = net.interfaces_of(dso_id)
    model.vd_dsos.append(dso_id)
    for h_i in range(h):
        model.prog.add_var(f"vd[{dso_id},{h_i}]", -mip_inf(), mip_inf())
    for itf in itfs:
        lo, hi = _import_bounds(net, itf)
        model.itf_vars[itf.id] = "psub"
        for h_i in range(h):
            psub = model.prog.add_var(f"psub[{itf.id},{h_i}]", lo, hi)
            model._term(itf.dso_node, h_i, psub, 1.0)
            model.prog.add_constr(f"alloc[{itf.id},{h_i}]",
                                  [(psub, 1.0), (f"vd[{dso_id},{h_i}]", -itf.impact)],
                                  "=", 0.0)
        model.add_subscription(itf, "psub")
    model.add_balances(dso_nodes, da.dispatch_da, {}, "cm")
    return model.solve()


def run_lfm_ptdf(net: Network, da: DayAheadOutcome, fsps, dso_id: str,
                 opts: EngineOptions | None = None) -> FlexOutcome:
    """Sensitivity-based local market: only interface flows are modeled.

    Interface power is the PTDF-weighted aggregation of every nodal
    withdrawal in the distribution grid; internal line limits are not
    enforced, mirroring the reduced market design this variant replicates.
    """
    opts = opts or EngineOptions()
    _ensure_impacts(net, opts)
    h = da.horizon
    dso_nodes = net.nodes_of(dso_id)
    if net.operator(dso_id).kind != DSO:
        raise SolverFailure(f"{dso_id} is not a DSO")
    stages = {fid: st for fid, st in _stages(fsps, h).items()
              if st.fsp.node in set(dso_nodes)}
    tso_nodes = sorted(nd.id for nd in net.nodes
                       if net.operator_kind_of_node(nd.id) == "TSO")
    ptdf = compute_ptdf(full_grid(net), slack=tso_nodes[0])
    model = FlexModel(net, h, opts, f"lfm-ptdf[{dso_id}]", dso_id, ("CM",))
    for fid in sorted(stages):
        model.add_fsp(stages[fid], sink=("vd", dso_id))
    model.add_nsf(dso_nodes)  # enters the sensitivity equations, not balances
    itfs = net.interfaces_of(dso_id)
    for itf in itfs:
        sens = import_sensitivities(ptdf, itf, net.boundary_line(itf))
        lo, hi = _import_bounds(net, itf)
        model.itf_vars[itf.id] = "psub"
        for h_i in range(h):
            psub = model.prog.add_var(f"psub[{itf.id},{h_i}]", lo, hi)
            rhs = sum(sens[nd] * (net.node(nd).demand[h_i] - _dda(da, nd, h_i))
                      for nd in dso_nodes)
            terms = [(psub, 1.0)]
            for fid in sorted(stages):
                s = sens[stages[fid].fsp.node]
                terms += [(f"qu[{fid},{h_i}]", s), (f"qd[{fid},{h_i}]", -s)]
            for nd in dso_nodes:
                terms += [(f"nsfp[{nd},{h_i}]", -sens[nd]), (f"nsfn[{nd},{h_i}]", sens[nd])]
            model.prog.add_constr(f"ptdf[{itf.id},{h_i}]", terms, "=", rhs)
        model.add_subscription(itf, "psub")
    return model.solve()


def _dda(da: DayAheadOutcome, node: str, h: int) -> float:
    series = da.dispatch_da.get(node)
    return float(series[h]) if series is not None else 0.0


def mip_inf() -> float:
    from .. import mip
    return mip.INF


def forward_bids(lfm: FlexOutcome, stages: dict[str, FspStage]
                 ) -> tuple[dict[str, FspStage], dict[str, np.ndarray]]:
    """Residual capabilities and cleared schedules handed to the TSO.

    The TSO may not activate an FSP against the direction the DSO already
    activated it in a given hour, so those hours offer zero capacity on the
    opposite side.
    """
    residual: dict[str, FspStage] = {}
    dispatch: dict[str, np.ndarray] = {}
    for fid, stage in stages.items():
        if fid in lfm.q_up:
            residual[fid] = shift_stage(stage, lfm.q_up[fid], lfm.q_dw[fid],
                                        lfm.soc.get(fid), direction_lock=True)
            dispatch[fid] = lfm.q_net(fid)
        else:
            residual[fid] = stage
            dispatch[fid] = np.zeros(lfm.horizon)
    return residual, dispatch


def _tso_ml_model(net: Network, da: DayAheadOutcome, stages: dict[str, FspStage],
                  dispatch_fsp: dict[str, np.ndarray], imb: ImbalanceSeries,
                  mode: str, opts: EngineOptions, tag: str,
                  products: tuple[str, ...]) -> FlexOutcome:
    """TSO market seeing each DSO as a virtual demand at its interfaces.

    mode "full": congestion and imbalances jointly; "cm": no imbalances,
    day-ahead deviations only; "bal": imbalances only, without the
    day-ahead baseline or the already-cleared local schedules.
    """
    h = da.horizon
    tso_nodes = sorted(n.id for n in net.nodes
                       if net.operator_kind_of_node(n.id) == "TSO")
    tso_set = set(tso_nodes)
    internal = [ln for ln in net.lines
                if ln.from_node in tso_set and ln.to_node in tso_set]
    model = FlexModel(net, h, opts, tag, "TSO", products)
    model.add_network(tso_nodes, internal)
    node_imb = imb.node_aggregate(h)
    dso_of_node = {nd.id: net.ownership[nd.id] for nd in net.nodes}
    for fid in sorted(stages):
        st = stages[fid]
        if st.fsp.node in tso_set:
            model.add_fsp(st)
        else:
            model.add_fsp(st, sink=("vd", dso_of_node[st.fsp.node]))
    model.add_nsf(tso_nodes)
    for dso in sorted(net.dso_ids):
        dso_nodes = net.nodes_of(dso)
        if not dso_nodes:
            continue
        model.add_aggregate_nsf(dso)
        model.vd_dsos.append(dso)
        dso_fsps = [fid for fid in sorted(stages)
                    if stages[fid].fsp.node in set(dso_nodes)]
        for h_i in range(h):
            deficit = 0.0
            for nd in dso_nodes:
                if mode in ("full", "cm"):
                    deficit += net.node(nd).demand[h_i] - _dda(da, nd, h_i)
                if mode in ("full", "bal"):
                    series = node_imb.get(nd)
                    deficit += float(series[h_i]) if series is not None else 0.0
            if mode in ("full", "cm"):
                for fid, sched in dispatch_fsp.items():
                    if fid in stages and stages[fid].fsp.node in set(dso_nodes):
                        deficit -= float(sched[h_i])
            vd = f"vd[{dso},{h_i}]"
            if not model.prog.has_var(vd):
                model.prog.add_var(vd, -mip_inf(), mip_inf())
            terms = [(vd, 1.0), (f"ansfp[{dso},{h_i}]", -1.0), (f"ansfn[{dso},{h_i}]", 1.0)]
            for fid in dso_fsps:
                terms += [(f"qu[{fid},{h_i}]", 1.0), (f"qd[{fid},{h_i}]", -1.0)]
            model.prog.add_constr(f"vdef[{dso},{h_i}]", terms, "=", deficit)
        for itf in net.interfaces_of(dso):
            lo, hi = _import_bounds(net, itf)
            model.itf_vars[itf.id] = "pimp"
            for h_i in range(h):
                pim = model.prog.add_var(f"pimp[{itf.id},{h_i}]", -mip_inf(), mip_inf())
                pex = model.prog.add_var(f"pexp[{itf.id},{h_i}]", lo, hi)
                model.prog.add_constr(f"alloc[{itf.id},{h_i}]",
                                      [(pim, 1.0), (f"vd[{dso},{h_i}]", -itf.impact)],
                                      "=", 0.0)
                model.prog.add_constr(f"conv[{itf.id},{h_i}]",
                                      [(pim, 1.0), (pex, -1.0)], "=", 0.0)
                model._term(itf.tso_node, h_i, pex, -1.0)
    model.add_balances(tso_nodes, da.dispatch_da, node_imb, mode)
    return model.solve()


def run_tso_multilevel(net: Network, da: DayAheadOutcome, residual_fsps,
                       dispatch_fsp: dict[str, np.ndarray], imb: ImbalanceSeries,
                       mode: str = "joint", opts: EngineOptions | None = None):
    """TSO market(s) after the local flexibility markets.

    Returns a single outcome in joint mode, or a (cm, balancing) pair in
    separate mode with the same capacity handoff as the common separate
    scheme.
    """
    opts = opts or EngineOptions()
    _ensure_impacts(net, opts)
    stages = _stages(residual_fsps, da.horizon)
    if mode == "joint":
        return _tso_ml_model(net, da, stages, dispatch_fsp, imb, "full", opts,
                             "tso-ml-joint", ("CM", "B"))
    if mode != "separate":
        raise ValueError(f"unknown mode {mode!r}")
    cm = _tso_ml_model(net, da, stages, dispatch_fsp, ImbalanceSeries.zero(),
                       "cm", opts, "tso-ml-cm", ("CM",))
    shifted = {fid: shift_stage(st, cm.q_up[fid], cm.q_dw[fid], cm.soc.get(fid))
               for fid, st in stages.items()}
    bal = _tso_ml_model(net, da, shifted, dispatch_fsp, imb, "bal", opts,
                        "tso-ml-bal", ("B",))
    return cm, bal


# -- pipelines and accounting -------------------------------------------------


@dataclass
class SchemeResult:
    scheme: str
    outcomes: list[FlexOutcome]

    @property
    def local_cost(self) -> float:
        return sum(o.objective for o in self.outcomes if o.so != "TSO")

    @property
    def tso_cost(self) -> float:
        return sum(o.objective for o in self.outcomes if o.so == "TSO")

    @property
    def total_cost(self) -> float:
        return self.local_cost + self.tso_cost

    @property
    def nsf_cost(self) -> float:
        return sum(o.nsf_cost for o in self.outcomes)

    @property
    def subs_cost(self) -> float:
        return sum(o.subs_cost for o in self.outcomes)


def run_scheme(net: Network, da: DayAheadOutcome, fsps, imb: ImbalanceSeries,
               scheme: str, opts: EngineOptions | None = None) -> SchemeResult:
    """Full pipeline of one coordination scheme on one representative day."""
    opts = opts or EngineOptions()
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; pick one of {SCHEMES}")
    stages = _stages(fsps, da.horizon)
    if scheme == "common_joint":
        return SchemeResult(scheme, [run_common_joint(net, da, stages, imb, opts)])
    if scheme == "common_separate":
        cm, bal = run_common_separate(net, da, stages, imb, opts)
        return SchemeResult(scheme, [cm, bal])
    lfm_runner = run_lfm_opf if scheme.startswith("ml_opf") else run_lfm_ptdf
    tso_mode = "joint" if scheme.endswith("joint") else "separate"
    outcomes: list[FlexOutcome] = []
    residual = {fid: st for fid, st in stages.items()
                if net.operator_kind_of_node(st.fsp.node) == "TSO"}
    dispatch_fsp: dict[str, np.ndarray] = {}
    for dso in sorted(net.dso_ids):
        dso_nodes = set(net.nodes_of(dso))
        dso_stages = {fid: st for fid, st in stages.items() if st.fsp.node in dso_nodes}
        lfm = lfm_runner(net, da, dso_stages, dso, opts)
        outcomes.append(lfm)
        resid, disp = forward_bids(lfm, dso_stages)
        residual.update(resid)
        dispatch_fsp.update(disp)
    tso = run_tso_multilevel(net, da, residual, dispatch_fsp, imb, tso_mode, opts)
    outcomes.extend(tso if isinstance(tso, tuple) else [tso])
    return SchemeResult(scheme, outcomes)


@dataclass
class CostReport:
    """Per-scheme cost totals with local and TSO markets kept apart."""
    rows: dict[str, dict[str, float]] = field(default_factory=dict)

    def add(self, result: SchemeResult) -> None:
        self.rows[result.scheme] = {
            "local": result.local_cost,
            "tso": result.tso_cost,
            "nsf": result.nsf_cost,
            "subscription": result.subs_cost,
            "total": result.total_cost,
        }

    def total(self, scheme: str) -> float:
        return self.rows[scheme]["total"]


def account_costs(results) -> CostReport:
    """Comparable totals per scheme: local market costs plus TSO markets."""
    report = CostReport()
    for res in (results.values() if isinstance(results, dict) else results):
        report.add(res)
    return report
