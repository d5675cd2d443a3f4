"""Shared machinery for the flexibility markets.

Every market (common joint/separate, local flexibility markets, the
multi-level TSO market) is assembled from the same blocks: a DC network
over the modeled node set, per-FSP activation variables with
technology-specific logic, non-served-flexibility slacks, and nodal power
balances.  :class:`FlexModel` owns the program being built, remembers what
it created, extracts a :class:`FlexOutcome` after solving, and can verify
the solved instance against the model invariants.

Sign conventions: upward activation (``q_up``) adds injection, downward
(``q_dw``) removes it, both are non-negative; a positive imbalance is a
shortfall that calls for upward flexibility; interface power is positive
when it flows into the distribution grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .. import mip
from ..netmodel import DSO, TSO, Fsp, InterfaceSubstation, Line, Network

BIG = 1e9


class SolverFailure(Exception):
    pass


@dataclass
class EngineOptions:
    """Knobs shared by all market formulations."""
    cnsf: float = 10_000.0          # EUR/MWh penalty on non-served flexibility
    min_bid_size: float = 0.0       # MW
    ess_model: str = "literal"      # "literal" or "roundtrip"
    impact_raw_averages: bool = False
    export_eps: float = 1e-9        # anti-degeneracy cost on subscription exports
    self_check: bool = True
    solver: mip.SolverOptions = field(default_factory=mip.SolverOptions)


@dataclass
class ImbalanceSeries:
    """Per-generator hourly imbalances (MW); positive means a shortfall."""
    per_generator: dict[str, np.ndarray]
    node_of: dict[str, str]

    @staticmethod
    def zero() -> "ImbalanceSeries":
        return ImbalanceSeries({}, {})

    def node_aggregate(self, horizon: int) -> dict[str, np.ndarray]:
        agg: dict[str, np.ndarray] = {}
        for gen, series in self.per_generator.items():
            node = self.node_of[gen]
            agg.setdefault(node, np.zeros(horizon))
            agg[node] = agg[node] + np.asarray(series, float)
        return agg

    def total_abs(self) -> float:
        return float(sum(np.abs(s).sum() for s in self.per_generator.values()))


@dataclass
class FspStage:
    """Effective FSP parameters for one market stage.

    Sequential markets hand these over with adjusted bounds: capacities
    shift with the net position already cleared, demand-response budgets
    shrink by the energy already used, and storage headroom follows the
    realized state-of-charge trajectory.
    """
    fsp: Fsp
    cap_up: np.ndarray
    cap_down: np.ndarray
    dr_budget_up: float = math.inf
    dr_budget_down: float = math.inf
    res_cap_up: np.ndarray | None = None
    res_cap_down: np.ndarray | None = None
    soc_lo: np.ndarray | None = None
    soc_hi: np.ndarray | None = None

    @property
    def id(self) -> str:
        return self.fsp.id


def initial_stage(fsp: Fsp, horizon: int) -> FspStage:
    cap_up = np.asarray(fsp.cap_up, float).copy()
    cap_down = np.asarray(fsp.cap_down, float).copy()
    stage = FspStage(fsp, cap_up, cap_down)
    if fsp.kind == "DR":
        stage.dr_budget_up = float(cap_up.sum() * fsp.dr_max_hours)
        stage.dr_budget_down = float(cap_down.sum() * fsp.dr_max_hours)
    if fsp.kind == "RES":
        qda = np.asarray(fsp.qda, float) if fsp.qda is not None else np.zeros(horizon)
        stage.res_cap_up = qda * fsp.max_flex_up
        stage.res_cap_down = qda * fsp.max_flex_down
    if fsp.kind == "ESS":
        e = fsp.energy_capacity
        stage.soc_lo = np.full(horizon, fsp.soc_min * e)
        stage.soc_hi = np.full(horizon, fsp.soc_max * e)
    return stage


def initial_stages(fsps: Iterable[Fsp], horizon: int) -> dict[str, FspStage]:
    return {f.id: initial_stage(f, horizon) for f in fsps}


def _clip0(arr: np.ndarray) -> np.ndarray:
    return np.maximum(arr, 0.0)


def shift_stage(stage: FspStage, q_up: np.ndarray, q_dw: np.ndarray,
                soc: np.ndarray | None = None, direction_lock: bool = False) -> FspStage:
    """Remaining capability after a stage cleared ``q_up``/``q_dw``.

    With ``direction_lock`` (multi-level forwarding) an hour activated in
    one direction keeps only its residual in that direction and offers
    nothing in the other; otherwise bounds shift with the net position, so
    the follow-up market may also swing back across the cleared point.
    """
    net = q_up - q_dw
    if direction_lock:
        cap_up = np.where(q_dw > 1e-9, 0.0, stage.cap_up - q_up)
        cap_down = np.where(q_up > 1e-9, 0.0, stage.cap_down - q_dw)
    else:
        cap_up = stage.cap_up - net
        cap_down = stage.cap_down + net
    out = FspStage(stage.fsp, _clip0(cap_up), _clip0(cap_down))
    out.dr_budget_up = max(stage.dr_budget_up - float(q_up.sum()), 0.0)
    out.dr_budget_down = max(stage.dr_budget_down - float(q_dw.sum()), 0.0)
    if stage.res_cap_up is not None:
        if direction_lock:
            out.res_cap_up = _clip0(np.where(q_dw > 1e-9, 0.0, stage.res_cap_up - q_up))
            out.res_cap_down = _clip0(np.where(q_up > 1e-9, 0.0, stage.res_cap_down - q_dw))
        else:
            out.res_cap_up = _clip0(stage.res_cap_up - net)
            out.res_cap_down = _clip0(stage.res_cap_down + net)
    if stage.soc_lo is not None:
        fsp = stage.fsp
        base = fsp.soc_init * fsp.energy_capacity
        dev = (soc - base) if soc is not None else np.zeros_like(stage.soc_lo)
        out.soc_lo = stage.soc_lo - dev
        out.soc_hi = stage.soc_hi - dev
    return out


@dataclass
class FlexOutcome:
    """Solved market: activations, flows, slacks and the cost split."""
    tag: str
    so: str                      # operator running the market
    products: tuple[str, ...]    # ("CM",), ("B",) or ("CM", "B")
    horizon: int
    objective: float
    activation_cost_tso: float
    activation_cost_dso: float
    nsf_cost: float
    subs_cost: float
    q_up: dict[str, np.ndarray]
    q_dw: dict[str, np.ndarray]
    uc_up: dict[str, np.ndarray]
    uc_dw: dict[str, np.ndarray]
    nsf_p: dict[str, np.ndarray]
    nsf_n: dict[str, np.ndarray]
    agg_nsf_p: dict[str, np.ndarray] = field(default_factory=dict)
    agg_nsf_n: dict[str, np.ndarray] = field(default_factory=dict)
    flows: dict[str, np.ndarray] = field(default_factory=dict)
    angles: dict[str, np.ndarray] = field(default_factory=dict)
    soc: dict[str, np.ndarray] = field(default_factory=dict)
    pcha: dict[str, np.ndarray] = field(default_factory=dict)
    pdis: dict[str, np.ndarray] = field(default_factory=dict)
    bcha: dict[str, np.ndarray] = field(default_factory=dict)
    bdis: dict[str, np.ndarray] = field(default_factory=dict)
    p_subs: dict[str, np.ndarray] = field(default_factory=dict)
    qsubs: dict[tuple[str, int], np.ndarray] = field(default_factory=dict)
    sub_export: dict[str, np.ndarray] = field(default_factory=dict)
    subscost_h: np.ndarray | None = None
    vd: dict[str, np.ndarray] = field(default_factory=dict)
    pimport: dict[str, np.ndarray] = field(default_factory=dict)
    pexport: dict[str, np.ndarray] = field(default_factory=dict)
    status: str = mip.OPTIMAL

    def q_net(self, fsp_id: str) -> np.ndarray:
        return self.q_up[fsp_id] - self.q_dw[fsp_id]

    @property
    def activation_cost(self) -> float:
        return self.activation_cost_tso + self.activation_cost_dso

    def energy_up(self) -> float:
        return float(sum(a.sum() for a in self.q_up.values()))

    def energy_down(self) -> float:
        return float(sum(a.sum() for a in self.q_dw.values()))

    def total_nsf(self) -> float:
        tot = sum(a.sum() for a in self.nsf_p.values())
        tot += sum(a.sum() for a in self.nsf_n.values())
        tot += sum(a.sum() for a in self.agg_nsf_p.values())
        tot += sum(a.sum() for a in self.agg_nsf_n.values())
        return float(tot)


class FlexModel:
    """Incremental builder for one market's MILP plus its bookkeeping."""

    def __init__(self, net: Network, horizon: int, opts: EngineOptions,
                 tag: str, so: str, products: tuple[str, ...]):
        self.net = net
        self.h = horizon
        self.opts = opts
        self.tag = tag
        self.so = so
        self.products = products
        self.prog = mip.MathProgram(tag)
        self.stages: dict[str, FspStage] = {}
        self.fsp_sink: dict[str, tuple[str, str]] = {}   # fsp id -> ("node", node) | ("vd", dso)
        self.node_terms: dict[tuple[str, int], list[tuple[str, float]]] = {}
        self.modeled_nodes: list[str] = []
        self.modeled_lines: list[Line] = []
        self.nsf_nodes: list[str] = []
        self.agg_nsf: list[str] = []
        self.subs_itfs: list[InterfaceSubstation] = []
        self.vd_dsos: list[str] = []
        self.itf_vars: dict[str, str] = {}               # interface id -> p_subs variable stem
        self.balance_names: list[str] = []

    # -- network ------------------------------------------------------

    def add_network(self, node_ids: Sequence[str], lines: Sequence[Line]) -> None:
        """DC grid over the given nodes: angles, flows, flow equations."""
        net = self.net
        self.modeled_nodes = list(node_ids)
        self.modeled_lines = list(lines)
        for nd in node_ids:
            node = net.node(nd)
            for h in range(self.h):
                self.prog.add_var(f"th[{nd},{h}]", node.theta_min, node.theta_max)
        refs = self._reference_nodes(node_ids, lines)
        for nd in refs:
            for h in range(self.h):
                self.prog.add_constr(f"ref[{nd},{h}]", [(f"th[{nd},{h}]", 1.0)], "=", 0.0)
        for ln in lines:
            k = self.net.base_power / ln.reactance
            for h in range(self.h):
                p = self.prog.add_var(f"p[{ln.id},{h}]", ln.flow_min, ln.flow_max)
                self.prog.add_constr(
                    f"dc[{ln.id},{h}]",
                    [(p, 1.0), (f"th[{ln.from_node},{h}]", -k), (f"th[{ln.to_node},{h}]", k)],
                    "=", 0.0)
                self._term(ln.from_node, h, p, -1.0)
                self._term(ln.to_node, h, p, 1.0)

    @staticmethod
    def _reference_nodes(node_ids: Sequence[str], lines: Sequence[Line]) -> list[str]:
        """Lowest node id of each connected component gets its angle pinned."""
        parent = {nd: nd for nd in node_ids}

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for ln in lines:
            if ln.from_node in parent and ln.to_node in parent:
                parent[find(ln.from_node)] = find(ln.to_node)
        comps: dict[str, str] = {}
        for nd in node_ids:
            root = find(nd)
            if root not in comps or nd < comps[root]:
                comps[root] = nd
        return sorted(comps.values())

    def _term(self, node: str, h: int, var: str, coef: float) -> None:
        self.node_terms.setdefault((node, h), []).append((var, coef))

    # -- slacks ---------------------------------------------------------

    def add_nsf(self, node_ids: Sequence[str]) -> None:
        for nd in node_ids:
            self.nsf_nodes.append(nd)
            for h in range(self.h):
                up = self.prog.add_var(f"nsfp[{nd},{h}]", 0.0, mip.INF)
                dn = self.prog.add_var(f"nsfn[{nd},{h}]", 0.0, mip.INF)
                self.prog.add_objective([(up, self.opts.cnsf), (dn, self.opts.cnsf)])
                self._term(nd, h, up, -1.0)
                self._term(nd, h, dn, 1.0)

    def add_aggregate_nsf(self, key: str) -> None:
        """One slack pair per hour, e.g. for a DSO seen only through its interfaces."""
        self.agg_nsf.append(key)
        for h in range(self.h):
            up = self.prog.add_var(f"ansfp[{key},{h}]", 0.0, mip.INF)
            dn = self.prog.add_var(f"ansfn[{key},{h}]", 0.0, mip.INF)
            self.prog.add_objective([(up, self.opts.cnsf), (dn, self.opts.cnsf)])

    # -- FSPs -----------------------------------------------------------

    def add_fsp(self, stage: FspStage, sink: tuple[str, str] | None = None) -> None:
        """Activation block for one FSP.

        ``sink`` routes the net activation: ``("node", node_id)`` into that
        node's balance (default: the FSP's own node), ``("vd", dso_id)``
        into a virtual-demand equation of the multi-level TSO market.
        """
        f = stage.fsp
        self.stages[f.id] = stage
        sink = sink or ("node", f.node)
        self.fsp_sink[f.id] = sink
        p, o = self.prog, self.opts
        mbs = o.min_bid_size
        for h in range(self.h):
            qu = p.add_var(f"qu[{f.id},{h}]", 0.0, float(stage.cap_up[h]))
            qd = p.add_var(f"qd[{f.id},{h}]", 0.0, float(stage.cap_down[h]))
            bu = p.add_var(f"ucu[{f.id},{h}]", binary=True)
            bd = p.add_var(f"ucd[{f.id},{h}]", binary=True)
            p.add_objective([(qu, f.bid), (qd, f.bid)])
            p.add_constr(f"gateu[{f.id},{h}]", [(qu, 1.0), (bu, -float(stage.cap_up[h]))], "<=", 0.0)
            p.add_constr(f"gated[{f.id},{h}]", [(qd, 1.0), (bd, -float(stage.cap_down[h]))], "<=", 0.0)
            if mbs > 0:
                p.add_constr(f"mbsu[{f.id},{h}]", [(bu, mbs), (qu, -1.0)], "<=", 0.0)
                p.add_constr(f"mbsd[{f.id},{h}]", [(bd, mbs), (qd, -1.0)], "<=", 0.0)
            p.add_constr(f"excl[{f.id},{h}]", [(bu, 1.0), (bd, 1.0)], "<=", 1.0)
            if sink[0] == "node":
                self._term(sink[1], h, qu, 1.0)
                self._term(sink[1], h, qd, -1.0)
        if not math.isinf(stage.dr_budget_up):
            p.add_constr(f"drup[{f.id}]", [(f"qu[{f.id},{h}]", 1.0) for h in range(self.h)],
                         "<=", stage.dr_budget_up)
        if not math.isinf(stage.dr_budget_down):
            p.add_constr(f"drdn[{f.id}]", [(f"qd[{f.id},{h}]", 1.0) for h in range(self.h)],
                         "<=", stage.dr_budget_down)
        if stage.res_cap_up is not None:
            for h in range(self.h):
                p.add_constr(f"resu[{f.id},{h}]", [(f"qu[{f.id},{h}]", 1.0)],
                             "<=", float(stage.res_cap_up[h]))
                p.add_constr(f"resd[{f.id},{h}]", [(f"qd[{f.id},{h}]", 1.0)],
                             "<=", float(stage.res_cap_down[h]))
        if f.kind == "ESS":
            self._add_ess(stage)

    def _add_ess(self, stage: FspStage) -> None:
        """Storage logic: state of charge, charge/discharge gating binaries.

        The default model applies the efficiency on both the discharge and
        the charge leg of the bookkeeping, and couples activations to the
        gating binaries through auxiliary shares; the "roundtrip" variant
        replaces it with a conventional sqrt-efficiency ledger.
        """
        f, p = stage.fsp, self.prog
        ef = f.efficiency
        init = f.soc_init * f.energy_capacity
        for h in range(self.h):
            soc = p.add_var(f"soc[{f.id},{h}]", float(stage.soc_lo[h]), float(stage.soc_hi[h]))
            prev = [(f"soc[{f.id},{h-1}]", -1.0)] if h else []
            rhs = init if h == 0 else 0.0
            if self.opts.ess_model == "roundtrip":
                r = math.sqrt(ef)
                p.add_constr(f"socbal[{f.id},{h}]",
                             [(soc, 1.0), *prev,
                              (f"qu[{f.id},{h}]", 1.0 / r), (f"qd[{f.id},{h}]", -r)],
                             "=", rhs)
                continue
            pch = p.add_var(f"pch[{f.id},{h}]", 0.0, 1.0)
            pdi = p.add_var(f"pdi[{f.id},{h}]", 0.0, 1.0)
            fxu = p.add_var(f"fxu[{f.id},{h}]", 0.0, mip.INF)
            fxd = p.add_var(f"fxd[{f.id},{h}]", 0.0, mip.INF)
            bch = p.add_var(f"bch[{f.id},{h}]", binary=True)
            bdi = p.add_var(f"bdi[{f.id},{h}]", binary=True)
            up, dn = float(stage.cap_up[h]), float(stage.cap_down[h])
            p.add_constr(f"socbal[{f.id},{h}]",
                         [(soc, 1.0), *prev,
                          (pdi, up * ef), (f"qu[{f.id},{h}]", 1.0),
                          (pch, -dn * ef), (f"qd[{f.id},{h}]", -1.0)],
                         "=", rhs)
            p.add_constr(f"fxdr[{f.id},{h}]",
                         [(f"qd[{f.id},{h}]", 1.0), (fxd, -up * ef)], "=", 0.0)
            p.add_constr(f"fxur[{f.id},{h}]",
                         [(f"qu[{f.id},{h}]", 1.0), (fxu, -up * ef)], "=", 0.0)
            p.add_constr(f"bexcl[{f.id},{h}]", [(bch, 1.0), (bdi, 1.0)], "<=", 1.0)
            p.add_constr(f"dgate[{f.id},{h}]", [(pdi, 1.0), (fxd, 1.0), (bdi, -1.0)], "<=", 0.0)
            p.add_constr(f"cgate[{f.id},{h}]", [(pch, 1.0), (fxu, 1.0), (bch, -1.0)], "<=", 0.0)

    # -- balances ---------------------------------------------------------

    def add_balances(self, node_ids: Sequence[str], dda: Mapping[str, np.ndarray],
                     imb: Mapping[str, np.ndarray], mode: str) -> None:
        """Power balance per node and hour.

        mode "full": day-ahead net position plus imbalances (joint market);
        mode "cm": congestion management only, no imbalances;
        mode "bal": imbalances only (incremental redispatch).
        """
        for nd in node_ids:
            node = self.net.node(nd)
            for h in range(self.h):
                if mode == "full":
                    rhs = node.demand[h] - _at(dda, nd, h) + _at(imb, nd, h)
                elif mode == "cm":
                    rhs = node.demand[h] - _at(dda, nd, h)
                elif mode == "bal":
                    rhs = _at(imb, nd, h)
                else:
                    raise ValueError(f"unknown balance mode {mode!r}")
                name = self.prog.add_constr(f"bal[{nd},{h}]",
                                            self.node_terms.get((nd, h), []), "=", rhs)
                self.balance_names.append(name)

    # -- interfaces ---------------------------------------------------------

    def add_subscription(self, itf: InterfaceSubstation, psub_stem: str) -> None:
        """Band decomposition of an interface import plus its cost terms."""
        p = self.prog
        self.subs_itfs.append(itf)
        for h in range(self.h):
            terms = [(f"{psub_stem}[{itf.id},{h}]", 1.0)]
            for lv, level in enumerate(itf.levels):
                width = mip.INF if level.width is None else float(level.width)
                q = p.add_var(f"qsub[{itf.id},{lv},{h}]", 0.0, width)
                p.add_objective([(q, level.cost)])
                terms.append((q, -1.0))
            ex = p.add_var(f"sexp[{itf.id},{h}]", 0.0, mip.INF)
            p.add_objective([(ex, self.opts.export_eps)])
            terms.append((ex, 1.0))
            p.add_constr(f"subs[{itf.id},{h}]", terms, "=", 0.0)

    # -- solve & extract -----------------------------------------------------

    def solve(self) -> FlexOutcome:
        sol = mip.solve(self.prog, self.opts.solver)
        if sol.status not in (mip.OPTIMAL,):
            raise SolverFailure(f"{self.tag}: solver returned {sol.status}")
        out = self._extract(sol)
        if self.opts.self_check:
            problems = self.verify(sol, out)
            if problems:
                raise SolverFailure(f"{self.tag}: invariant violations: {problems[:5]}")
        return out

    def _series(self, sol: mip.Solution, stem: str, key: str) -> np.ndarray:
        return np.array([sol.values[f"{stem}[{key},{h}]"] for h in range(self.h)])

    def _extract(self, sol: mip.Solution) -> FlexOutcome:
        h = self.h
        v = sol.values
        q_up, q_dw, uc_up, uc_dw = {}, {}, {}, {}
        soc, pcha, pdis, bcha, bdis = {}, {}, {}, {}, {}
        act_tso = act_dso = 0.0
        for fid, stage in self.stages.items():
            q_up[fid] = np.maximum(self._series(sol, "qu", fid), 0.0)
            q_dw[fid] = np.maximum(self._series(sol, "qd", fid), 0.0)
            uc_up[fid] = self._series(sol, "ucu", fid)
            uc_dw[fid] = self._series(sol, "ucd", fid)
            cost = stage.fsp.bid * float(q_up[fid].sum() + q_dw[fid].sum())
            if self.net.operator_kind_of_node(stage.fsp.node) == DSO:
                act_dso += cost
            else:
                act_tso += cost
            if stage.fsp.kind == "ESS":
                soc[fid] = self._series(sol, "soc", fid)
                if self.opts.ess_model == "literal":
                    pcha[fid] = self._series(sol, "pch", fid)
                    pdis[fid] = self._series(sol, "pdi", fid)
                    bcha[fid] = self._series(sol, "bch", fid)
                    bdis[fid] = self._series(sol, "bdi", fid)
        nsf_p = {nd: np.maximum(self._series(sol, "nsfp", nd), 0.0) for nd in self.nsf_nodes}
        nsf_n = {nd: np.maximum(self._series(sol, "nsfn", nd), 0.0) for nd in self.nsf_nodes}
        agg_p = {k: np.maximum(self._series(sol, "ansfp", k), 0.0) for k in self.agg_nsf}
        agg_n = {k: np.maximum(self._series(sol, "ansfn", k), 0.0) for k in self.agg_nsf}
        nsf_cost = self.opts.cnsf * (sum(a.sum() for a in nsf_p.values())
                                     + sum(a.sum() for a in nsf_n.values())
                                     + sum(a.sum() for a in agg_p.values())
                                     + sum(a.sum() for a in agg_n.values()))
        flows = {ln.id: self._series(sol, "p", ln.id) for ln in self.modeled_lines}
        angles = {nd: self._series(sol, "th", nd) for nd in self.modeled_nodes}
        qsubs: dict[tuple[str, int], np.ndarray] = {}
        sub_export: dict[str, np.ndarray] = {}
        subscost_h = np.zeros(h)
        subs_cost = 0.0
        for itf in self.subs_itfs:
            sub_export[itf.id] = self._series(sol, "sexp", itf.id)
            for lv, level in enumerate(itf.levels):
                arr = np.maximum(self._series(sol, "qsub", f"{itf.id},{lv}"), 0.0)
                qsubs[(itf.id, lv)] = arr
                subscost_h += level.cost * arr
                subs_cost += level.cost * float(arr.sum())
        p_subs = {iid: self._series(sol, stem, iid) for iid, stem in self.itf_vars.items()}
        vd = {d: self._series(sol, "vd", d) for d in self.vd_dsos}
        pimport = {}
        pexport = {}
        for iid, stem in self.itf_vars.items():
            if stem == "pimp":
                pimport[iid] = p_subs[iid]
                pexport[iid] = self._series(sol, "pexp", iid)
        return FlexOutcome(
            tag=self.tag, so=self.so, products=self.products, horizon=h,
            objective=float(sol.objective),
            activation_cost_tso=act_tso, activation_cost_dso=act_dso,
            nsf_cost=float(nsf_cost), subs_cost=float(subs_cost),
            q_up=q_up, q_dw=q_dw, uc_up=uc_up, uc_dw=uc_dw,
            nsf_p=nsf_p, nsf_n=nsf_n, agg_nsf_p=agg_p, agg_nsf_n=agg_n,
            flows=flows, angles=angles,
            soc=soc, pcha=pcha, pdis=pdis, bcha=bcha, bdis=bdis,
            p_subs=p_subs, qsubs=qsubs, sub_export=sub_export,
            subscost_h=subscost_h, vd=vd, pimport=pimport, pexport=pexport,
            status=sol.status)

    def verify(self, sol: mip.Solution, out: FlexOutcome) -> list[str]:
        """Certificate-style checks of the solved instance."""
        tol = self.opts.solver.feas_tol
        problems = []
        residuals = self.prog.constraint_residuals(sol.values)
        for name, resid in residuals.items():
            if resid > tol:
                problems.append(f"constraint {name} violated by {resid:.3e}")
        for var in self.prog.variables:
            x = sol.values[var.name]
            if x < var.lb - tol or x > var.ub + tol:
                problems.append(f"variable {var.name}={x} outside [{var.lb},{var.ub}]")
            if var.binary and abs(x - round(x)) > 1e-6:
                problems.append(f"binary {var.name}={x} not integral")
        for fid in self.stages:
            both = np.minimum(out.q_up[fid], out.q_dw[fid])
            if float(both.max(initial=0.0)) > tol:
                problems.append(f"fsp {fid} activated in both directions")
        return problems


def _at(mapping: Mapping[str, np.ndarray], node: str, h: int) -> float:
    series = mapping.get(node)
    return float(series[h]) if series is not None else 0.0
