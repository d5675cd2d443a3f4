"""Linear network sensitivities: DC flows, PTDF matrices, impact factors.

A PTDF entry maps a 1 MW injection at a node (withdrawn at the slack) to
the MW flow on a line, oriented from ``from_node`` to ``to_node``.  Impact
factors are per-interface shares of a DSO's net exchange with the
transmission grid, obtained by averaging boundary-line sensitivities over
the DSO's nodes and normalizing to sum to 1 per DSO.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .netmodel import InterfaceSubstation, Line, Network, SubGrid, full_grid

SINGULARITY_TOL = 1e-10


class ZeroReactance(Exception):
    pass


class DisconnectedGrid(Exception):
    pass


class SingularSusceptance(Exception):
    pass


class EmptyDsoNodeSet(Exception):
    pass


class DimensionMismatch(Exception):
    pass


def flow_from_angles(line: Line, theta_i: float, theta_j: float, base_power: float) -> float:
    """MW flow over a line from its endpoint angles (radians)."""
    if line.reactance == 0:
        raise ZeroReactance(f"line {line.id} has zero reactance")
    return base_power * (theta_i - theta_j) / line.reactance


@dataclass
class PtdfMatrix:
    grid_id: str
    slack: str
    nodes: tuple[str, ...]
    lines: tuple[Line, ...]
    matrix: np.ndarray  # (n_lines, n_nodes)

    def entry(self, line_id: str, node_id: str) -> float:
        li = next(i for i, ln in enumerate(self.lines) if ln.id == line_id)
        return float(self.matrix[li, self.nodes.index(node_id)])

    def flows(self, injections: Mapping[str, float]) -> dict[str, float]:
        """Line flows for a balanced injection vector (slack absorbs residual)."""
        q = np.zeros(len(self.nodes))
        for node, mw in injections.items():
            if node not in self.nodes:
                raise DimensionMismatch(f"unknown node {node}")
            q[self.nodes.index(node)] = mw
        f = self.matrix @ q
        return {ln.id: float(f[i]) for i, ln in enumerate(self.lines)}

    def to_csv(self, path) -> None:
        """Debug dump: rows = lines, columns = nodes in node-id order."""
        order = sorted(range(len(self.nodes)), key=lambda i: self.nodes[i])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["line"] + [self.nodes[i] for i in order])
            for li, ln in enumerate(self.lines):
                w.writerow([ln.id] + [f"{self.matrix[li, i]:.12g}" for i in order])


def _grid_lines(grid: SubGrid) -> list[Line]:
    nset = set(grid.nodes)
    return [ln for ln in grid.all_lines
            if ln.from_node in nset and ln.to_node in nset]


def compute_ptdf(grid: SubGrid, slack: str | None = None) -> PtdfMatrix:
    """PTDF of a connected grid via the reduced susceptance matrix.

    The slack defaults to the lowest node id; its column is identically
    zero.  Raises :class:`DisconnectedGrid` / :class:`SingularSusceptance`
    when the injections cannot be routed.
    """
    nodes = tuple(grid.nodes)
    if not nodes:
        raise DisconnectedGrid("grid has no nodes")
    slack = slack if slack is not None else min(nodes)
    if slack not in nodes:
        raise DimensionMismatch(f"slack {slack} not in grid")
    lines = _grid_lines(grid)
    idx = {n: i for i, n in enumerate(nodes)}
    n = len(nodes)
    b = np.zeros((n, n))
    for ln in lines:
        if ln.reactance <= 0:
            raise ZeroReactance(f"line {ln.id} reactance must be positive")
        y = 1.0 / ln.reactance
        i, j = idx[ln.from_node], idx[ln.to_node]
        b[i, i] += y
        b[j, j] += y
        b[i, j] -= y
        b[j, i] -= y
    keep = [i for i in range(n) if i != idx[slack]]
    b_red = b[np.ix_(keep, keep)]
    if len(keep):
        sign, logdet = np.linalg.slogdet(b_red)
        if sign <= 0 or not np.isfinite(logdet):
            raise DisconnectedGrid("susceptance matrix is singular; grid not connected")
        if np.linalg.cond(b_red) > 1.0 / SINGULARITY_TOL:
            raise SingularSusceptance("susceptance matrix numerically singular")
    # theta sensitivity per nodal injection, slack row/column zero
    theta_sens = np.zeros((n, n))
    if len(keep):
        theta_sens[np.ix_(keep, keep)] = np.linalg.inv(b_red)
    mat = np.zeros((len(lines), n))
    for li, ln in enumerate(lines):
        y = 1.0 / ln.reactance
        mat[li, :] = y * (theta_sens[idx[ln.from_node], :] - theta_sens[idx[ln.to_node], :])
    mat[:, idx[slack]] = 0.0
    return PtdfMatrix(grid.operator, slack, nodes, tuple(lines), mat)


def dc_flows(grid: SubGrid, injections: Mapping[str, float], slack: str | None = None,
             base_power: float = 100.0) -> tuple[dict[str, float], dict[str, float]]:
    """Full DC solve: angles (slack pinned to zero) and line flows in MW."""
    nodes = tuple(grid.nodes)
    slack = slack if slack is not None else min(nodes)
    lines = _grid_lines(grid)
    idx = {n: i for i, n in enumerate(nodes)}
    n = len(nodes)
    b = np.zeros((n, n))
    for ln in lines:
        y = base_power / ln.reactance
        i, j = idx[ln.from_node], idx[ln.to_node]
        b[i, i] += y
        b[j, j] += y
        b[i, j] -= y
        b[j, i] -= y
    p = np.zeros(n)
    for node, mw in injections.items():
        p[idx[node]] += mw
    keep = [i for i in range(n) if i != idx[slack]]
    theta = np.zeros(n)
    try:
        theta[keep] = np.linalg.solve(b[np.ix_(keep, keep)], p[keep])
    except np.linalg.LinAlgError as exc:
        raise DisconnectedGrid(str(exc)) from exc
    flows = {ln.id: flow_from_angles(ln, theta[idx[ln.from_node]],
                                     theta[idx[ln.to_node]], base_power)
             for ln in lines}
    return {nd: float(theta[idx[nd]]) for nd in nodes}, flows


def _import_orientation(line: Line, itf: InterfaceSubstation) -> float:
    """+1 when the line's from->to direction points into the DSO."""
    return 1.0 if line.from_node == itf.tso_node else -1.0


def import_sensitivities(ptdf: PtdfMatrix, itf: InterfaceSubstation,
                         boundary: Line) -> dict[str, float]:
    """Sensitivity of the interface import to a 1 MW withdrawal per node."""
    li = next(i for i, ln in enumerate(ptdf.lines) if ln.id == boundary.id)
    orient = _import_orientation(boundary, itf)
    # import = orient * flow; withdrawal = -injection
    return {node: float(-orient * ptdf.matrix[li, ci])
            for ci, node in enumerate(ptdf.nodes)}


def compute_impact_factors(ptdf: PtdfMatrix, interfaces: Sequence[InterfaceSubstation],
                           dso_nodes: Sequence[str], net: Network,
                           normalize: bool = True) -> dict[str, float]:
    """Per-interface share of a DSO's exchange with the transmission grid.

    Raw value = arithmetic mean, over the DSO's nodes, of the boundary
    line's import sensitivity.  Normalization (default) rescales the shares
    to sum to 1 so that allocating a DSO's virtual demand conserves power.
    """
    if not dso_nodes:
        raise EmptyDsoNodeSet("impact factors need at least one DSO node")
    raw: dict[str, float] = {}
    for itf in interfaces:
        sens = import_sensitivities(ptdf, itf, net.boundary_line(itf))
        raw[itf.id] = sum(sens[nd] for nd in dso_nodes) / len(dso_nodes)
    if not normalize:
        return raw
    total = sum(raw.values())
    if abs(total) < 1e-12:
        raise SingularSusceptance("impact factors sum to zero; cannot normalize")
    return {k: v / total for k, v in raw.items()}


def fill_impact_factors(net: Network, normalize: bool = True) -> None:
    """Compute and store impact factors on every interface, in place.

    Uses the combined grid with the slack on the transmission side (lowest
    TSO node id) so that power withdrawn inside a DSO is supplied across
    its interfaces.
    """
    grid = full_grid(net)
    tso_nodes = sorted(nd for nd in grid.nodes
                       if net.operator_kind_of_node(nd) == "TSO")
    if not tso_nodes:
        raise DisconnectedGrid("network has no TSO nodes")
    ptdf = compute_ptdf(grid, slack=tso_nodes[0])
    for dso in net.dso_ids:
        itfs = net.interfaces_of(dso)
        if not itfs:
            continue
        shares = compute_impact_factors(ptdf, itfs, net.nodes_of(dso), net, normalize)
        for itf in itfs:
            itf.impact = shares[itf.id]


def interface_flow_from_injections(injections: Mapping[str, float], ptdf: PtdfMatrix,
                                   itf: InterfaceSubstation, net: Network) -> float:
    """Import (MW, positive into the DSO) implied by a balanced injection set."""
    boundary = net.boundary_line(itf)
    for node in injections:
        if node not in ptdf.nodes:
            raise DimensionMismatch(f"injection at unknown node {node}")
    flows = ptdf.flows(injections)
    return _import_orientation(boundary, itf) * flows[boundary.id]
