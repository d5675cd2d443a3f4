"""Deterministic emission of the result artifacts.

Tables render to byte-stable CSV (comma separated, dot decimal, header row,
LF line endings); JSON keeps full precision.  Number formatting:

* energies and TWh: rounded half away from zero to two decimals, shown
  without trailing zeros, so whole-unit cells look whole;
* costs: whole k EUR, half away from zero;
* percent deltas: one decimal, rounded away from zero (a reported change is
  never larger than the rendered magnitude);
* generation-mix percentages: whole percent, apportioned by largest
  remainder so the column sums to 100.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .scenario import SEASONS, GridPointResult, StudyResult

FLAT_TOL = 1e-6


class MissingScheme(Exception):
    pass


class EmptyGrid(Exception):
    pass


# -- number formatting --------------------------------------------------------


def round_half_away(x: float, ndigits: int = 0) -> float:
    scale = 10 ** ndigits
    return math.copysign(math.floor(abs(x) * scale + 0.5), x) / scale


def round_away(x: float, ndigits: int = 1) -> float:
    """Away-from-zero rounding: the rendered magnitude is never understated."""
    scale = 10 ** ndigits
    return math.copysign(math.ceil(abs(x) * scale - 1e-7), x) / scale


def format_quantity(x: float) -> str:
    v = round_half_away(x, 2)
    if v == int(v):
        return str(int(v))
    return f"{v:.2f}".rstrip("0")


def format_cost_keur(x_eur: float) -> str:
    return str(int(round_half_away(x_eur / 1000.0, 0)))


def format_percent_delta(base: float, new: float) -> str:
    if base == 0:
        return "n/a"
    pct = 100.0 * (new - base) / base
    return f"{round_away(pct, 1):.1f}%"


def apportion_percentages(values: Sequence[float]) -> list[int]:
    """Whole percentages summing to 100 via largest-remainder apportionment."""
    total = float(sum(values))
    if total <= 0:
        return [0 for _ in values]
    shares = [100.0 * v / total for v in values]
    floors = [int(math.floor(s)) for s in shares]
    left = 100 - sum(floors)
    order = sorted(range(len(values)), key=lambda i: (-(shares[i] - floors[i]), i))
    for i in order[:left]:
        floors[i] += 1
    return floors


# -- generation mix (Table I style) --------------------------------------------

MIX_ORDER = ("thermal", "hydro", "nuclear", "wind")


@dataclass
class MixTable:
    rows: list[tuple[str, float, int]]      # technology, TWh, percent
    total_twh: float

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("technology,twh,pct_mix\n")
        for tech, twh, pct in self.rows:
            out.write(f"{tech},{format_quantity(twh)},{pct}%\n")
        out.write(f"total,{format_quantity(self.total_twh)},\n")
        return out.getvalue()

    def to_dict(self) -> dict:
        return {"rows": [{"technology": t, "twh": v, "pct": p} for t, v, p in self.rows],
                "total_twh": self.total_twh}


def emit_mix_report(totals_twh: Mapping[str, float]) -> MixTable:
    """Energy and share per technology; shares sum to 100 % of the listed total."""
    techs = [t for t in MIX_ORDER if t in totals_twh]
    techs += sorted(t for t in totals_twh if t not in MIX_ORDER)
    values = [float(totals_twh[t]) for t in techs]
    pcts = apportion_percentages(values)
    return MixTable([(t, v, p) for t, v, p in zip(techs, values, pcts)],
                    total_twh=float(sum(values)))


def mix_from_study(study: StudyResult, point_index: int = 0) -> MixTable:
    """Annual generation mix from the per-technology energies a study records."""
    point = study.points[point_index]
    totals: dict[str, float] = {}
    for day in point.days:
        for tech, mwh in day.gen_mwh_by_tech.items():
            totals[tech] = totals.get(tech, 0.0) + day.weight * mwh / 1e6
    return emit_mix_report(totals)


def mix_totals_twh(day_dispatch: Sequence[tuple[float, Mapping[str, np.ndarray]]],
                   technologies: Mapping[str, str]) -> dict[str, float]:
    """Aggregate (weight, per-generator dispatch) pairs into TWh per technology."""
    totals: dict[str, float] = {}
    for weight, dispatch in day_dispatch:
        for gen, series in dispatch.items():
            tech = technologies.get(gen, "other")
            totals[tech] = totals.get(tech, 0.0) + weight * float(np.sum(series)) / 1e6
    return totals


# -- energy activated (Table IV style) ------------------------------------------


@dataclass
class EnergyActivatedTable:
    columns: list[str]                       # day labels plus "Total Year"
    rows: list[tuple[str, dict[str, float]]]  # (label, column -> GWh/year)

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("row," + ",".join(self.columns) + "\n")
        for label, cells in self.rows:
            out.write(label + "," +
                      ",".join(format_quantity(cells.get(c, 0.0)) for c in self.columns)
                      + "\n")
        return out.getvalue()

    def to_dict(self) -> dict:
        return {"columns": self.columns,
                "rows": [{"label": lab, "cells": cells} for lab, cells in self.rows]}

    def cell(self, row_label: str, column: str) -> float:
        for lab, cells in self.rows:
            if lab == row_label:
                return cells.get(column, 0.0)
        raise KeyError(row_label)


def _ordered_day_labels(labels: set[str]) -> list[str]:
    known = [f"{s}-{lvl}" for s in SEASONS for lvl in ("high", "low")]
    out = [lab for lab in known if lab in labels]
    out += sorted(lab for lab in labels if lab not in known)
    return out


def emit_energy_activated(point: GridPointResult, scheme: str) -> EnergyActivatedTable:
    """Hierarchical activation energies in GWh/year for one scheme.

    Row levels: system operator + market, then product (CM, B, or the
    joint CM+B), then direction.  Each level's row is the sum of the rows
    beneath it; the last column is the weighted annual total.
    """
    acc: dict[tuple[str, str, str, str], dict[str, float]] = {}
    labels = set()
    for day in point.days:
        labels.add(day.label)
        for rec in day.energies:
            if rec["scheme"] != scheme:
                continue
            key = (rec["so"], rec["market"], rec["product"], rec["direction"])
            acc.setdefault(key, {})
            gwh = day.weight * rec["mwh"] / 1000.0
            acc[key][day.label] = acc[key].get(day.label, 0.0) + gwh
    if not any(scheme in d.scheme_costs for d in point.days):
        raise MissingScheme(scheme)
    day_cols = _ordered_day_labels(labels)
    columns = day_cols + ["Total Year"]

    def cells_sum(parts: list[dict[str, float]]) -> dict[str, float]:
        out: dict[str, float] = {}
        for p in parts:
            for c, v in p.items():
                out[c] = out.get(c, 0.0) + v
        out["Total Year"] = sum(out.get(c, 0.0) for c in day_cols)
        return out

    rows: list[tuple[str, dict[str, float]]] = []
    groups = sorted({(so, market) for (so, market, _, _) in acc})
    for so, market in groups:
        products = sorted({p for (s, m, p, _) in acc if (s, m) == (so, market)})
        product_cells = []
        product_rows = []
        for product in products:
            dir_rows, dir_cells = [], []
            for direction in ("Down", "Up"):
                key = (so, market, product, direction)
                if key in acc:
                    cells = cells_sum([acc[key]])
                    dir_rows.append((f"{so} {market} / {product} / {direction}.", cells))
                    dir_cells.append(acc[key])
            pcells = cells_sum(dir_cells)
            product_rows.append(((f"{so} {market} / {product}", pcells), dir_rows))
            product_cells.append(pcells)
        head = cells_sum([{c: v for c, v in pc.items() if c != "Total Year"}
                          for pc in product_cells])
        rows.append((f"{so} {market}", head))
        for (prow, drows) in product_rows:
            rows.append(prow)
            rows.extend(drows)
    return EnergyActivatedTable(columns, rows)


# -- cost comparison (Tables V / VI style) ---------------------------------------

COST_ROW_ORDER = (
    "Common / Joint",
    "Common / Separate",
    "Multi-level (OPF) / Local",
    "Multi-level (OPF) / Joint",
    "Multi-level (OPF) / Separate",
    "Multi-level (PTDF-Based) / Local",
    "Multi-level (PTDF-Based) / Joint",
    "Multi-level (PTDF-Based) / Separate",
)

_SCHEME_GROUP = {"common": "Common", "ml_opf": "Multi-level (OPF)",
                 "ml_ptdf": "Multi-level (PTDF-Based)"}


def cost_rows_from_point(point: GridPointResult) -> dict[str, float]:
    """Table-style row values (EUR/year) from one grid point's schemes."""
    rows: dict[str, float] = {}
    for day in point.days:
        for scheme in day.scheme_costs:
            if scheme.startswith("common"):
                group = "Common"
                variant = "Joint" if scheme.endswith("joint") else "Separate"
                rows.setdefault(f"{group} / {variant}", 0.0)
                rows[f"{group} / {variant}"] += day.weight * day.scheme_costs[scheme]["total"]
            else:
                group = _SCHEME_GROUP["ml_opf" if "ml_opf" in scheme else "ml_ptdf"]
                variant = "Joint" if scheme.endswith("joint") else "Separate"
                rows.setdefault(f"{group} / Local", 0.0)
                rows.setdefault(f"{group} / {variant}", 0.0)
                rows[f"{group} / Local"] += day.weight * day.scheme_costs[scheme]["local"]
                rows[f"{group} / {variant}"] += day.weight * day.scheme_costs[scheme]["tso"]
    return rows


@dataclass
class CostComparisonTable:
    scenario_names: list[str]
    rows: list[str]
    values: dict[str, list[float]]          # row -> value per scenario, EUR

    def to_csv(self) -> str:
        out = io.StringIO()
        header = "market_model," + ",".join(f"{n}_keur" for n in self.scenario_names)
        if len(self.scenario_names) == 2:
            header += ",delta_pct"
        out.write(header + "\n")
        for row in self.rows:
            vals = self.values[row]
            cells = [format_cost_keur(v) for v in vals]
            if len(vals) == 2:
                cells.append(format_percent_delta(vals[0], vals[1]))
            out.write(row + "," + ",".join(cells) + "\n")
        return out.getvalue()

    def to_dict(self) -> dict:
        return {"scenarios": self.scenario_names,
                "rows": [{"label": r, "values": self.values[r]} for r in self.rows]}

    def delta_percent(self, row: str) -> str:
        base, new = self.values[row]
        return format_percent_delta(base, new)


def emit_cost_comparison(scenarios: Sequence[tuple[str, Mapping[str, float]]]
                         ) -> CostComparisonTable:
    """Cost table over one or two named scenarios of row -> EUR values.

    With two scenarios a percent-delta column ``(new - base)/base`` is
    rendered at one decimal, away from zero.
    """
    if not scenarios:
        raise MissingScheme("no scenarios supplied")
    names = [n for n, _ in scenarios]
    keys: list[str] = []
    for _, row_map in scenarios:
        for k in row_map:
            if k not in keys:
                keys.append(k)
    rows = [r for r in COST_ROW_ORDER if r in keys]
    rows += [k for k in keys if k not in COST_ROW_ORDER]
    missing = [r for r in rows for _, m in scenarios if r not in m]
    if missing:
        raise MissingScheme(f"rows missing from a scenario: {sorted(set(missing))}")
    values = {r: [float(m[r]) for _, m in scenarios] for r in rows}
    return CostComparisonTable(names, rows, values)


# -- sensitivity surfaces (Figs. 3-4 style) ---------------------------------------


@dataclass
class SurfaceData:
    x_name: str
    y_name: str
    records: list[tuple[float, float, float]]   # (x, y, value); NaN for holes
    boundary: list[tuple[float, float]]         # per x: first y where value > tol
    flat: bool

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write(f"{self.x_name},{self.y_name},value\n")
        for x, y, v in self.records:
            val = "" if math.isnan(v) else f"{v:.6f}"
            out.write(f"{x},{y},{val}\n")
        return out.getvalue()

    def to_matrix(self) -> str:
        """gnuplot-style matrix: rows = y values, columns = x values."""
        xs = sorted({x for x, _, _ in self.records})
        ys = sorted({y for _, y, _ in self.records})
        lookup = {(x, y): v for x, y, v in self.records}
        lines = ["# x: " + " ".join(str(x) for x in xs)]
        for y in ys:
            lines.append(" ".join(f"{lookup.get((x, y), math.nan):.6f}" for x in xs))
        return "\n".join(lines) + "\n"


def emit_surface(study: StudyResult, metric: str, scheme: str) -> SurfaceData:
    """Long-format surface of a metric over a 2-axis sensitivity grid.

    ``metric``: "dso_cost" (local market cost, EUR/year) or "nsf"
    (non-supplied flexibility, MWh/year).  The boundary lists, per first-
    axis value, the smallest second-axis value where the metric exceeds
    1e-6; an empty boundary with ``flat`` set means the whole grid is flat.
    """
    if len(study.config.axes) != 2:
        raise EmptyGrid("surface needs a two-axis sensitivity grid")
    if not study.points:
        raise EmptyGrid("no grid points")
    ax_x, ax_y = study.config.axes
    records = []
    for pt in study.points:
        x = pt.factors[ax_x.name]
        y = pt.factors[ax_y.name]
        if not pt.ok:
            records.append((x, y, math.nan))
            continue
        if metric == "dso_cost":
            v = pt.annual(scheme, "local")
        elif metric == "nsf":
            v = pt.annual_nsf(scheme)
        else:
            raise ValueError(f"unknown metric {metric!r}")
        records.append((x, y, v))
    boundary = []
    for x in sorted({r[0] for r in records}):
        col = sorted((y, v) for (xx, y, v) in records if xx == x and not math.isnan(v))
        hit = next((y for y, v in col if v > FLAT_TOL), None)
        if hit is not None:
            boundary.append((x, hit))
    flat = not boundary
    return SurfaceData(ax_x.name, ax_y.name, records, boundary, flat)
