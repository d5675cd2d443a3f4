"""Command line entry points.

``gridflex run <config>`` executes a study and writes a results directory;
``gridflex report <results> --table {energy|cost|surface|mix}`` renders
tables from a results document; ``gridflex validate <network>`` checks a
network file (exit code 2 when findings exist); ``gridflex init-demo``
writes a ready-to-run demo input set.  Exit codes: 0 success, 1 error,
2 validation findings.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import fixtures, reporting, scenario
from .markets import EngineOptions
from .mip import SolverOptions
from .netmodel import (Fsp, Generator, World, load_world, save_world,
                       validate_world, world_from_dict)


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=1)


def _engine_options(cfg: dict) -> EngineOptions:
    market = cfg.get("market", {})
    solver = cfg.get("solver", {})
    return EngineOptions(
        cnsf=float(market.get("cnsf_eur_per_mwh", 10_000.0)),
        min_bid_size=float(market.get("min_bid_size_mw", 0.0)),
        ess_model=market.get("ess_model", "literal"),
        impact_raw_averages=bool(market.get("impact_raw_averages", False)),
        solver=SolverOptions(
            feas_tol=float(solver.get("feas_tol", 1e-6)),
            mip_gap=float(solver.get("mip_gap", 1e-6)),
            time_limit=float(solver.get("time_limit_s", 60.0)),
            engine=solver.get("engine", "highs"),
        ),
    )


def _study_config(cfg: dict) -> scenario.StudyConfig:
    axes = []
    for ax in cfg.get("sensitivity", {}).get("axes", []):
        axes.append(scenario.SensitivityAxis(ax["name"], tuple(float(v) for v in ax["values"])))
    additions: list = []
    repl = cfg.get("replication", {})
    for gd in repl.get("generators", []):
        additions.append(world_from_dict({"nodes": [], "lines": [], "zones": [],
                                          "operators": [], "generators": [gd],
                                          "horizon": cfg.get("horizon", 24)}).generators[0])
    for fd in repl.get("fsps", []):
        additions.append(world_from_dict({"nodes": [], "lines": [], "zones": [],
                                          "operators": [], "fsps": [fd],
                                          "horizon": cfg.get("horizon", 24)}).fsps[0])
    return scenario.StudyConfig(
        schemes=tuple(cfg.get("schemes", ("common_joint",))),
        annual_imbalance_mwh=float(cfg.get("annual_imbalance_mwh", 0.0)),
        imbalance_seed=int(cfg.get("imbalance_seed", 7)),
        imbalance_pattern=cfg.get("imbalance_pattern", "alternating"),
        axes=tuple(axes),
        replication=tuple(additions),
        derive_transmission_fsps=bool(cfg.get("derive_transmission_fsps", False)),
        workers=int(cfg.get("workers", 1)),
        engine=_engine_options(cfg),
    )


def load_demand_csv(path, node_ids) -> np.ndarray:
    """Long-format (timestamp, node_id, mw) CSV into an (hours, nodes) array."""
    series: dict[str, dict[str, float]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            series.setdefault(row["timestamp"], {})[row["node_id"]] = float(row["mw"])
    stamps = sorted(series)
    out = np.zeros((len(stamps), len(node_ids)))
    for i, ts in enumerate(stamps):
        for j, nd in enumerate(node_ids):
            out[i, j] = series[ts].get(nd, 0.0)
    return out


def cmd_validate(args) -> int:
    world = load_world(args.network)
    report = validate_world(world)
    print(report)
    return 0 if report.empty else 2


def cmd_run(args) -> int:
    cfg = json.loads(Path(args.config).read_text())
    base = Path(args.config).parent
    world = load_world(base / cfg["network"])
    report = validate_world(world)
    if not report.empty:
        print(report, file=sys.stderr)
        return 2
    config = _study_config(cfg)
    days = None
    if cfg.get("demand_csv"):
        node_ids = [n.id for n in world.net.nodes]
        demand = load_demand_csv(base / cfg["demand_csv"], node_ids)
        days = scenario.cluster_representative_days(demand, node_ids)
    result = scenario.run_study(config, world, days)
    outdir = Path(cfg.get("results_dir", "results"))
    if not outdir.is_absolute():
        outdir = base / outdir
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "results.json").write_text(canonical_json(result.to_dict()))
    rows = reporting.cost_rows_from_point(result.points[0])
    if rows:
        table = reporting.emit_cost_comparison([("base", rows)])
        (outdir / "cost.csv").write_text(table.to_csv())
    for scheme in config.schemes:
        table = reporting.emit_energy_activated(result.points[0], scheme)
        (outdir / f"energy_{scheme}.csv").write_text(table.to_csv())
    failures = [p for p in result.points if not p.ok]
    print(f"study complete: {len(result.points)} grid points, "
          f"{len(failures)} failed, results in {outdir}")
    for p in failures:
        print(f"  failed {p.factors}: {p.error}", file=sys.stderr)
    return 0


def cmd_report(args) -> int:
    doc = json.loads(Path(args.results).read_text())
    study = scenario.study_result_from_dict(doc)
    scheme = args.scheme or (study.config.schemes[0] if study.config.schemes else None)
    if args.table == "energy":
        out = reporting.emit_energy_activated(study.points[args.point], scheme).to_csv()
    elif args.table == "cost":
        scenarios = [("base", reporting.cost_rows_from_point(study.points[args.point]))]
        if args.compare:
            other = scenario.study_result_from_dict(json.loads(Path(args.compare).read_text()))
            scenarios.append(("scenario", reporting.cost_rows_from_point(other.points[args.point])))
        out = reporting.emit_cost_comparison(scenarios).to_csv()
    elif args.table == "surface":
        surf = reporting.emit_surface(study, args.metric, scheme)
        out = surf.to_csv()
        if args.matrix:
            out += "\n" + surf.to_matrix()
    elif args.table == "mix":
        out = reporting.mix_from_study(study, args.point).to_csv()
    else:
        raise ValueError(f"unknown table {args.table}")
    if args.out:
        Path(args.out).write_text(out)
    else:
        sys.stdout.write(out)
    return 0


def cmd_init_demo(args) -> int:
    outdir = Path(args.dir)
    outdir.mkdir(parents=True, exist_ok=True)
    world = fixtures.demo_world()
    save_world(world, outdir / "network.json")
    demand = fixtures.synthetic_year_demand(world.net, seed=1)
    node_ids = [n.id for n in world.net.nodes]
    with open(outdir / "demand.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "node_id", "mw"])
        for hh in range(demand.shape[0]):
            ts = f"2020-{hh:05d}"
            for j, nd in enumerate(node_ids):
                w.writerow([ts, nd, f"{demand[hh, j]:.3f}"])
    cfg = {
        "network": "network.json",
        "demand_csv": "demand.csv",
        "schemes": ["common_joint", "ml_ptdf_joint"],
        "annual_imbalance_mwh": 60_000.0,
        "imbalance_seed": 7,
        "derive_transmission_fsps": True,
        "results_dir": "results",
    }
    (outdir / "config.json").write_text(canonical_json(cfg))
    print(f"demo inputs written to {outdir}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="gridflex",
                                     description="TSO-DSO coordination simulator")
    sub = parser.add_subparsers(dest="cmd", required=True)
    p = sub.add_parser("validate", help="check a network document")
    p.add_argument("network")
    p.set_defaults(func=cmd_validate)
    p = sub.add_parser("run", help="execute a study from a config file")
    p.add_argument("config")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("report", help="render tables from a results document")
    p.add_argument("results")
    p.add_argument("--table", choices=("energy", "cost", "surface", "mix"), required=True)
    p.add_argument("--scheme", default=None)
    p.add_argument("--metric", choices=("dso_cost", "nsf"), default="dso_cost")
    p.add_argument("--point", type=int, default=0)
    p.add_argument("--compare", default=None)
    p.add_argument("--matrix", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report)
    p = sub.add_parser("init-demo", help="write demo inputs into a directory")
    p.add_argument("dir")
    p.set_defaults(func=cmd_init_demo)
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
