"""Command-line entry point: ``evplan <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from evplan import fileio, forecast, harness
from evplan.evmodel import load_catalog

log = logging.getLogger("evplan")

# flags that map one-to-one onto ExperimentConfig fields
CONFIG_FLAGS = (
    "horizon", "objective", "participation", "repetitions", "v_max", "interval_m", "seed",
    "span", "n_agents", "smoothing", "resample_participants", "price_path", "trips_path",
    "catalog_path", "fleet_path", "plans_path",
)


def _add_plan_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--horizon", type=int, help="optimisation horizon in steps (1440 daily, 10080 weekly)")
    p.add_argument("--v-max", dest="v_max", type=int, help="maximum plans per agent")
    p.add_argument("--interval-m", dest="interval_m", type=int, help="minimum charging interval in steps")
    p.add_argument("--smoothing", type=int, help="usage-likelihood moving-average width")


def cmd_synth(args) -> int:
    catalog = load_catalog(args.catalog)
    trips = harness.synthetic_trips(args.n, args.span, args.seed)
    fleet = harness.fleet_from_trips(trips, catalog, args.span, args.seed)
    fileio.save_fleet(fleet, args.out)
    if args.trips_out:
        fileio.write_trips_csv(trips, args.trips_out)
    print(f"{len(fleet.agents)} agents, {len(trips)} trips -> {args.out}")
    return 0


def cmd_ingest(args) -> int:
    fleet = harness.ingest_fleet(args.trips, args.catalog, args.span, args.seed)
    fileio.save_fleet(fleet, args.out)
    counts: dict[str, int] = {}
    for a in fleet.agents:
        counts[a.model.name] = counts.get(a.model.name, 0) + 1
    print(f"{len(fleet.agents)} agents -> {args.out}")
    for name, count in counts.items():
        print(f"  {name}: {count}")
    return 0


def cmd_plangen(args) -> int:
    cfg = harness.ExperimentConfig()
    fleet = fileio.load_fleet(args.fleet)
    horizon = args.horizon or cfg.horizon
    v_max = args.v_max or cfg.v_max
    interval = args.interval_m or cfg.interval_m
    smoothing = args.smoothing or cfg.smoothing
    plans = harness.generate_fleet_plans(fleet, horizon, v_max, interval, args.seed, smoothing)
    fileio.save_plans(plans, args.out, {"seed": args.seed, "interval_m": interval, "smoothing": smoothing})
    print(f"{len(plans.plansets)} plan sets ({plans.periods} periods of {horizon} steps) -> {args.out}")
    return 0


def _config_from_args(args) -> harness.ExperimentConfig:
    values = fileio.read_config(args.config) if args.config else {}
    for key in CONFIG_FLAGS:
        value = getattr(args, key, None)
        if value is not None:
            values[key] = value
    return harness.ExperimentConfig.from_mapping(values)


def load_experiment_inputs(cfg: harness.ExperimentConfig):
    """Plans and price for a config: from a plans file, a fleet, trips, or a synthetic fleet."""
    if cfg.plans_path:
        plans = fileio.load_plans(cfg.plans_path)
        if plans.horizon != cfg.horizon:
            raise ValueError(f"plans file has horizon {plans.horizon}, config asks for {cfg.horizon}")
    else:
        if cfg.fleet_path:
            fleet = fileio.load_fleet(cfg.fleet_path)
        elif cfg.trips_path:
            fleet = harness.ingest_fleet(cfg.trips_path, cfg.catalog_path, cfg.span, cfg.seed)
        else:
            fleet = harness.synthesize_fleet(cfg.n_agents, cfg.span, cfg.seed, load_catalog(cfg.catalog_path))
        plans = harness.generate_fleet_plans(fleet, cfg.horizon, cfg.v_max, cfg.interval_m, cfg.seed, cfg.smoothing)
    price = fileio.read_price_csv(cfg.price_path) if cfg.price_path else None
    return plans, price


def cmd_optimize(args) -> int:
    cfg = _config_from_args(args)
    plans, price = load_experiment_inputs(cfg)
    result = harness.run_experiment(cfg, plans, price)
    out = fileio.write_results(result, args.out_dir)
    _print_summary(result.summary(), result.distribution)
    print(f"results -> {out}")
    return 0


def _print_summary(summary: dict, distribution) -> None:
    for key, (mean, sd) in summary.items():
        print(f"{key:>26}: {mean:.6g} ± {sd:.3g}")
    print(f"{'plan selection':>26}: " + ", ".join(f"{p:.3f}" for p in distribution))


def cmd_report(args) -> int:
    run = Path(args.run_dir)
    rows = fileio.read_metrics_csv(run / "metrics.csv")
    if not rows:
        raise ValueError(f"{run}/metrics.csv holds no repetitions")
    keys = [k for k in rows[0] if k not in ("repetition", "seed")]
    summary = {
        k: {"mean": float(np.mean([r[k] for r in rows])), "std": float(np.std([r[k] for r in rows]))}
        for k in keys
    }
    dist_path = run / "selection_distribution.csv"
    distribution = fileio.read_series_csv(dist_path).tolist() if dist_path.exists() else []
    report = {"repetitions": len(rows), "metrics": summary, "plan_selection": distribution}
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def _contributions(args) -> list[forecast.ParadigmContribution]:
    out = [forecast.contribution("control", horizon=args.table_horizon)]
    for paradigm in ("MIN-DEV", "MIN-COST"):
        for share in args.participation:
            out.append(forecast.contribution(paradigm, share, args.table_horizon))
    for spec in args.rho or ():
        name, _, value = spec.partition("=")
        if not value:
            raise ValueError(f"--rho expects NAME=KW_PER_EV, got {spec!r}")
        out.append(forecast.ParadigmContribution(name, 1.0, "custom", float(value)))
    if args.metrics:
        rows = fileio.read_metrics_csv(args.metrics)
        peak = float(np.mean([r["peak_power"] for r in rows]))
        out.append(forecast.ParadigmContribution("run", 1.0, "custom", peak / args.fleet_size))
    return out


def cmd_forecast(args) -> int:
    years, sales = forecast.read_observations(args.observations)
    fit = forecast.fit_adoption(years, sales)
    c = fit.curve
    print(f"cap {c.cap:.6g} EVs, rate {c.rate:.4f} /yr, midpoint {c.midpoint:.3f}, rmse {fit.rmse:.4g}")
    rows = []
    for contrib in _contributions(args):
        label = contrib.label if contrib.horizon != "custom" else contrib.paradigm
        for year in range(args.start, args.end + 1):
            rows.append((year, label, forecast.project_peak_power(c, contrib, year)))
    with open(args.out, "w") as fh:
        fh.write("year,paradigm,peak_mw\n")
        for year, label, mw in rows:
            fh.write(f"{year},{label},{mw!r}\n")
    for year, label, mw in rows:
        if year == args.report_year:
            print(f"  {year} {label}: {mw:.1f} MW")
    print(f"projection -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evplan", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic commuter fleet")
    p.add_argument("--n", type=int, default=130)
    p.add_argument("--span", type=int, default=harness.WEEK, help="steps of history (minutes)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--catalog")
    p.add_argument("--out", required=True, help="fleet JSON")
    p.add_argument("--trips-out", help="also write the trips as CSV")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="build a fleet from a trip CSV")
    p.add_argument("--trips", required=True)
    p.add_argument("--catalog")
    p.add_argument("--span", type=int, default=harness.WEEK)
    p.add_argument("--seed", type=int, default=0, help="model assignment seed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("plangen", help="generate plan sets for a fleet")
    p.add_argument("--fleet", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    _add_plan_flags(p)
    p.set_defaults(func=cmd_plangen)

    p = sub.add_parser("optimize", help="run repeated tree optimisation and write metrics")
    p.add_argument("--config", help="flat key = value file; flags override it")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--objective", choices=["MIN-DEV", "MIN-COST"])
    p.add_argument("--participation", type=float)
    p.add_argument("--repetitions", type=int)
    p.add_argument("--span", type=int)
    p.add_argument("--n-agents", dest="n_agents", type=int, help="size of the synthetic fleet")
    p.add_argument("--resample-participants", dest="resample_participants", action="store_const", const=True)
    p.add_argument("--price", dest="price_path")
    p.add_argument("--trips", dest="trips_path")
    p.add_argument("--catalog", dest="catalog_path")
    p.add_argument("--fleet", dest="fleet_path")
    p.add_argument("--plans", dest="plans_path")
    p.add_argument("--out-dir", required=True)
    _add_plan_flags(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("forecast", help="fit adoption and project peak power")
    p.add_argument("--observations", help="year,cumulative_sales CSV (default: bundled California series)")
    p.add_argument("--start", type=int, default=2011)
    p.add_argument("--end", type=int, default=2030)
    p.add_argument("--table-horizon", choices=["daily", "weekly"], default="daily")
    p.add_argument("--participation", type=float, nargs="*", default=[1.0])
    p.add_argument("--rho", action="append", help="extra paradigm as NAME=KW_PER_EV")
    p.add_argument("--metrics", help="metrics.csv of a run; its mean peak defines a paradigm")
    p.add_argument("--fleet-size", type=int, default=130)
    p.add_argument("--report-year", type=int, default=2025)
    p.add_argument("--out", required=True, help="year,paradigm,peak_mw CSV")
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("report", help="summarise a run directory")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--out", help="also write the JSON report here")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError, KeyError) as exc:
        print(f"evplan {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
