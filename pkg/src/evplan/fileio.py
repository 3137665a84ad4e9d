"""Readers and writers for the on-disk formats used by the command line."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from evplan import __version__
from evplan.evmodel import EvModel, TripRecord
from evplan.harness import Agent, ExperimentResult, FleetPlans, FleetScenario
from evplan.plangen import DemandPlan, PlanSet

TRIP_FIELDS = ("vehicle_id", "start_min", "end_min", "avg_speed_mph", "destination")
METRIC_FIELDS = (
    "repetition", "seed", "sigma", "cost", "peak_power", "mean_discomfort", "fairness",
    "relative_sigma_reduction", "relative_cost_reduction", "control_sigma", "control_cost",
    "control_peak", "discomfort_plan1", "discomfort_planv", "fairness_plan1", "fairness_planv",
)


def read_trips_csv(path) -> list[TripRecord]:
    """Parse a trip CSV. Errors name the offending line."""
    trips = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(TRIP_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            try:
                trips.append(TripRecord(
                    row["vehicle_id"], int(row["start_min"]), int(row["end_min"]),
                    float(row["avg_speed_mph"]), row["destination"].strip(),
                ))
            except (TypeError, ValueError, AttributeError) as exc:
                raise ValueError(f"{path}: row {reader.line_num}: {exc}") from exc
    if not trips:
        raise ValueError(f"{path}: no trips")
    return trips


def write_trips_csv(trips, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRIP_FIELDS)
        for t in trips:
            w.writerow([t.vehicle_id, t.start, t.end, repr(t.avg_speed), t.destination])


def _model_dict(m: EvModel) -> dict:
    return {
        "name": m.name, "mpg_city": m.mpg_city, "mpg_highway": m.mpg_highway,
        "battery_capacity": m.battery_capacity, "charge_rate": m.charge_rate,
        "market_share": m.market_share,
    }


def save_fleet(fleet: FleetScenario, path) -> None:
    doc = {
        "span": fleet.span,
        "agents": [
            {
                "agent_id": a.agent_id,
                "model": _model_dict(a.model),
                "initial_soc": a.initial_soc,
                "participant": a.agent_id in fleet.participants,
                "trips": [[t.start, t.end, t.avg_speed, t.destination] for t in a.trips],
            }
            for a in fleet.agents
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def load_fleet(path) -> FleetScenario:
    doc = json.loads(Path(path).read_text())
    agents, participants = [], set()
    for a in doc["agents"]:
        vid = a["agent_id"]
        trips = tuple(TripRecord(vid, s, e, v, d) for s, e, v, d in a["trips"])
        agents.append(Agent(vid, EvModel(**a["model"]), trips, a.get("initial_soc", 1.0)))
        if a.get("participant", True):
            participants.add(vid)
    return FleetScenario(agents, int(doc["span"]), frozenset(participants))


def _vector(values) -> list:
    # integers for exact zeros keep the file compact
    return [0 if v == 0 else float(v) for v in np.asarray(values, dtype=float)]


def save_plans(plans: FleetPlans, path, meta: dict | None = None) -> None:
    entries = []
    for agent in plans.agent_ids:
        for p in range(plans.periods):
            ps = plans.plansets[agent, p]
            ctl = plans.controls[agent, p]
            entries.append({
                "agent_id": agent,
                "period": p,
                "v": ps.v,
                "plans": [{"values": _vector(d.values), "discomfort": d.discomfort} for d in ps.plans],
                "control": {"values": _vector(ctl.values), "discomfort": ctl.discomfort},
            })
    doc = {"horizon": plans.horizon, "periods": plans.periods, "v_max": plans.v_max,
           **(meta or {}), "plansets": entries}
    Path(path).write_text(json.dumps(doc, separators=(",", ":")))


def load_plans(path) -> FleetPlans:
    doc = json.loads(Path(path).read_text())
    agent_ids = list(dict.fromkeys(e["agent_id"] for e in doc["plansets"]))
    out = FleetPlans(int(doc["horizon"]), int(doc["periods"]), agent_ids, v_max=int(doc.get("v_max", 4)))
    for e in doc["plansets"]:
        key = (e["agent_id"], int(e["period"]))
        plans = [
            DemandPlan(np.asarray(d["values"], dtype=float), j, float(d["discomfort"]))
            for j, d in enumerate(e["plans"])
        ]
        if len(plans) != e["v"]:
            raise ValueError(f"plan set {key} declares v={e['v']} but holds {len(plans)} plans")
        out.plansets[key] = PlanSet(e["agent_id"], plans)
        ctl = e["control"]
        out.controls[key] = DemandPlan(np.asarray(ctl["values"], dtype=float), 0, float(ctl["discomfort"]))
    missing = [(a, p) for a in agent_ids for p in range(out.periods) if (a, p) not in out.plansets]
    if missing:
        raise ValueError(f"plans file lacks plan sets for {missing[:3]}")
    return out


def read_price_csv(path) -> np.ndarray:
    """``t,usd_per_kwh`` rows in step order."""
    values = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for expected, row in enumerate(reader):
            try:
                t, price = int(row["t"]), float(row["usd_per_kwh"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}: row {reader.line_num}: {exc}") from exc
            if t != expected:
                raise ValueError(f"{path}: row {reader.line_num}: expected t={expected}, got {t}")
            if price < 0:
                raise ValueError(f"{path}: row {reader.line_num}: negative price")
            values.append(price)
    return np.asarray(values)


def write_series_csv(values, path, header=("t", "kw")) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for t, v in enumerate(np.asarray(values, dtype=float)):
            w.writerow([t, repr(float(v))])


def read_series_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    return np.array([float(r[1]) for r in rows])


def read_config(path) -> dict:
    """Flat ``key = value`` text; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def write_results(result: ExperimentResult, out_dir) -> Path:
    """Write metrics, selections, curves and run metadata under ``out_dir``."""
    out = Path(out_dir)
    (out / "curves").mkdir(parents=True, exist_ok=True)
    with open(out / "metrics.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_FIELDS)
        for row in result.rows:
            w.writerow([repr(row[k]) if isinstance(row[k], float) else row[k] for k in METRIC_FIELDS])
    with open(out / "selection_distribution.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("plan", "probability"))
        for j, prob in enumerate(result.distribution, start=1):
            w.writerow([j, repr(float(prob))])
    with open(out / "selected_plans.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("repetition", "period", "agent_id", "plan"))
        for rep, sel in enumerate(result.selections):
            for (agent, period), plan in sorted(sel.items(), key=lambda kv: (kv[0][1], kv[0][0])):
                w.writerow([rep, period, agent, plan])
    write_series_csv(result.control_curve, out / "curves" / "control.csv")
    for rep, curve in enumerate(result.curves):
        write_series_csv(curve, out / "curves" / f"rep_{rep:03d}.csv")
    meta = {"version": __version__, **result.metadata}
    (out / "metadata.txt").write_text("".join(f"{k} = {v}\n" for k, v in meta.items()))
    return out


def read_metrics_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [
            {k: (int(v) if k in ("repetition", "seed") else float(v)) for k, v in row.items()}
            for row in csv.DictReader(fh)
        ]
