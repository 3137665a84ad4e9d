"""Experiment orchestration: fleets, participation scenarios and seeded repetitions."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields
from typing import Sequence

import numpy as np

from evplan import epos, metrics
from evplan.evmodel import (
    EvModel,
    InfeasibleTripError,
    SocSignal,
    TripRecord,
    assign_models,
    build_soc_profile,
    load_catalog,
    usage_likelihood,
)
from evplan.plangen import control_plan, generate_plans

log = logging.getLogger(__name__)

DAY = 1440
WEEK = 7 * DAY
SEED_MIXING = "numpy.random.SeedSequence([seed, repetition]).generate_state(1)[0]"


class ExperimentError(RuntimeError):
    def __init__(self, message: str, repetition: int | None = None):
        super().__init__(message if repetition is None else f"repetition {repetition}: {message}")
        self.repetition = repetition


@dataclass
class ExperimentConfig:
    horizon: int = DAY
    objective: str = "MIN-DEV"
    participation: float = 1.0
    repetitions: int = 50
    v_max: int = 4
    interval_m: int = 15
    seed: int = 0
    span: int = WEEK
    n_agents: int = 130
    smoothing: int = 60
    resample_participants: bool = False
    price_path: str | None = None
    trips_path: str | None = None
    catalog_path: str | None = None
    fleet_path: str | None = None
    plans_path: str | None = None

    def __post_init__(self):
        self.objective = epos.Objective(self.objective).value
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")
        if not 0.0 < self.participation <= 1.0:
            raise ValueError("participation must lie in (0, 1]")
        if self.interval_m < 1:
            raise ValueError("interval_m must be at least 1")
        if self.v_max < 1:
            raise ValueError("v_max must be at least 1")
        if self.horizon < 1 or self.span % self.horizon:
            raise ValueError(f"horizon {self.horizon} must divide the data span {self.span}")

    @classmethod
    def from_mapping(cls, values: dict) -> "ExperimentConfig":
        """Build from string-valued settings, e.g. a parsed config file."""
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            key = key.replace("-", "_")
            if key not in known:
                raise ValueError(f"unknown config key {key!r}")
            if raw is None:
                continue
            kind = known[key].type
            if isinstance(raw, str) and raw.strip().lower() in ("", "none"):
                kwargs[key] = None
            elif kind == "int":
                kwargs[key] = int(raw)
            elif kind == "float":
                kwargs[key] = float(raw)
            elif kind == "bool":
                kwargs[key] = raw if isinstance(raw, bool) else str(raw).strip().lower() in ("1", "true", "yes", "on")
            else:
                kwargs[key] = str(raw)
        return cls(**kwargs)


@dataclass(eq=False)
class Agent:
    agent_id: str
    model: EvModel
    trips: tuple[TripRecord, ...]
    initial_soc: float = 1.0


@dataclass(eq=False)
class FleetScenario:
    agents: list[Agent]
    span: int
    participants: frozenset = frozenset()

    def __post_init__(self):
        ids = {a.agent_id for a in self.agents}
        if len(ids) != len(self.agents):
            raise ValueError("duplicate agent ids")
        if not self.participants:
            self.participants = frozenset(ids)
        elif not self.participants <= ids:
            raise ValueError("participants must be fleet agents")

    @property
    def agent_ids(self) -> list[str]:
        return [a.agent_id for a in self.agents]

    def soc_signal(self, agent: Agent) -> SocSignal:
        return build_soc_profile(agent.trips, agent.model, self.span, agent.initial_soc)

    def with_participation(self, fraction: float, seed: int) -> "FleetScenario":
        return FleetScenario(self.agents, self.span, choose_participants(self.agent_ids, fraction, seed))


def mix_seed(seed: int, *extra: int) -> int:
    return int(np.random.SeedSequence([seed, *extra]).generate_state(1)[0])


def choose_participants(agent_ids: Sequence[str], fraction: float, seed: int) -> frozenset:
    n = len(agent_ids)
    count = int(math.floor(fraction * n + 0.5))
    order = np.random.default_rng(seed).permutation(n)
    return frozenset(agent_ids[i] for i in order[:count])


def fleet_from_trips(
    trips: Sequence[TripRecord], catalog: Sequence[EvModel], span: int, seed: int
) -> FleetScenario:
    """Group trips per vehicle, assign models by market share and check feasibility."""
    by_vehicle: dict[str, list[TripRecord]] = {}
    for trip in trips:
        by_vehicle.setdefault(trip.vehicle_id, []).append(trip)
    if not by_vehicle:
        raise ValueError("no trips given")
    ids = sorted(by_vehicle)
    models = assign_models(len(ids), catalog, seed)
    agents = []
    for vid, model in zip(ids, models):
        vehicle_trips = tuple(sorted(by_vehicle[vid], key=lambda t: t.start))
        agent = Agent(vid, model, vehicle_trips)
        try:
            build_soc_profile(agent.trips, model, span, agent.initial_soc)
        except InfeasibleTripError as exc:
            raise InfeasibleTripError(f"vehicle {vid} ({model.name}): {exc}", vid) from exc
        except ValueError as exc:
            raise ValueError(f"vehicle {vid}: {exc}") from exc
        agents.append(agent)
    return FleetScenario(agents, span)


def ingest_fleet(trips_path, catalog_path=None, horizon: int = WEEK, seed: int = 0) -> FleetScenario:
    from evplan.fileio import read_trips_csv

    trips = read_trips_csv(trips_path)
    return fleet_from_trips(trips, load_catalog(catalog_path), horizon, seed)


def _weekday_trips(vid: str, day0: int, rng: np.random.Generator) -> list[TripRecord]:
    trips = []
    leave = day0 + int(np.clip(rng.normal(450, 45), 330, 600))
    highway = rng.random() < 0.15
    speed = rng.uniform(61, 70) if highway else rng.uniform(20, 45)
    duration = int(rng.uniform(15, 40 if highway else 50))
    dest = "school" if rng.random() < 0.15 else "work"
    trips.append(TripRecord(vid, leave, leave + duration, round(speed, 2), dest))
    back = leave + duration + int(np.clip(rng.normal(510, 60), 240, 660))
    duration = int(rng.uniform(15, 40 if highway else 55))
    trips.append(TripRecord(vid, back, back + duration, round(speed, 2), "home"))
    home = back + duration
    if rng.random() < 0.35:
        out = home + int(rng.uniform(60, 150))
        leg = int(rng.uniform(10, 25))
        stay = int(rng.uniform(30, 90))
        speed = round(rng.uniform(20, 35), 2)
        if out + 2 * leg + stay < day0 + DAY:
            trips.append(TripRecord(vid, out, out + leg, speed, "other"))
            trips.append(TripRecord(vid, out + leg + stay, out + 2 * leg + stay, speed, "home"))
    return trips


def _weekend_trips(vid: str, day0: int, rng: np.random.Generator) -> list[TripRecord]:
    trips = []
    if rng.random() < 0.75:
        out = day0 + int(np.clip(rng.normal(690, 90), 480, 960))
        leg = int(rng.uniform(15, 60))
        stay = int(rng.uniform(60, 240))
        speed = round(rng.uniform(20, 45), 2)
        trips.append(TripRecord(vid, out, out + leg, speed, "other"))
        trips.append(TripRecord(vid, out + leg + stay, out + 2 * leg + stay, speed, "home"))
    return trips


def synthetic_trips(n: int, span: int, seed: int) -> list[TripRecord]:
    """Commute-like trips: two rush-hour legs on weekdays, a midday outing at weekends.

    Day 0 of the span is a Monday.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    trips = []
    width = len(str(n - 1))
    for i in range(n):
        vid = f"ev{i:0{width}d}"
        rng = np.random.default_rng([seed, i])
        for day in range(math.ceil(span / DAY)):
            make = _weekday_trips if day % 7 < 5 else _weekend_trips
            for trip in make(vid, day * DAY, rng):
                if trip.end <= span:
                    trips.append(trip)
    return trips


def synthesize_fleet(n: int, horizon: int = WEEK, seed: int = 0, catalog: Sequence[EvModel] | None = None) -> FleetScenario:
    catalog = load_catalog() if catalog is None else catalog
    return fleet_from_trips(synthetic_trips(n, horizon, seed), catalog, horizon, seed)


def default_price(span: int, resolution: float = 1.0) -> np.ndarray:
    """Synthetic diurnal spot price (USD/kWh) peaking in the morning and evening."""
    hours = (np.arange(span) * resolution / 60.0) % 24.0
    morning = 0.08 * np.exp(-0.5 * ((hours - 8.0) / 1.5) ** 2)
    evening = 0.12 * np.exp(-0.5 * ((hours - 19.0) / 2.0) ** 2)
    return 0.10 + morning + evening


@dataclass(eq=False)
class FleetPlans:
    """Plan sets and control plans per ``(agent, period)``."""

    horizon: int
    periods: int
    agent_ids: list[str]
    plansets: dict = field(default_factory=dict)
    controls: dict = field(default_factory=dict)
    v_max: int = 4

    @property
    def span(self) -> int:
        return self.horizon * self.periods


def generate_fleet_plans(
    fleet: FleetScenario, horizon: int, v_max: int, interval: int, seed: int, smoothing: int = 60
) -> FleetPlans:
    """Plans for every agent and every ``horizon``-long period of the fleet span."""
    if fleet.span % horizon:
        raise ValueError("horizon must divide the fleet span")
    periods = fleet.span // horizon
    out = FleetPlans(horizon, periods, fleet.agent_ids, v_max=v_max)
    for idx, agent in enumerate(fleet.agents):
        soc = fleet.soc_signal(agent)
        lam = usage_likelihood(agent.trips, horizon, periods, smoothing)
        for p in range(periods):
            piece = SocSignal(soc.values[p * horizon:(p + 1) * horizon + 1], soc.resolution)
            out.controls[agent.agent_id, p] = control_plan(piece, agent.model, lam)
            out.plansets[agent.agent_id, p] = generate_plans(
                piece, agent.model, lam, interval, v_max, mix_seed(seed, idx, p), agent.agent_id
            )
    return out


@dataclass(eq=False)
class ExperimentResult:
    config: ExperimentConfig
    rows: list[dict]
    control_curve: np.ndarray
    curves: list[np.ndarray]
    selections: list[dict]  # per repetition: (agent, period) -> 1-based plan
    distribution: np.ndarray
    price: np.ndarray
    metadata: dict

    def summary(self) -> dict:
        keys = [k for k in self.rows[0] if k not in ("repetition", "seed")]
        return {
            k: (float(np.mean([r[k] for r in self.rows])), float(np.std([r[k] for r in self.rows])))
            for k in keys
        }


def _agent_discomforts(plans: FleetPlans, picks: dict, participants) -> list[float]:
    """Per-agent discomfort, averaged over periods; non-participants run control."""
    out = []
    for agent in plans.agent_ids:
        vals = []
        for p in range(plans.periods):
            if agent in participants:
                vals.append(plans.plansets[agent, p].plans[picks[agent, p]].discomfort)
            else:
                vals.append(plans.controls[agent, p].discomfort)
        out.append(float(np.mean(vals)))
    return out


def _forced(plans: FleetPlans, participants, which: int) -> dict:
    """Every participant on plan ``which`` (0-based), or its last plan if it has fewer."""
    return {
        (a, p): min(which, plans.plansets[a, p].v - 1)
        for a in participants
        for p in range(plans.periods)
    }


def run_experiment(config: ExperimentConfig, plans: FleetPlans, price: np.ndarray | None = None) -> ExperimentResult:
    """Repeat the tree optimisation with freshly shuffled trees and collect metrics."""
    price = default_price(plans.span) if price is None else np.asarray(price, dtype=float)
    if price.shape != (plans.span,):
        raise ValueError(f"price has {price.size} steps, expected {plans.span}")
    step_h = 1 / 60
    H = plans.horizon
    control = np.zeros(plans.span)
    for (agent, p), plan in plans.controls.items():
        control[p * H:(p + 1) * H] += plan.values
    c_sigma, c_cost, c_peak = metrics.curve_metrics(control, price, step_h)

    rows, curves, selections = [], [], []
    for rep in range(config.repetitions):
        rep_seed = mix_seed(config.seed, rep)
        part_seed = mix_seed(config.seed, rep, 1) if config.resample_participants else mix_seed(config.seed, 1)
        participants = choose_participants(plans.agent_ids, config.participation, part_seed)
        tree = epos.build_tree(plans.agent_ids, rep_seed)
        curve = np.empty(plans.span)
        picks = {}
        try:
            for p in range(plans.periods):
                window = slice(p * H, (p + 1) * H)
                own = {a: plans.plansets[a, p].matrix() for a in participants}
                fixed = {a: plans.controls[a, p].values for a in plans.agent_ids if a not in participants}
                res = epos.run_optimization(own, tree, config.objective, price[window], fixed)
                curve[window] = res.curve
                for a in participants:
                    picks[a, p] = res.selections[a]
        except (ValueError, RuntimeError) as exc:
            raise ExperimentError(str(exc), rep) from exc

        sigma, cost, peak = metrics.curve_metrics(curve, price, step_h)
        disc = _agent_discomforts(plans, picks, participants)
        low = _agent_discomforts(plans, _forced(plans, participants, 0), participants)
        high = _agent_discomforts(plans, _forced(plans, participants, plans.v_max - 1), participants)
        rows.append({
            "repetition": rep,
            "seed": rep_seed,
            "sigma": sigma,
            "cost": cost,
            "peak_power": peak,
            "mean_discomfort": metrics.system_discomfort(disc),
            "fairness": metrics.fairness(disc),
            "relative_sigma_reduction": metrics.relative_reduction(sigma, c_sigma),
            "relative_cost_reduction": metrics.relative_reduction(cost, c_cost),
            "control_sigma": c_sigma,
            "control_cost": c_cost,
            "control_peak": c_peak,
            "discomfort_plan1": metrics.system_discomfort(low),
            "discomfort_planv": metrics.system_discomfort(high),
            "fairness_plan1": metrics.fairness(low),
            "fairness_planv": metrics.fairness(high),
        })
        curves.append(curve)
        selections.append({k: v + 1 for k, v in picks.items()})
        log.info("repetition %d: sigma %.3f (control %.3f)", rep, sigma, c_sigma)

    distribution = metrics.plan_selection_distribution(
        (list(sel.values()) for sel in selections), config.v_max
    )
    metadata = {
        "seed": config.seed,
        "seed_mixing": SEED_MIXING,
        "repetition_seeds": " ".join(str(r["seed"]) for r in rows),
        **{f.name: getattr(config, f.name) for f in fields(config) if f.name != "seed"},
    }
    return ExperimentResult(config, rows, control, curves, selections, distribution, price, metadata)
