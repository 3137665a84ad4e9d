"""Local generation of alternative charging plans for one vehicle.

The historic SoC signal is scanned for flexibility windows: stretches where the
vehicle is parked and its SoC does not fall. Each window is cut into charging
slots that can hold a full recharge, slots are ranked by usage likelihood, and
plan ``j`` spreads the charging intervals over the ``j`` least likely slots of
every window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from evplan.evmodel import EvModel, SocSignal


class PlanGenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class FlexibilityWindow:
    """Parked stretch covering plan steps ``[start, end)``."""

    start: int
    end: int
    soc_at_start: float
    index: int = 0

    @property
    def size(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class ChargingSlot:
    window: int
    ordinal: int  # 1-based position inside the window
    start: int
    end: int
    rank: int = 0  # 0 = lowest usage likelihood

    @property
    def size(self) -> int:
        return self.end - self.start


@dataclass(frozen=True, eq=False)
class DemandPlan:
    values: np.ndarray  # kW per step
    plan_index: int  # 0-based
    discomfort: float
    planned_soc: SocSignal | None = None


@dataclass(eq=False)
class PlanSet:
    agent_id: str
    plans: list[DemandPlan] = field(default_factory=list)

    @property
    def v(self) -> int:
        return len(self.plans)

    def matrix(self) -> np.ndarray:
        return np.vstack([p.values for p in self.plans])


def charge_time(model: EvModel, soc_at_start: float, resolution: float = 1.0) -> int:
    """Steps needed to charge from ``soc_at_start`` to full, rounded up."""
    if not 0.0 <= soc_at_start <= 1.0:
        raise ValueError("soc_at_start must lie in [0, 1]")
    hours = (1.0 - soc_at_start) * model.battery_capacity / model.charge_rate
    # guard against 218.00000000000003 style overshoot before ceiling
    return int(math.ceil(round(hours * 60.0 / resolution, 9)))


def compute_windows(signal: SocSignal, model: EvModel) -> list[FlexibilityWindow]:
    """Find flexibility windows long enough for a full charge.

    A window opens at a strict local minimum of the SoC and runs for as long
    as the SoC keeps from falling. Out-of-range neighbours never match, so no
    window opens at the first or last sample.
    """
    x = signal.values
    horizon = signal.horizon
    windows: list[FlexibilityWindow] = []
    t = 1
    while t < horizon:
        if x[t] < x[t - 1] and x[t] < x[t + 1]:
            start = t
            t += 1
            while t < horizon and x[t + 1] >= x[t]:
                t += 1
            needed = charge_time(model, float(x[start]), signal.resolution)
            if t - start >= needed:
                windows.append(FlexibilityWindow(start, t, float(x[start]), len(windows)))
        else:
            t += 1
    return windows


def slot_counts(
    windows: Sequence[FlexibilityWindow], model: EvModel, v_max: int, resolution: float = 1.0
) -> list[tuple[int, int]]:
    """``(slot count, slot size)`` for every window.

    A window holds as many charge-time slots as fit, capped at ``v_max``. When
    the cap applies the window is split evenly into ``v_max`` slots instead.
    """
    if v_max < 1:
        raise ValueError("v_max must be at least 1")
    out = []
    for w in windows:
        size = charge_time(model, w.soc_at_start, resolution)
        count = w.size // size
        if count >= v_max:
            count = v_max
            size = w.size // v_max
        out.append((max(count, 1), size))
    return out


def compute_slots(window: FlexibilityWindow, count: int, slot_size: int) -> list[ChargingSlot]:
    """Consecutive slots from the window start; the last one absorbs the remainder."""
    if count < 1:
        raise ValueError("count must be at least 1")
    slots = []
    for o in range(1, count + 1):
        start = window.start + (o - 1) * slot_size
        end = window.start + o * slot_size if o < count else window.end
        slots.append(ChargingSlot(window.index, o, start, end))
    return slots


def rank_slots(slots: Sequence[ChargingSlot], likelihood: np.ndarray) -> list[ChargingSlot]:
    """Order slots by mean usage likelihood, earliest first on ties."""
    lam = np.asarray(likelihood, dtype=float)
    keyed = sorted(slots, key=lambda s: (float(lam[s.start:s.end].mean()), s.start))
    return [
        ChargingSlot(s.window, s.ordinal, s.start, s.end, rank)
        for rank, s in enumerate(keyed)
    ]


def discomfort(soc: np.ndarray | SocSignal, likelihood: np.ndarray) -> float:
    """Mean of ``(1 - SoC) * likelihood`` over the horizon.

    A boundary signal of length ``T + 1`` is paired with the likelihood of the
    step ending at each boundary, i.e. samples ``1..T``.
    """
    x = soc.values if isinstance(soc, SocSignal) else np.asarray(soc, dtype=float)
    lam = np.asarray(likelihood, dtype=float)
    if x.size == lam.size + 1:
        x = x[1:]
    if x.size != lam.size:
        raise ValueError("SoC and likelihood horizons differ")
    return float(np.dot(1.0 - x, lam) / lam.size)


def plan_discomfort(plan: DemandPlan, likelihood: np.ndarray) -> float:
    if plan.planned_soc is None:
        raise ValueError("plan carries no planned SoC")
    return discomfort(plan.planned_soc, likelihood)


def demand_from_soc(soc: np.ndarray, power: float) -> np.ndarray:
    """Grid draw per step: ``power`` wherever SoC strictly rises, else 0."""
    x = np.asarray(soc, dtype=float)
    return np.where(x[1:] > x[:-1], power, 0.0)


def control_plan(signal: SocSignal, model: EvModel, likelihood: np.ndarray) -> DemandPlan:
    """The observed charge-on-arrival behaviour as a single plan."""
    values = demand_from_soc(signal.values, model.charge_power)
    return DemandPlan(values, 0, discomfort(signal, likelihood), signal)


def place_intervals(
    slots: Sequence[ChargingSlot],
    n_intervals: int,
    interval: int,
    needed_steps: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Charging steps for ``n_intervals`` intervals placed inside ``slots``.

    Interval starts are drawn uniformly without replacement from the
    interval-aligned grid of all given slots. When the full grid cells cannot
    hold every interval, all full cells are used and the remainder goes to the
    trailing partial cells, largest first.
    """
    full: list[int] = []
    tails: list[tuple[int, int]] = []
    for slot in slots:
        cells = list(range(slot.start, slot.end - interval + 1, interval))
        full.extend(cells)
        tail = slot.start + len(cells) * interval
        if tail < slot.end:
            tails.append((tail, slot.end))
    if len(full) >= n_intervals:
        starts = rng.choice(np.asarray(full), size=n_intervals, replace=False)
        pieces = [np.arange(s, s + interval) for s in starts]
    else:
        tails.sort(key=lambda c: (c[0] - c[1], c[0]))
        extra = tails[: n_intervals - len(full)]
        pieces = [np.arange(s, s + interval) for s in full] + [np.arange(a, b) for a, b in extra]
    chosen = np.unique(np.concatenate(pieces)) if pieces else np.empty(0, dtype=int)
    if chosen.size < needed_steps:
        raise PlanGenerationError(
            f"only {chosen.size} charging steps fit in the chosen slots, {needed_steps} needed"
        )
    return chosen


def simulate_plan(signal: SocSignal, charging: np.ndarray, model: EvModel) -> np.ndarray:
    """SoC trajectory when charging only at the given steps.

    Consumption follows the seed signal's falls; charging adds the model's
    per-step gain and stops at full.
    """
    x = signal.values
    horizon = signal.horizon
    gain = model.charge_rate * signal.step_hours / model.battery_capacity
    charge_mask = np.zeros(horizon, dtype=bool)
    charge_mask[charging] = True
    drop = np.minimum(np.diff(x), 0.0)
    out = np.empty(horizon + 1)
    out[0] = x[0]
    for t in range(horizon):
        if charge_mask[t]:
            out[t + 1] = min(1.0, out[t] + gain)
        else:
            out[t + 1] = max(0.0, out[t] + drop[t])
    return out


def generate_plans(
    signal: SocSignal,
    model: EvModel,
    likelihood: np.ndarray,
    interval: int,
    v_max: int,
    seed: int,
    agent_id: str = "",
) -> PlanSet:
    """Generate the vehicle's plan set.

    Plan ``j`` (0-based) uses the ``j + 1`` least likely slots of every window,
    fewer when a window has fewer slots. Interval placement is seeded per
    ``(seed, window, slots used)``, so plans sharing a slot set in a window
    charge identically there. A vehicle without windows gets one plan that
    never charges.
    """
    if interval < 1:
        raise ValueError("interval must be at least 1")
    lam = np.asarray(likelihood, dtype=float)
    if lam.size != signal.horizon:
        raise ValueError("likelihood horizon differs from the SoC signal")
    windows = compute_windows(signal, model)
    specs = slot_counts(windows, model, v_max, signal.resolution)
    ranked = [
        rank_slots(compute_slots(w, count, size), lam)
        for w, (count, size) in zip(windows, specs)
    ]
    v = max((count for count, _ in specs), default=1)

    plans = []
    for j in range(v):
        parts = []
        for w, slots in zip(windows, ranked):
            used = min(j + 1, len(slots))
            needed = charge_time(model, w.soc_at_start, signal.resolution)
            rng = np.random.default_rng([seed, w.index, used])
            parts.append(
                place_intervals(slots[:used], math.ceil(needed / interval), interval, needed, rng)
            )
        charging = np.concatenate(parts) if parts else np.empty(0, dtype=int)
        soc = simulate_plan(signal, charging, model)
        values = demand_from_soc(soc, model.charge_power)
        planned = SocSignal(soc, signal.resolution)
        plans.append(DemandPlan(values, j, discomfort(planned, lam), planned))
    return PlanSet(agent_id, plans)
