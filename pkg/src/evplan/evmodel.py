"""Vehicle catalog, trip records and the signals derived from them.

A vehicle's history is a list of trips. From it we build the state-of-charge
(SoC) signal a vehicle would show if its driver plugged in at every stop, and
the likelihood that the vehicle is in use at each timestep.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.ndimage import uniform_filter1d

# kWh per gallon of gasoline equivalent (US DOE)
KWH_PER_GALLON = 33.705
HIGHWAY_SPEED_MPH = 60.0
DESTINATIONS = ("home", "work", "school", "other")


class InfeasibleTripError(ValueError):
    """A trip needs more energy than the battery holds at departure."""

    def __init__(self, message: str, vehicle_id: str | None = None):
        super().__init__(message)
        self.vehicle_id = vehicle_id


@dataclass(frozen=True)
class EvModel:
    name: str
    mpg_city: float
    mpg_highway: float
    battery_capacity: float  # kWh
    charge_rate: float  # kW
    market_share: float = 1.0

    def __post_init__(self):
        for field in ("mpg_city", "mpg_highway", "battery_capacity", "charge_rate"):
            value = getattr(self, field)
            if not math.isfinite(value) or value <= 0:
                raise ValueError(f"{self.name}: {field} must be positive, got {value}")
        if not 0.0 <= self.market_share <= 1.0:
            raise ValueError(f"{self.name}: market_share must lie in [0, 1]")

    @property
    def charge_power(self) -> float:
        """Grid draw while charging (kW). Equal to the charge rate."""
        return self.charge_rate


@dataclass(frozen=True)
class TripRecord:
    vehicle_id: str
    start: int
    end: int
    avg_speed: float  # mph
    destination: str = "other"

    def __post_init__(self):
        if self.end <= self.start:
            raise ValueError(f"trip of {self.vehicle_id} ends before it starts")
        if not math.isfinite(self.avg_speed) or self.avg_speed < 0:
            raise ValueError(f"trip of {self.vehicle_id} has invalid speed {self.avg_speed}")
        if self.destination not in DESTINATIONS:
            raise ValueError(f"unknown destination {self.destination!r}")


@dataclass(frozen=True, eq=False)
class SocSignal:
    """SoC at timestep boundaries 0..T, so ``len(values) == T + 1``."""

    values: np.ndarray
    resolution: float = 1.0  # minutes per timestep

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size < 2:
            raise ValueError("SoC signal needs at least two samples")
        if np.any(values < 0.0) or np.any(values > 1.0):
            raise ValueError("SoC values must lie in [0, 1]")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def horizon(self) -> int:
        return self.values.size - 1

    @property
    def step_hours(self) -> float:
        return self.resolution / 60.0

    def __getitem__(self, item):
        return self.values[item]

    def __len__(self):
        return self.values.size


def validate_catalog(catalog: Sequence[EvModel]) -> None:
    if not catalog:
        raise ValueError("catalog is empty")
    total = sum(m.market_share for m in catalog)
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"market shares sum to {total}, expected 1")


def load_catalog(path: str | Path | None = None) -> list[EvModel]:
    """Read a catalog CSV. Without a path, the bundled five-model catalog."""
    if path is None:
        text = resources.files("evplan.data").joinpath("catalog.csv").read_text()
    else:
        text = Path(path).read_text()
    rows = csv.DictReader(text.splitlines())
    catalog = []
    for lineno, row in enumerate(rows, start=2):
        try:
            catalog.append(
                EvModel(
                    name=row["name"],
                    mpg_city=float(row["mpg_city"]),
                    mpg_highway=float(row["mpg_highway"]),
                    battery_capacity=float(row["battery_capacity"]),
                    charge_rate=float(row["charge_rate"]),
                    market_share=float(row["market_share"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"catalog row {lineno}: {exc}") from exc
    validate_catalog(catalog)
    return catalog


def trip_energy(speed: float, duration: float, model: EvModel, kwh_per_gallon: float = KWH_PER_GALLON) -> float:
    """Energy (kWh) drawn by a trip at average ``speed`` mph lasting ``duration`` hours."""
    if not (math.isfinite(speed) and math.isfinite(duration)):
        raise ValueError("speed and duration must be finite")
    if speed < 0 or duration <= 0:
        raise ValueError("need speed >= 0 and duration > 0")
    efficiency = model.mpg_city if speed <= HIGHWAY_SPEED_MPH else model.mpg_highway
    return speed * duration * kwh_per_gallon / efficiency


def build_soc_profile(
    trips: Sequence[TripRecord],
    model: EvModel,
    horizon: int,
    initial_soc: float = 1.0,
    resolution: float = 1.0,
    kwh_per_gallon: float = KWH_PER_GALLON,
) -> SocSignal:
    """SoC over ``horizon`` steps when the driver charges at every stop.

    SoC falls linearly across each trip and otherwise rises at the model's
    charge rate until full. Trips clipped by the horizon lose energy in
    proportion. Raises :class:`InfeasibleTripError` if SoC would go negative.
    """
    if not 0.0 <= initial_soc <= 1.0:
        raise ValueError("initial_soc must lie in [0, 1]")
    if horizon < 1:
        raise ValueError("horizon must be positive")
    step_h = resolution / 60.0
    gain = model.charge_rate * step_h / model.battery_capacity

    soc = np.empty(horizon + 1)
    soc[0] = initial_soc
    t = 0

    def charge(until: int) -> None:
        nonlocal t
        if until > t:
            k = np.arange(1, until - t + 1)
            soc[t + 1:until + 1] = np.minimum(1.0, soc[t] + gain * k)
            t = until

    last_end = None
    for trip in trips:
        if last_end is not None and trip.start < last_end:
            raise ValueError(f"trips of {trip.vehicle_id} overlap or are unsorted")
        last_end = trip.end
        lo, hi = max(trip.start, 0), min(trip.end, horizon)
        if hi <= lo:
            continue
        steps = trip.end - trip.start
        share = trip_energy(trip.avg_speed, steps * step_h, model, kwh_per_gallon) / model.battery_capacity
        charge(lo)
        # SoC falls linearly; steps clipped off the front were already driven
        done = np.arange(lo - trip.start + 1, hi - trip.start + 1)
        ramp = soc[lo] - share * (done - (lo - trip.start)) / steps
        if ramp[-1] < 0.0:
            if ramp[-1] < -1e-9:
                raise InfeasibleTripError(
                    f"vehicle {trip.vehicle_id}: SoC drops below zero during trip at step {trip.start}",
                    trip.vehicle_id,
                )
            ramp = np.maximum(ramp, 0.0)
        soc[lo + 1:hi + 1] = ramp
        t = hi
    charge(horizon)
    return SocSignal(soc, resolution)


def in_transit(trips: Iterable[TripRecord], span: int) -> np.ndarray:
    """Boolean per-step indicator of a vehicle being on the road."""
    moving = np.zeros(span, dtype=bool)
    for trip in trips:
        lo, hi = max(trip.start, 0), min(trip.end, span)
        if hi > lo:
            moving[lo:hi] = True
    return moving


def usage_likelihood(
    trips: Sequence[TripRecord],
    horizon: int,
    periods: int = 1,
    smoothing: int = 60,
) -> np.ndarray:
    """Likelihood of the vehicle being in use at each of ``horizon`` steps.

    History covering ``periods`` consecutive horizons is folded onto one
    horizon and the in-transit frequency is taken per step. The result is
    smoothed by a centered, wrap-around moving average of width ``smoothing``.
    """
    if horizon <= 0 or periods <= 0:
        raise ValueError("horizon and periods must be positive")
    moving = in_transit(trips, horizon * periods).reshape(periods, horizon)
    freq = moving.mean(axis=0)
    if smoothing > 1:
        freq = uniform_filter1d(freq, size=smoothing, mode="wrap")
    return np.clip(freq, 0.0, 1.0)


def apportion(n: int, shares: Sequence[float]) -> list[int]:
    """Largest-remainder apportionment of ``n`` items; ties go to the earlier entry."""
    quotas = [n * s for s in shares]
    counts = [math.floor(q) for q in quotas]
    leftover = n - sum(counts)
    order = sorted(range(len(shares)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:leftover]:
        counts[i] += 1
    return counts


def assign_models(n: int, catalog: Sequence[EvModel], seed: int) -> list[EvModel]:
    """Split ``n`` vehicles over the catalog by market share, in seeded order."""
    if n <= 0:
        raise ValueError("n must be positive")
    validate_catalog(catalog)
    counts = apportion(n, [m.market_share for m in catalog])
    fleet = [model for model, count in zip(catalog, counts) for _ in range(count)]
    order = np.random.default_rng(seed).permutation(n)
    return [fleet[i] for i in order]
