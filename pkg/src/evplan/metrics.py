"""Robustness, discomfort and fairness measurements of a charging outcome."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class RunMetrics:
    sigma: float
    cost: float
    peak_power: float
    mean_discomfort: float
    fairness: float
    relative_sigma_reduction: float
    relative_cost_reduction: float

    def as_dict(self) -> dict:
        return asdict(self)


def _nonempty(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("need at least one value")
    return arr


def system_discomfort(discomforts: Sequence[float]) -> float:
    return float(_nonempty(discomforts).mean())


def fairness(discomforts: Sequence[float]) -> float:
    """One minus the population standard deviation of the discomforts."""
    return float(1.0 - _nonempty(discomforts).std())


def curve_metrics(curve, price, step_hours: float = 1 / 60) -> tuple[float, float, float]:
    """``(sigma, cost, peak)`` of a demand curve in kW against a USD/kWh price."""
    curve = np.asarray(curve, dtype=float)
    price = np.asarray(price, dtype=float)
    if curve.shape != price.shape:
        raise ValueError("curve and price horizons differ")
    return float(curve.std()), float(np.dot(curve, price) * step_hours), float(curve.max())


def relative_reduction(run: float, control: float) -> float:
    if control == 0:
        raise ValueError("control value is zero")
    return (control - run) / control


def plan_selection_distribution(selections: Iterable[Sequence[int]], v: int) -> np.ndarray:
    """Per-plan selection frequency, averaged over repetitions.

    ``selections`` yields one sequence of 1-based plan indices per repetition.
    """
    per_rep = []
    for picks in selections:
        picks = np.asarray(picks, dtype=int)
        if picks.size == 0:
            continue
        if picks.min() < 1 or picks.max() > v:
            raise ValueError(f"plan indices must lie in 1..{v}")
        per_rep.append(np.bincount(picks - 1, minlength=v) / picks.size)
    if not per_rep:
        return np.zeros(v)
    return np.mean(per_rep, axis=0)
