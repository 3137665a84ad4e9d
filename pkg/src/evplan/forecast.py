"""EV adoption curves and projected peak charging power."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import curve_fit


class FitError(RuntimeError):
    pass


@dataclass(frozen=True)
class AdoptionCurve:
    cap: float
    rate: float  # 1/year
    midpoint: float  # calendar year

    def __post_init__(self):
        if self.cap <= 0 or self.rate <= 0:
            raise ValueError("cap and rate must be positive")


@dataclass(frozen=True)
class AdoptionFit:
    curve: AdoptionCurve
    residuals: np.ndarray
    rmse: float


@dataclass(frozen=True)
class ParadigmContribution:
    paradigm: str
    participation: float
    horizon: str  # "daily" or "weekly"
    per_ev_peak: float  # kW per EV

    def __post_init__(self):
        if self.per_ev_peak <= 0:
            raise ValueError("per_ev_peak must be positive")

    @property
    def label(self) -> str:
        if self.paradigm == "control":
            return "control"
        return f"{self.paradigm} {self.participation:.0%} {self.horizon}"


def _logistic(year, cap, rate, midpoint):
    return cap / (1.0 + np.exp(-rate * (np.asarray(year, dtype=float) - midpoint)))


def logistic_sales(curve: AdoptionCurve, year) -> float | np.ndarray:
    """Cumulative vehicles adopted by ``year``."""
    out = _logistic(year, curve.cap, curve.rate, curve.midpoint)
    return float(out) if np.ndim(out) == 0 else out


def initial_guess(years: np.ndarray, sales: np.ndarray) -> tuple[float, float, float]:
    peak = sales.max()
    half = peak / 2.0
    order = np.argsort(years)
    ys, ss = years[order], sales[order]
    above = np.nonzero(ss >= half)[0][0]
    if above == 0:
        midpoint = ys[0]
    else:
        y0, y1, s0, s1 = ys[above - 1], ys[above], ss[above - 1], ss[above]
        midpoint = y0 + (half - s0) * (y1 - y0) / (s1 - s0)
    return 1.1 * peak, 4.0 / (ys[-1] - ys[0]), float(midpoint)


def fit_adoption(years: Sequence[float], sales: Sequence[float], max_iter: int = 10_000) -> AdoptionFit:
    """Least-squares logistic fit with all observations weighted equally."""
    years = np.asarray(years, dtype=float)
    sales = np.asarray(sales, dtype=float)
    if years.size != sales.size:
        raise ValueError("years and sales differ in length")
    if years.size < 3:
        raise FitError(f"need at least 3 observations, got {years.size}")
    if np.ptp(years) == 0:
        raise FitError("observations span a single year")
    p0 = initial_guess(years, sales)
    try:
        params, _ = curve_fit(
            _logistic, years, sales, p0=p0, method="trf",
            x_scale=[p0[0], 1.0, 1.0], xtol=1e-15, ftol=1e-15, gtol=1e-15,
            max_nfev=max_iter,
        )
    except RuntimeError as exc:
        raise FitError(f"logistic fit did not converge from start {p0}: {exc}") from exc
    cap, rate, midpoint = (float(p) for p in params)
    if cap <= 0 or rate <= 0:
        raise FitError(f"fit converged to invalid parameters {params}")
    residuals = sales - _logistic(years, cap, rate, midpoint)
    return AdoptionFit(AdoptionCurve(cap, rate, midpoint), residuals, float(np.sqrt(np.mean(residuals**2))))


def project_peak_power(curve: AdoptionCurve, contribution: ParadigmContribution | float, year) -> float | np.ndarray:
    """Peak charging power (MW) of the whole adopted fleet."""
    rho = contribution.per_ev_peak if isinstance(contribution, ParadigmContribution) else float(contribution)
    return logistic_sales(curve, year) * rho / 1000.0


def read_observations(path: str | Path | None = None) -> tuple[np.ndarray, np.ndarray]:
    """``year,cumulative_sales`` CSV; without a path, the bundled California series."""
    if path is None:
        text = resources.files("evplan.data").joinpath("california_adoption.csv").read_text()
    else:
        text = Path(path).read_text()
    years, sales = [], []
    for lineno, row in enumerate(csv.DictReader(text.splitlines()), start=2):
        try:
            years.append(float(row["year"]))
            sales.append(float(row["cumulative_sales"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"observations row {lineno}: {exc}") from exc
    return np.array(years), np.array(sales)


def peak_table(fleet_size: int = 130) -> list[ParadigmContribution]:
    """Per-EV peak contributions from the bundled 130-EV experiment table."""
    text = resources.files("evplan.data").joinpath("peak_power.csv").read_text()
    return [
        ParadigmContribution(
            row["paradigm"], float(row["participation"]), row["horizon"],
            float(row["peak_kw"]) / fleet_size,
        )
        for row in csv.DictReader(text.splitlines())
    ]


def contribution(paradigm: str, participation: float = 1.0, horizon: str = "daily") -> ParadigmContribution:
    for entry in peak_table():
        if entry.paradigm == paradigm and entry.horizon == horizon and (
            paradigm == "control" or math.isclose(entry.participation, participation)
        ):
            return entry
    raise KeyError(f"no table entry for {paradigm} {participation} {horizon}")
