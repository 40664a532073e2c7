"""Loss-differential statistics comparing poisoned and clean training runs."""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .victim import LossTrace

CV_MEAN_EPS = 1e-9


class StealthError(ValueError):
    pass


def _values(trace) -> np.ndarray:
    arr = trace.losses if isinstance(trace, LossTrace) else np.asarray(trace, dtype=np.float64)
    return np.asarray(arr, dtype=np.float64)


def loss_differential(triggered, clean) -> np.ndarray:
    """Per-step ``triggered[t] - clean[t]``; traces must have equal length."""
    a, b = _values(triggered), _values(clean)
    if a.size == 0 or b.size == 0:
        raise StealthError("loss traces must be non-empty")
    if a.shape != b.shape:
        raise StealthError(f"loss traces differ in length ({a.size} vs {b.size})")
    return a - b


def variance(series) -> float:
    """Population variance (divides by N)."""
    x = np.asarray(series, dtype=np.float64)
    if x.size == 0:
        raise StealthError("variance of an empty series")
    return float(np.mean((x - x.mean()) ** 2))


def coefficient_of_variation(series) -> float:
    """Signed ratio of population standard deviation to mean.

    Its absolute value is the usual sigma/|mean|; the sign follows the mean,
    so a negative value means the first trace ran below the second.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.size == 0:
        raise StealthError("coefficient of variation of an empty series")
    mean = float(x.mean())
    if abs(mean) < CV_MEAN_EPS:
        raise StealthError(f"coefficient of variation undefined: |mean| = {abs(mean):.3g} < {CV_MEAN_EPS}")
    return math.sqrt(variance(x)) / mean


@dataclass(frozen=True)
class DifferentialReport:
    series: np.ndarray
    mean: float
    variance: float
    cv: float | None

    @property
    def cv_defined(self) -> bool:
        return self.cv is not None

    def to_dict(self) -> dict:
        return {
            "n_steps": int(self.series.size),
            "mean": self.mean,
            "variance": self.variance,
            "std": math.sqrt(self.variance),
            "cv": self.cv,
            "cv_defined": self.cv_defined,
        }

    def write_json(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_series_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "loss_differential"])
            for step, v in enumerate(self.series):
                w.writerow([step, repr(float(v))])


def summarize(triggered, clean) -> DifferentialReport:
    """Differential series with its mean, variance and signed CV.

    ``cv`` is ``None`` when the mean differential is too close to zero for
    the ratio to be meaningful.
    """
    series = loss_differential(triggered, clean)
    try:
        cv = coefficient_of_variation(series)
    except StealthError:
        cv = None
    return DifferentialReport(series, float(series.mean()), variance(series), cv)
