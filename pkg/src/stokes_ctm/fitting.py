"""Least-squares fits of exponential cost models on log scale."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LinearFit:
    intercept: float
    slope: float
    r2: float
    rss: float
    n: int


def fit_linear(x, y) -> LinearFit:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    X = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    rss = float(resid @ resid)
    tss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - rss / tss if tss > 0 else 1.0
    return LinearFit(float(coef[0]), float(coef[1]), r2, rss, x.size)


@dataclass(frozen=True)
class CostModelReport:
    inv_T: LinearFit
    inv_T4: LinearFit

    @property
    def preferred(self) -> str:
        return "1/T" if self.inv_T.rss < self.inv_T4.rss else "1/T^4"


def fit_cost_models(T, cost) -> CostModelReport:
    """Fit log cost = a + b/T and log cost = a + b/T^4."""
    T = np.asarray(T, dtype=float)
    cost = np.asarray(cost, dtype=float)
    if T.size < 4:
        raise ValueError("need at least 4 horizons to fit cost models")
    if np.any(cost <= 0) or not np.all(np.isfinite(cost)):
        raise ValueError("costs must be finite and positive")
    y = np.log(cost)
    return CostModelReport(fit_linear(1.0 / T, y), fit_linear(1.0 / T**4, y))
