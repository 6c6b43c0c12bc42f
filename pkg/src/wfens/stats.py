"""Resampling error estimates."""
from __future__ import annotations

from typing import Callable

import numpy as np


def jackknife(values: np.ndarray, estimator: Callable[[np.ndarray], float] = np.mean,
              n_blocks: int = 100) -> tuple[float, float]:
    """Blocked delete-one jackknife: returns (full-sample estimate, standard error).

    Blocks are contiguous; ``n_blocks`` is capped at the sample size.
    """
    values = np.asarray(values)
    n = len(values)
    est = float(estimator(values))
    n_blocks = min(n_blocks, n)
    if n_blocks < 2:
        return est, float("nan")
    bounds = np.linspace(0, n, n_blocks + 1).astype(int)
    mask = np.ones(n, dtype=bool)
    reps = np.empty(n_blocks)
    for k in range(n_blocks):
        mask[bounds[k] : bounds[k + 1]] = False
        reps[k] = estimator(values[mask])
        mask[bounds[k] : bounds[k + 1]] = True
    err = np.sqrt((n_blocks - 1) / n_blocks * np.sum((reps - reps.mean()) ** 2))
    return est, float(err)


def weighted_linear_fit(x, y, var):
    """Weighted least squares ``y = a + b x`` with known variances.

    Returns (slope, intercept, covariance of (slope, intercept), chi2).
    """
    x, y, var = (np.asarray(a, dtype=float) for a in (x, y, var))
    w = 1.0 / var
    X = np.column_stack([x, np.ones_like(x)])
    A = X.T @ (w[:, None] * X)
    cov = np.linalg.inv(A)
    slope, intercept = cov @ (X.T @ (w * y))
    chi2 = float(np.sum(w * (y - slope * x - intercept) ** 2))
    return float(slope), float(intercept), cov, chi2
