# Policy / value accuracy metrics against the exact joint solution.
from __future__ import annotations

import numpy as np


def ape(policy: np.ndarray, oracle_policy: np.ndarray) -> float:
    """Average policy error: fraction of joint states whose action differs."""
    policy = np.asarray(policy)
    oracle_policy = np.asarray(oracle_policy)
    if policy.shape != oracle_policy.shape:
        raise ValueError(f"policy shapes differ: {policy.shape} vs {oracle_policy.shape}")
    return float(np.mean(policy != oracle_policy))


def aqd(q: np.ndarray, q_star: np.ndarray, valid: np.ndarray | None = None) -> float:
    """Average Q-function distance: mean squared entrywise gap.

    When a validity mask is given, only valid entries enter the mean
    (invalid associations hold placeholder values on both sides).
    """
    q = np.asarray(q, dtype=float)
    q_star = np.asarray(q_star, dtype=float)
    if q.shape != q_star.shape:
        raise ValueError(f"table shapes differ: {q.shape} vs {q_star.shape}")
    diff = (q - q_star) ** 2
    if valid is None:
        return float(diff.mean())
    return float(diff[valid].mean())


def first_crossing(ts, values, threshold: float) -> int | None:
    """First time index at which the trace drops below the threshold."""
    for t, v in zip(ts, values):
        if v < threshold:
            return int(t)
    return None


def linear_fit_r2(x, y) -> tuple[float, float, float]:
    """Least-squares slope, intercept, and R^2 of y against x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2
