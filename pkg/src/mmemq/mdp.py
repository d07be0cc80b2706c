# Finite-MDP primitives: Q-tables, transition tensors, the tabular Q-learning
# update, epsilon-greedy exploration, and exact solvers used as oracles.
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ROW_SUM_TOL = 1e-9


class MdpError(ValueError):
    pass


@dataclass
class Sample:
    s: int
    a: int
    s_next: int
    cost: float

    def __post_init__(self):
        if not np.isfinite(self.cost) or self.cost < 0.0:
            raise MdpError(f"sample cost must be finite and >= 0, got {self.cost}")


@dataclass
class QTable:
    """Dense action-value table of shape (n_states, n_actions)."""

    values: np.ndarray
    gamma: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise MdpError("Q-table must be 2-D (states x actions)")
        if not 0.0 <= self.gamma < 1.0:
            raise MdpError(f"discount must lie in [0,1), got {self.gamma}")

    @property
    def n_states(self) -> int:
        return self.values.shape[0]

    @property
    def n_actions(self) -> int:
        return self.values.shape[1]

    def copy(self) -> "QTable":
        return QTable(self.values.copy(), self.gamma)


def validate_stochastic(probs: np.ndarray, tol: float = ROW_SUM_TOL) -> np.ndarray:
    """Check a (S, A, S) tensor has probability rows; returns the array."""
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 3 or probs.shape[0] != probs.shape[2]:
        raise MdpError(f"transition tensor must have shape (S, A, S), got {probs.shape}")
    if np.any(probs < -tol) or np.any(probs > 1.0 + tol):
        raise MdpError("transition probabilities outside [0, 1]")
    rowsums = probs.sum(axis=2)
    if not np.allclose(rowsums, 1.0, atol=tol, rtol=0.0):
        worst = float(np.abs(rowsums - 1.0).max())
        raise MdpError(f"transition rows must sum to 1 (worst deviation {worst:.3e})")
    return probs


@dataclass
class TransitionTensor:
    """Row-stochastic (state, action, next-state) probability tensor."""

    probs: np.ndarray

    def __post_init__(self):
        self.probs = validate_stochastic(self.probs)

    @property
    def n_states(self) -> int:
        return self.probs.shape[0]

    @property
    def n_actions(self) -> int:
        return self.probs.shape[1]


def masked_min(row: np.ndarray, mask: np.ndarray | None = None) -> float:
    if mask is None:
        return float(np.min(row))
    valid = np.flatnonzero(mask)
    if valid.size == 0:
        raise MdpError("state has no valid action")
    return float(np.min(row[valid]))


def masked_argmin(row: np.ndarray, mask: np.ndarray | None = None) -> int:
    """Argmin with ties broken to the lowest action index."""
    if mask is None:
        return int(np.argmin(row))
    valid = np.flatnonzero(mask)
    if valid.size == 0:
        raise MdpError("state has no valid action")
    return int(valid[np.argmin(row[valid])])


def q_update(
    table: QTable,
    sample: Sample,
    alpha: float,
    next_mask: np.ndarray | None = None,
) -> QTable:
    """One tabular Q-learning step on the sampled (s, a) entry.

    table[s,a] <- (1-a)*table[s,a] + a*(c + gamma * min_a' table[s',a']).
    The min ranges over valid actions of s' when a mask is given.
    """
    if not 0.0 < alpha <= 1.0:
        raise MdpError(f"learning rate must lie in (0,1], got {alpha}")
    v = table.values
    if not (0 <= sample.s < v.shape[0] and 0 <= sample.s_next < v.shape[0]):
        raise IndexError("state index out of range")
    if not 0 <= sample.a < v.shape[1]:
        raise IndexError("action index out of range")
    if not np.isfinite(sample.cost):
        raise MdpError("non-finite cost in q_update")
    target = sample.cost + table.gamma * masked_min(v[sample.s_next], next_mask)
    v[sample.s, sample.a] = (1.0 - alpha) * v[sample.s, sample.a] + alpha * target
    if not np.isfinite(v[sample.s, sample.a]):
        raise MdpError("q_update produced a non-finite entry")
    return table


def epsilon_greedy(
    table: QTable,
    s: int,
    zeta: float,
    rng: np.random.Generator,
    mask: np.ndarray | None = None,
) -> int:
    """Pick a valid action: random with probability zeta, else greedy argmin."""
    if not 0.0 <= zeta <= 1.0:
        raise MdpError(f"exploration probability must lie in [0,1], got {zeta}")
    row = table.values[s]
    if mask is None:
        if zeta > 0.0 and rng.random() < zeta:
            return int(rng.integers(row.shape[0]))
        return int(np.argmin(row))
    valid = np.flatnonzero(mask)
    if valid.size == 0:
        raise MdpError(f"state {s} has no valid action")
    if zeta > 0.0 and rng.random() < zeta:
        return int(valid[rng.integers(valid.size)])
    return int(valid[np.argmin(row[valid])])


def value_iteration(
    P: TransitionTensor | np.ndarray,
    costs: np.ndarray,
    gamma: float,
    tol: float = 1e-9,
    valid_mask: np.ndarray | None = None,
    max_iter: int = 2_000_000,
) -> QTable:
    """Exact Q* by Bellman iteration; returned residual is <= tol.

    Q(s,a) <- c(s,a) + gamma * sum_s' P(s,a,s') min_a' Q(s',a').
    Invalid (s,a) entries (mask False) are pinned to a large constant and
    excluded from the inner min.
    """
    if isinstance(P, TransitionTensor):
        probs = P.probs
    else:
        probs = validate_stochastic(P)
    costs = np.asarray(costs, dtype=float)
    if tol <= 0:
        raise MdpError("tolerance must be positive")
    n_s, n_a = costs.shape
    big = float(np.max(np.abs(costs))) / max(1e-12, 1.0 - gamma) * 10.0 + 1.0
    q = np.zeros((n_s, n_a))
    for _ in range(max_iter):
        if valid_mask is None:
            w = q.min(axis=1)
        else:
            w = np.where(valid_mask, q, np.inf).min(axis=1)
        q_new = costs + gamma * probs @ w
        if valid_mask is not None:
            q_new = np.where(valid_mask, q_new, big)
        delta = float(np.max(np.abs(q_new - q)))
        q = q_new
        if delta <= tol:
            break
    else:
        raise MdpError("value iteration failed to converge")
    return QTable(q, gamma)


def greedy_policy(table: QTable, valid_mask: np.ndarray | None = None) -> np.ndarray:
    """Per-state argmin with lowest-index tie-break."""
    v = table.values
    if valid_mask is None:
        return np.argmin(v, axis=1).astype(np.int64)
    out = np.empty(v.shape[0], dtype=np.int64)
    for s in range(v.shape[0]):
        out[s] = masked_argmin(v[s], valid_mask[s])
    return out


def estimate_ptt(samples, n_states: int, n_actions: int) -> TransitionTensor:
    """Empirical transition tensor by count averaging; unvisited rows uniform."""
    counts = np.zeros((n_states, n_actions, n_states))
    for smp in samples:
        counts[smp.s, smp.a, smp.s_next] += 1.0
    return TransitionTensor(normalize_counts(counts))


def normalize_counts(counts: np.ndarray) -> np.ndarray:
    """Counts -> row-stochastic probabilities, uniform where a row is empty."""
    n_states = counts.shape[0]
    totals = counts.sum(axis=2, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        probs = counts / totals
    probs = np.where(totals > 0, probs, 1.0 / n_states)
    return probs


@dataclass
class PttEstimator:
    """Incremental transition-count accumulator for one agent."""

    n_states: int
    n_actions: int
    counts: np.ndarray = field(init=False)

    def __post_init__(self):
        self.counts = np.zeros((self.n_states, self.n_actions, self.n_states))

    def add(self, s, a, s_next) -> None:
        np.add.at(self.counts, (s, a, s_next), 1.0)

    def probs(self) -> np.ndarray:
        return normalize_counts(self.counts)
